#include "spillover/modsets.hpp"

#include <algorithm>
#include <iterator>
#include <map>
#include <stdexcept>

namespace spillover {

namespace {

std::vector<bool> eligible_mask(const BernoulliDesign& design, const std::vector<bool>& randomizable) {
    std::vector<bool> out(design.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = randomizable[i] && design.p(i) > 0.0 && design.p(i) < 1.0;
    return out;
}

UnitSet eligible_neighbors(const Network& net, const std::vector<bool>& eligible, std::size_t i) {
    UnitSet out;
    for (UnitId v : net.neighbors(i))
        if (eligible[v]) out.push_back(v);
    return out;
}

// Treated count among neighbors outside the randomizable universe (pinned or always treated).
std::size_t constant_treated(const Network& net, const BernoulliDesign& design, const std::vector<bool>& eligible,
                             const PartialAssignment& fixed, std::size_t i) {
    std::size_t c = 0;
    for (UnitId v : net.neighbors(i)) {
        if (eligible[v]) continue;
        if (fixed[v] != kFree)
            c += fixed[v] ? 1 : 0;
        else if (design.p(v) >= 1.0)
            ++c;
    }
    return c;
}

bool screen_with_mask(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                      const std::vector<bool>& eligible, Contrast contrast, const PartialAssignment& fixed,
                      std::size_t i) {
    if (fixed[i] == 1) return false;
    if (fixed[i] == kFree && design.p(i) >= 1.0) return false;
    const auto b = exposure_bounds(net, spec, i, fixed, eligible, design.probs());
    if (b.uncontrolled > 0) return false;
    return b.none <= contrast.low && b.all >= contrast.high;
}

bool adjacent_to_any(const Network& net, std::size_t u, const UnitSet& units) {
    for (UnitId f : units)
        if (net.adjacent(u, f)) return true;
    return false;
}

}  // namespace

UnitSet ModuleSet::units() const {
    UnitSet out;
    for (const auto& m : modules) {
        out.insert(out.end(), m.focal.begin(), m.focal.end());
        out.insert(out.end(), m.rand.begin(), m.rand.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

UnitSet ModuleSet::focal_units() const {
    UnitSet out;
    for (const auto& m : modules) out.insert(out.end(), m.focal.begin(), m.focal.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::size_t ActiveSets::focal_count() const {
    std::size_t c = 0;
    for (const auto& m : modules) c += m.focal.size();
    return c;
}

bool screen_focal(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                  const std::vector<bool>& randomizable, Contrast contrast, const PartialAssignment& fixed,
                  std::size_t i) {
    return screen_with_mask(net, spec, design, eligible_mask(design, randomizable), contrast, fixed, i);
}

ModuleSet build_module_set(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                           const std::vector<bool>& randomizable, Contrast contrast,
                           const std::vector<bool>& excluded_focal, const PartialAssignment& fixed,
                           std::uint64_t seed, const BuildOptions& options) {
    const std::size_t n = net.size();
    check_contrast(spec, contrast);
    if (design.size() != n || randomizable.size() != n || excluded_focal.size() != n || fixed.size() != n)
        throw std::invalid_argument("module-set inputs do not match network size");
    if (!options.focal_pool.empty() && options.focal_pool.size() != n)
        throw std::invalid_argument("focal pool does not match network size");
    if (!options.stage.empty() && options.stage.size() != n)
        throw std::invalid_argument("stage vector does not match network size");

    const auto eligible = eligible_mask(design, randomizable);
    std::vector<UnitId> candidates;
    std::vector<bool> is_candidate(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (excluded_focal[i]) continue;
        if (!options.focal_pool.empty() && !options.focal_pool[i]) continue;
        if (!screen_with_mask(net, spec, design, eligible, contrast, fixed, i)) continue;
        if (!options.stage.empty() &&
            std::any_of(net.neighbors(i).begin(), net.neighbors(i).end(), [&](UnitId v) {
                return eligible[v] && fixed[v] == kFree && options.stage[v] > contrast.high;
            }))
            continue;
        candidates.push_back(static_cast<UnitId>(i));
        is_candidate[i] = true;
    }
    Rng rng(derive_seed(seed, 0x6d6f64));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    if (options.order == CandidateOrder::FewestFree) {
        std::vector<std::size_t> free_count(n, 0);
        for (UnitId j : candidates)
            for (UnitId v : net.neighbors(j))
                if (eligible[v] && fixed[v] == kFree) ++free_count[j];
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](UnitId a, UnitId b) { return free_count[a] < free_count[b]; });
    }

    ModuleSet mset;
    mset.generalized = options.generalized;
    std::vector<bool> used(n, false);  // member of some module
    std::vector<bool> in_pool = is_candidate;

    std::vector<bool> is_focal(n, false);
    std::vector<long> rand_owner(n, -1);
    std::vector<std::size_t> private_count;

    for (UnitId j : candidates) {
        if (!options.generalized) {
            if (!in_pool[j]) continue;
            Module m;
            m.focal = {j};
            m.rand = eligible_neighbors(net, eligible, j);
            m.uniform = true;
            in_pool[j] = false;
            used[j] = true;
            for (UnitId v : net.neighbors(j)) in_pool[v] = false;
            for (UnitId v : m.rand) {
                in_pool[v] = false;
                used[v] = true;
                if (fixed[v] != kFree) continue;
                for (UnitId u : net.neighbors(v)) in_pool[u] = false;
            }
            mset.modules.push_back(std::move(m));
            continue;
        }
        if (is_focal[j]) continue;
        UnitSet r = eligible_neighbors(net, eligible, j);
        bool ok = true;
        std::size_t priv = 0;
        for (UnitId v : r) {
            if (fixed[v] != kFree) continue;
            if (rand_owner[v] >= 0) ok = false;
            if (!is_focal[v]) ++priv;
        }
        if (!ok || priv == 0) continue;
        if (rand_owner[j] >= 0 && private_count[static_cast<std::size_t>(rand_owner[j])] <= 1) continue;
        if (rand_owner[j] >= 0) --private_count[static_cast<std::size_t>(rand_owner[j])];
        const std::size_t idx = mset.modules.size();
        for (UnitId v : r)
            if (fixed[v] == kFree) rand_owner[v] = static_cast<long>(idx);
        is_focal[j] = true;
        used[j] = true;
        for (UnitId v : r) used[v] = true;
        private_count.push_back(priv);
        mset.modules.push_back(Module{{j}, std::move(r), true});
    }

    if (options.augment && !mset.modules.empty() && options.generalized) {
        using Key = std::pair<UnitSet, std::size_t>;
        std::map<Key, std::size_t> by_key;
        for (std::size_t m = 0; m < mset.modules.size(); ++m) {
            const UnitId j = mset.modules[m].focal.front();
            by_key.emplace(Key{mset.modules[m].rand, constant_treated(net, design, eligible, fixed, j)}, m);
        }
        for (std::size_t u = 0; u < n; ++u) {
            if (!is_candidate[u] || used[u]) continue;
            Key key{eligible_neighbors(net, eligible, u), constant_treated(net, design, eligible, fixed, u)};
            auto it = by_key.find(key);
            if (it == by_key.end()) continue;
            Module& m = mset.modules[it->second];
            if (adjacent_to_any(net, u, m.focal)) continue;
            m.focal.push_back(static_cast<UnitId>(u));
            std::sort(m.focal.begin(), m.focal.end());
            used[u] = true;
        }
    } else if (options.augment && !mset.modules.empty()) {
        // An unused candidate joins the module owning all of its free randomization units; its
        // pinned neighbors join the module as conditioned units.
        std::vector<long> owner(n, -1);
        for (std::size_t m = 0; m < mset.modules.size(); ++m)
            for (UnitId v : mset.modules[m].rand)
                if (fixed[v] == kFree) owner[v] = static_cast<long>(m);
        for (std::size_t u = 0; u < n; ++u) {
            if (!is_candidate[u] || used[u]) continue;
            const UnitSet r = eligible_neighbors(net, eligible, u);
            long m_idx = -1;
            bool ok = true;
            for (UnitId v : r) {
                if (fixed[v] != kFree) continue;
                if (owner[v] < 0 || (m_idx >= 0 && owner[v] != m_idx)) ok = false;
                m_idx = owner[v];
            }
            if (!ok || m_idx < 0) continue;
            Module& m = mset.modules[static_cast<std::size_t>(m_idx)];
            if (adjacent_to_any(net, u, m.focal)) continue;
            if (r != eligible_neighbors(net, eligible, m.focal.front())) m.uniform = false;
            m.focal.insert(std::upper_bound(m.focal.begin(), m.focal.end(), static_cast<UnitId>(u)), static_cast<UnitId>(u));
            UnitSet merged;
            std::set_union(m.rand.begin(), m.rand.end(), r.begin(), r.end(), std::back_inserter(merged));
            m.rand = std::move(merged);
            used[u] = true;
        }
    }

    for (const auto& m : mset.modules)
        for (UnitId v : m.rand)
            if (fixed[v] != kFree) mset.conditioned.push_back(v);
    std::sort(mset.conditioned.begin(), mset.conditioned.end());
    mset.conditioned.erase(std::unique(mset.conditioned.begin(), mset.conditioned.end()), mset.conditioned.end());
    return mset;
}

ActiveSets active_sets(const ModuleSet& mset, const Network& net, const ExposureSpec& spec,
                       std::span<const std::uint8_t> z, Contrast contrast) {
    ActiveSets out;
    for (std::size_t m = 0; m < mset.modules.size(); ++m) {
        const Module& mod = mset.modules[m];
        ActiveModule am;
        am.index = m;
        for (UnitId f : mod.focal)
            if (z[f] == 0 && contrast.contains(exposure(net, spec, z, f))) am.focal.push_back(f);
        if (am.focal.empty()) continue;
        for (UnitId v : mod.rand)
            if (adjacent_to_any(net, v, am.focal)) am.rand.push_back(v);
        out.modules.push_back(std::move(am));
    }
    return out;
}

double expected_active_focal_count(const ModuleSet& mset, const Network& net, const ExposureSpec& spec,
                                   const BernoulliDesign& design, Contrast contrast, const PartialAssignment& fixed,
                                   std::size_t M, Rng& rng) {
    if (M == 0) throw std::invalid_argument("draw count must be positive");
    const BernoulliDesign restricted = design.restrict(fixed);
    Assignment z;
    double total = 0.0;
    for (std::size_t r = 0; r < M; ++r) {
        restricted.sample_into(z, rng);
        std::size_t c = 0;
        for (const auto& m : mset.modules)
            for (UnitId f : m.focal)
                if (z[f] == 0 && contrast.contains(exposure(net, spec, z, f))) ++c;
        total += static_cast<double>(c);
    }
    return total / static_cast<double>(M);
}

std::vector<std::string> validate(const ModuleSet& mset, const Network& net, const std::vector<bool>& randomizable) {
    std::vector<std::string> out;
    const std::size_t n = net.size();
    std::vector<bool> conditioned(n, false);
    for (UnitId c : mset.conditioned) conditioned[c] = true;
    auto in_range = [&](const UnitSet& s) {
        return std::all_of(s.begin(), s.end(), [&](UnitId u) { return u < n; });
    };
    for (std::size_t m = 0; m < mset.modules.size(); ++m) {
        const Module& mod = mset.modules[m];
        const std::string tag = "module " + std::to_string(m) + ": ";
        if (!in_range(mod.focal) || !in_range(mod.rand)) {
            out.push_back(tag + "unit id out of range");
            continue;
        }
        if (mod.focal.empty()) out.push_back(tag + "no focal units");
        if (!std::is_sorted(mod.focal.begin(), mod.focal.end()) || !std::is_sorted(mod.rand.begin(), mod.rand.end()))
            out.push_back(tag + "unit sets not sorted");
        for (UnitId f : mod.focal)
            if (std::binary_search(mod.rand.begin(), mod.rand.end(), f)) out.push_back(tag + "focal unit in e_rand");
        for (std::size_t a = 0; a < mod.focal.size(); ++a)
            for (std::size_t b = a + 1; b < mod.focal.size(); ++b)
                if (net.adjacent(mod.focal[a], mod.focal[b])) out.push_back(tag + "adjacent focal units");
        for (UnitId v : mod.rand)
            if (!randomizable[v]) out.push_back(tag + "non-randomizable unit in e_rand");
        for (UnitId f : mod.focal) {
            UnitSet nb;
            for (UnitId v : net.neighbors(f))
                if (randomizable[v]) nb.push_back(v);
            if (!std::includes(mod.rand.begin(), mod.rand.end(), nb.begin(), nb.end()))
                out.push_back(tag + "randomizable neighbor outside e_rand");
            if (mod.uniform && nb != mod.rand) out.push_back(tag + "module flagged uniform but neighborhoods differ");
        }
    }
    // Ownership of non-conditioned units across modules.
    std::vector<long> owner(n, -1);
    std::vector<long> rand_owner(n, -1);
    for (std::size_t m = 0; m < mset.modules.size(); ++m) {
        const Module& mod = mset.modules[m];
        if (!in_range(mod.focal) || !in_range(mod.rand)) continue;
        auto claim = [&](UnitId u, bool as_rand) {
            if (conditioned[u]) return;
            if (!mset.generalized) {
                if (owner[u] >= 0 && owner[u] != static_cast<long>(m)) out.push_back("modules overlap at unit " + std::to_string(u));
                owner[u] = static_cast<long>(m);
            } else if (as_rand) {
                if (rand_owner[u] >= 0 && rand_owner[u] != static_cast<long>(m))
                    out.push_back("randomization sets overlap at unit " + std::to_string(u));
                rand_owner[u] = static_cast<long>(m);
            }
        };
        for (UnitId f : mod.focal) claim(f, false);
        for (UnitId v : mod.rand) claim(v, true);
    }
    if (mset.generalized) {
        std::vector<long> focal_owner(n, -1);
        for (std::size_t m = 0; m < mset.modules.size(); ++m)
            for (UnitId f : mset.modules[m].focal)
                if (f < n) {
                    if (focal_owner[f] >= 0) out.push_back("focal unit " + std::to_string(f) + " in several modules");
                    focal_owner[f] = static_cast<long>(m);
                }
        for (std::size_t m = 0; m < mset.modules.size(); ++m) {
            std::size_t priv = 0;
            for (UnitId v : mset.modules[m].rand) {
                if (v >= n || conditioned[v]) continue;
                if (focal_owner[v] >= 0 && focal_owner[v] != static_cast<long>(m)) continue;
                ++priv;
            }
            if (priv == 0) out.push_back("module " + std::to_string(m) + ": no private randomization units");
        }
    }
    return out;
}

}  // namespace spillover
