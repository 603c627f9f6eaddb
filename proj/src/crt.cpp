#include "spillover/crt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "spillover/parallel.hpp"

namespace spillover {

bool at_least(double t, double t_obs) {
    if (!std::isfinite(t_obs) || !std::isfinite(t)) return t >= t_obs;
    return t >= t_obs - 1e-9 * std::max(1.0, std::abs(t_obs));
}

double crt_pvalue(std::span<const double> draws, double t_obs) {
    std::size_t count = 0;
    for (double t : draws)
        if (at_least(t, t_obs)) ++count;
    return (1.0 + static_cast<double>(count)) / (1.0 + static_cast<double>(draws.size()));
}

double ModuleDistribution::p_all_high() const {
    double p = 0.0;
    for (std::size_t s = 0; s < probs_.size(); ++s) {
        const auto& pat = patterns_[pattern_of_[s]];
        if (std::all_of(pat.begin(), pat.end(), [](std::uint8_t h) { return h != 0; })) p += probs_[s];
    }
    return p;
}

bool ModuleDistribution::is_uniform_two_point() const {
    if (!enumerated_) return false;
    for (const auto& pat : patterns_) {
        const bool all = std::all_of(pat.begin(), pat.end(), [](std::uint8_t h) { return h != 0; });
        const bool none = std::none_of(pat.begin(), pat.end(), [](std::uint8_t h) { return h != 0; });
        if (!all && !none) return false;
    }
    return true;
}

bool ModuleDistribution::flags(std::span<const std::uint8_t> sub, std::vector<std::uint8_t>& high) const {
    high.resize(focal.size());
    for (std::size_t t = 0; t < focal.size(); ++t) {
        std::size_t c = base_[t];
        for (std::uint32_t idx : links_[t]) c += sub[idx];
        const int level = spec_.level_of(c);
        if (!contrast_.contains(level)) return false;
        high[t] = level == contrast_.high ? 1 : 0;
    }
    return true;
}

void ModuleDistribution::sample(Rng& rng, std::vector<std::uint8_t>& sub, std::vector<std::uint8_t>& high) const {
    const std::size_t m = free_units.size();
    sub.resize(m);
    if (enumerated_) {
        const double u = uniform01(rng) * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        std::size_t s = static_cast<std::size_t>(it - cumulative_.begin());
        if (s >= support_.size()) s = support_.size() - 1;
        for (std::size_t t = 0; t < m; ++t) sub[t] = static_cast<std::uint8_t>((support_[s] >> t) & 1u);
        high = patterns_[pattern_of_[s]];
        return;
    }
    for (std::size_t attempt = 0; attempt < kRejectionBudget; ++attempt) {
        for (std::size_t t = 0; t < m; ++t) sub[t] = uniform01(rng) < free_probs_[t] ? 1 : 0;
        if (flags(sub, high)) return;
    }
    throw std::runtime_error("rejection sampling exceeded its retry budget");
}

ModuleDistribution module_randomization_distribution(const Module& module, const Network& net, const ExposureSpec& spec,
                                                     std::span<const std::uint8_t> z_obs, Contrast contrast,
                                                     const BernoulliDesign& design,
                                                     const std::vector<bool>& conditioning, std::size_t cap) {
    check_contrast(spec, contrast);
    ModuleDistribution d;
    d.contrast_ = contrast;
    d.spec_ = spec;
    for (UnitId f : module.focal)
        if (z_obs[f] == 0 && contrast.contains(exposure(net, spec, z_obs, f))) d.focal.push_back(f);
    if (d.focal.empty()) throw std::invalid_argument("module has no active focal units under z_obs");
    for (UnitId v : module.rand) {
        bool linked = false;
        for (UnitId f : d.focal)
            if (net.adjacent(v, f)) linked = true;
        if (!linked) continue;
        d.rand.push_back(v);
        if (!conditioning[v]) d.free_units.push_back(v);
    }
    std::vector<long> free_index(net.size(), -1);
    for (std::size_t t = 0; t < d.free_units.size(); ++t) free_index[d.free_units[t]] = static_cast<long>(t);
    d.base_.resize(d.focal.size());
    d.links_.resize(d.focal.size());
    for (std::size_t t = 0; t < d.focal.size(); ++t) {
        for (UnitId v : net.neighbors(d.focal[t])) {
            if (free_index[v] >= 0)
                d.links_[t].push_back(static_cast<std::uint32_t>(free_index[v]));
            else
                d.base_[t] += z_obs[v];
        }
    }
    for (UnitId v : d.free_units) d.free_probs_.push_back(design.p(v));

    if (d.free_units.size() > cap || d.free_units.size() >= 32) {
        d.enumerated_ = false;
        return d;
    }
    std::vector<std::uint8_t> high;
    auto support = enumerate_sub_assignments(design, d.free_units, [&](std::span<const std::uint8_t> sub) {
        return d.flags(sub, high);
    }, cap);
    double total = 0.0;
    for (const auto& s : support) total += s.prob;
    if (!(total > 0.0)) throw std::runtime_error("module randomization distribution has zero mass");
    std::map<std::vector<std::uint8_t>, std::uint32_t> pattern_ids;
    double acc = 0.0;
    for (const auto& s : support) {
        std::uint32_t bits = 0;
        for (std::size_t t = 0; t < s.values.size(); ++t) bits |= static_cast<std::uint32_t>(s.values[t]) << t;
        d.flags(s.values, high);
        auto [it, inserted] = pattern_ids.emplace(high, static_cast<std::uint32_t>(d.patterns_.size()));
        if (inserted) d.patterns_.push_back(high);
        d.support_.push_back(bits);
        d.probs_.push_back(s.prob / total);
        acc += s.prob / total;
        d.cumulative_.push_back(acc);
        d.pattern_of_.push_back(it->second);
    }
    return d;
}

RandomizationResult test_contrast(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                  const ModuleSet& mset, std::span<const std::uint8_t> z_obs,
                                  std::span<const double> y, Contrast contrast, const StatSpec& stat,
                                  const std::vector<bool>& conditioning, const CrtOptions& options) {
    check_contrast(spec, contrast);
    if (options.draws < 1) throw std::invalid_argument("number of draws must be at least 1");
    const std::size_t n = net.size();
    if (z_obs.size() != n || y.size() != n || conditioning.size() != n)
        throw std::invalid_argument("test inputs do not match network size");

    std::vector<bool> cond = conditioning;
    if (mset.generalized)
        for (const auto& m : mset.modules)
            for (UnitId f : m.focal) cond[f] = true;

    RandomizationResult result;
    std::vector<ModuleDistribution> dists;
    for (const auto& m : mset.modules) {
        bool active = false;
        for (UnitId f : m.focal)
            if (z_obs[f] == 0 && contrast.contains(exposure(net, spec, z_obs, f))) active = true;
        if (!active) continue;
        try {
            dists.push_back(module_randomization_distribution(m, net, spec, z_obs, contrast, design, cond));
        } catch (const std::runtime_error& e) {
            ++result.dropped_modules;
            result.diagnostics.push_back(std::string("module dropped: ") + e.what());
        }
    }
    if (dists.empty()) {
        result.degenerate = true;
        result.pval = 1.0;
        return result;
    }

    UnitSet focal;
    std::vector<std::size_t> offset;
    for (const auto& d : dists) {
        offset.push_back(focal.size());
        focal.insert(focal.end(), d.focal.begin(), d.focal.end());
        result.active_focal_count += d.focal.size();
    }
    result.active_module_count = dists.size();
    for (UnitId f : focal)
        if (!std::isfinite(y[f])) throw std::invalid_argument("outcome of focal unit " + std::to_string(f) + " is not finite");

    const PreparedStatistic prepared(stat, y, focal);
    std::vector<std::uint8_t> high_obs(focal.size());
    for (std::size_t t = 0; t < focal.size(); ++t)
        high_obs[t] = exposure(net, spec, z_obs, focal[t]) == contrast.high ? 1 : 0;
    result.t_obs = prepared.evaluate(high_obs);

    const std::size_t R = options.draws;
    std::vector<double> draws(R);
    auto run_one = [&](std::size_t r, std::vector<std::uint8_t>& high, std::vector<std::uint8_t>& sub,
                       std::vector<std::uint8_t>& part, Assignment* full) {
        Rng rng = make_rng(options.seed, r);
        for (std::size_t m = 0; m < dists.size(); ++m) {
            dists[m].sample(rng, sub, part);
            std::copy(part.begin(), part.end(), high.begin() + static_cast<long>(offset[m]));
            if (full)
                for (std::size_t t = 0; t < sub.size(); ++t) (*full)[dists[m].free_units[t]] = sub[t];
        }
        draws[r] = prepared.evaluate(high);
    };
    if (options.observer) {
        std::vector<std::uint8_t> high(focal.size()), sub, part;
        Assignment full(z_obs.begin(), z_obs.end());
        for (std::size_t r = 0; r < R; ++r) {
            std::copy(z_obs.begin(), z_obs.end(), full.begin());
            run_one(r, high, sub, part, &full);
            options.observer(r, full);
        }
    } else {
        constexpr std::size_t kBlock = 512;
        const std::size_t blocks = (R + kBlock - 1) / kBlock;
        parallel_for(blocks, [&](std::size_t b) {
            std::vector<std::uint8_t> high(focal.size()), sub, part;
            for (std::size_t r = b * kBlock; r < std::min(R, (b + 1) * kBlock); ++r) run_one(r, high, sub, part, nullptr);
        });
    }
    result.pval = crt_pvalue(draws, result.t_obs);
    if (options.keep_draws) result.draws = std::move(draws);
    return result;
}

}  // namespace spillover
