#include "spillover/monotone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spillover/parallel.hpp"

namespace spillover {

namespace {

constexpr std::uint64_t kBuildStream = 1;
constexpr std::uint64_t kCrtStream = 2;
constexpr std::uint64_t kAggregateStream = 3;
constexpr std::uint64_t kScoreStream = 4;
constexpr std::uint64_t kCandidateStream = 5;

std::vector<bool> resolve_randomizable(const BernoulliDesign& design, const std::vector<bool>& randomizable) {
    if (randomizable.empty()) return design.randomizable();
    if (randomizable.size() != design.size()) throw std::invalid_argument("randomizable mask does not match design");
    return randomizable;
}

void mark_units(std::vector<bool>& mask, const ModuleSet& mset) {
    for (UnitId u : mset.units()) mask[u] = true;
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::Decreasing ? "decreasing" : "increasing"; }

Direction parse_direction(const std::string& name) {
    if (name == "decreasing") return Direction::Decreasing;
    if (name == "increasing") return Direction::Increasing;
    throw std::invalid_argument("direction must be 'decreasing' or 'increasing'");
}

std::vector<double> MonotoneReport::pvals() const {
    std::vector<double> out;
    for (const auto& s : steps) out.push_back(s.result.pval);
    return out;
}

bool MonotoneReport::degenerate_everywhere() const {
    return std::all_of(steps.begin(), steps.end(), [](const StepResult& s) { return s.result.degenerate; });
}

std::vector<double> flip_direction(std::span<const double> y) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = -y[i];
    return out;
}

std::vector<double> expected_contrast_counts(const Network& net, const ExposureSpec& spec,
                                             const BernoulliDesign& design) {
    const std::size_t K = spec.size();
    std::vector<double> level_mass(K);
    std::vector<double> counts(K > 0 ? K - 1 : 0, 0.0);
    std::vector<double> dist;
    for (std::size_t i = 0; i < net.size(); ++i) {
        // Poisson-binomial law of the treated-neighbor count.
        dist.assign(1, 1.0);
        for (UnitId j : net.neighbors(i)) {
            const double p = design.p(j);
            dist.push_back(0.0);
            for (std::size_t c = dist.size() - 1; c > 0; --c) dist[c] = dist[c] * (1.0 - p) + dist[c - 1] * p;
            dist[0] *= 1.0 - p;
        }
        std::fill(level_mass.begin(), level_mass.end(), 0.0);
        for (std::size_t c = 0; c < dist.size(); ++c) {
            const int l = spec.level_of(c);
            if (l != kUnmapped) level_mass[static_cast<std::size_t>(l)] += dist[c];
        }
        for (std::size_t k = 0; k + 1 < K; ++k) counts[k] += level_mass[k] + level_mass[k + 1];
    }
    return counts;
}

std::vector<int> allocate_stages(const std::vector<bool>& randomizable, std::span<const double> shares,
                                 std::uint64_t seed) {
    double total = 0.0;
    for (double a : shares) {
        if (!(a >= 0.0)) throw std::invalid_argument("stage shares must be nonnegative");
        total += a;
    }
    if (total > 1.0 + 1e-12) throw std::invalid_argument("stage shares must sum to at most 1");
    std::vector<UnitId> units;
    for (std::size_t i = 0; i < randomizable.size(); ++i)
        if (randomizable[i]) units.push_back(static_cast<UnitId>(i));
    Rng rng = make_rng(seed, 0x57a9);
    std::shuffle(units.begin(), units.end(), rng);
    std::vector<int> stage(randomizable.size(), 0);
    for (std::size_t t = 0; t < units.size(); ++t) {
        const double q = (static_cast<double>(t) + 0.5) / static_cast<double>(units.size());
        int st = 1;
        double acc = 0.0;
        for (double a : shares) {
            acc += a;
            if (q < acc) break;
            ++st;
        }
        stage[units[t]] = st;
    }
    return stage;
}

MonotoneReport test_monotone(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                             const ObservedData& data, const MonotoneOptions& options) {
    const std::size_t n = net.size();
    const std::size_t K = spec.size();
    if (K < 2) throw std::invalid_argument("the monotone test needs at least two exposure levels");
    data.validate(n);
    if (design.size() != n) throw std::invalid_argument("design size does not match network");
    if (!std::isfinite(design.log_prob(data.z_obs)))
        throw std::invalid_argument("observed assignment has zero probability under the design");
    if (options.module_sets && options.module_sets->size() != K - 1)
        throw std::invalid_argument("expected one module set per contrast");
    const auto randomizable = resolve_randomizable(design, options.randomizable);

    MonotoneReport report;
    report.direction = options.direction;
    report.seed = options.seed;
    report.combiner = options.combiner;

    std::vector<bool> earlier(n, false);     // units of earlier module sets
    std::vector<bool> was_focal(n, false);
    for (std::size_t k = 1; k < K; ++k) {
        StepResult step;
        step.contrast = Contrast{static_cast<int>(k - 1), static_cast<int>(k)};
        const PartialAssignment fixed = pin_units(n, data.z_obs, earlier);
        std::vector<bool> excluded = earlier;
        if (options.relax)
            for (std::size_t i = 0; i < n; ++i)
                if (earlier[i] && !was_focal[i] && data.z_obs[i] == 0) excluded[i] = false;
        if (options.module_sets) {
            step.module_set = (*options.module_sets)[k - 1];
        } else {
            BuildOptions build;
            build.generalized = options.generalized;
            build.focal_pool = options.focal_pool;
            build.stage = options.stage;
            build.order = options.order;
            step.module_set = build_module_set(net, spec, design, randomizable, step.contrast, excluded, fixed,
                                               derive_seed(options.seed, kBuildStream, k), build);
        }
        step.conditioned_units = static_cast<std::size_t>(std::count(earlier.begin(), earlier.end(), true));

        UnitSet training, scope = step.module_set.focal_units();
        for (std::size_t i = 0; i < n; ++i)
            if (earlier[i]) training.push_back(static_cast<UnitId>(i));
        std::vector<double> y = adjust_outcomes(data, options.adjust, training, scope, earlier);
        if (options.direction == Direction::Increasing) y = flip_direction(y);

        CrtOptions crt;
        crt.draws = options.draws;
        crt.seed = derive_seed(options.seed, kCrtStream, k);
        crt.keep_draws = false;
        step.result = test_contrast(net, spec, design, step.module_set, data.z_obs, y, step.contrast, options.stat,
                                    earlier, crt);
        if (step.result.degenerate) step.result.diagnostics.push_back("no active modules for this contrast");

        for (const auto& m : step.module_set.modules)
            for (UnitId f : m.focal) was_focal[f] = true;
        mark_units(earlier, step.module_set);
        report.steps.push_back(std::move(step));
    }

    const auto pvals = report.pvals();
    CombinerSpec comb = options.combiner;
    if (comb.weights.empty() && comb.rule == CombineRule::Stouffer) comb.weights = expected_contrast_counts(net, spec, design);
    if (comb.rule == CombineRule::Stouffer &&
        std::all_of(comb.weights.begin(), comb.weights.end(), [](double w) { return w <= 0.0; }))
        comb.weights.assign(pvals.size(), 1.0);
    report.combiner_weights = comb.weights;
    report.combined_pval = combine(comb, pvals);
    return report;
}

std::vector<ModuleSet> build_module_chain(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                          const std::vector<bool>& randomizable, std::uint64_t seed,
                                          const BuildOptions& build) {
    const std::size_t n = net.size();
    const auto rmask = resolve_randomizable(design, randomizable);
    const PartialAssignment none(n, kFree);
    std::vector<bool> earlier(n, false);
    std::vector<ModuleSet> out;
    for (std::size_t k = 1; k < spec.size(); ++k) {
        Contrast c{static_cast<int>(k - 1), static_cast<int>(k)};
        out.push_back(build_module_set(net, spec, design, rmask, c, earlier, none, derive_seed(seed, kBuildStream, k), build));
        mark_units(earlier, out.back());
    }
    return out;
}

ModuleSetSelection select_module_sets(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                      std::size_t n_candidates, std::size_t M, std::uint64_t seed,
                                      const std::vector<bool>& randomizable, const BuildOptions& build) {
    if (n_candidates < 1) throw std::invalid_argument("need at least one candidate construction");
    const std::size_t n = net.size();
    const PartialAssignment none(n, kFree);
    std::vector<std::vector<ModuleSet>> chains(n_candidates);
    std::vector<double> scores(n_candidates, 0.0);
    parallel_for(n_candidates, [&](std::size_t c) {
        const std::uint64_t cseed = derive_seed(seed, kCandidateStream, c);
        chains[c] = build_module_chain(net, spec, design, randomizable, cseed, build);
        for (std::size_t k = 0; k < chains[c].size(); ++k) {
            // Common random numbers across candidates.
            Rng rng(derive_seed(seed, kScoreStream, k));
            Contrast contrast{static_cast<int>(k), static_cast<int>(k + 1)};
            scores[c] += expected_active_focal_count(chains[c][k], net, spec, design, contrast, none, M, rng);
        }
    });
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_candidates; ++c)
        if (scores[c] > scores[best]) best = c;
    ModuleSetSelection sel;
    sel.module_sets = std::move(chains[best]);
    sel.chosen = best;
    sel.chosen_seed = derive_seed(seed, kCandidateStream, best);
    sel.scores = std::move(scores);
    for (std::size_t c = 0; c < n_candidates; ++c) sel.seeds.push_back(derive_seed(seed, kCandidateStream, c));
    return sel;
}

double aggregate_constructions(std::span<const double> pvals) {
    if (pvals.empty()) throw std::invalid_argument("no p-values to aggregate");
    std::vector<double> sorted(pvals.begin(), pvals.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t idx = (sorted.size() + 1) / 2 - 1;
    return std::min(1.0, 2.0 * sorted[idx]);
}

AggregateResult aggregate_monotone(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                   const ObservedData& data, const MonotoneOptions& options,
                                   std::size_t n_constructions) {
    if (n_constructions < 1) throw std::invalid_argument("need at least one construction");
    AggregateResult out;
    out.pvals.resize(n_constructions);
    out.seeds.resize(n_constructions);
    for (std::size_t c = 0; c < n_constructions; ++c) out.seeds[c] = derive_seed(options.seed, kAggregateStream, c);
    parallel_for(n_constructions, [&](std::size_t c) {
        MonotoneOptions o = options;
        o.seed = out.seeds[c];
        out.pvals[c] = test_monotone(net, spec, design, data, o).combined_pval;
    });
    out.aggregate = aggregate_constructions(out.pvals);
    return out;
}

}  // namespace spillover
