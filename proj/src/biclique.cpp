#include "spillover/biclique.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "spillover/parallel.hpp"

namespace spillover {

namespace {

constexpr std::uint64_t kColumnStream = 6;
constexpr std::uint64_t kDecomposeStream = 7;
constexpr std::uint64_t kDrawStream = 8;
constexpr std::uint64_t kInsertStream = 9;
constexpr std::uint64_t kWeightStream = 10;

std::size_t row_of(const UnitSet& units, UnitId u) {
    auto it = std::lower_bound(units.begin(), units.end(), u);
    if (it == units.end() || *it != u) throw std::invalid_argument("unit " + std::to_string(u) + " is not a row");
    return static_cast<std::size_t>(it - units.begin());
}

}  // namespace

NullExposureGraph::NullExposureGraph(const Network& net, const ExposureSpec& spec, Contrast contrast, UnitSet units,
                                     std::vector<Assignment> columns, std::vector<double> weights,
                                     std::vector<ColumnSource> sources)
    : units_(std::move(units)),
      columns_(std::move(columns)),
      weights_(std::move(weights)),
      sources_(std::move(sources)),
      contrast_(contrast) {
    check_contrast(spec, contrast);
    if (weights_.size() != columns_.size() || sources_.size() != columns_.size())
        throw std::invalid_argument("column metadata does not match column count");
    if (!std::is_sorted(units_.begin(), units_.end())) throw std::invalid_argument("row units must be sorted");
    words_ = (units_.size() + 63) / 64;
    bits_.assign(words_ * columns_.size(), 0);
    high_.assign(words_ * columns_.size(), 0);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        const Assignment& z = columns_[c];
        if (z.size() != net.size()) throw std::invalid_argument("column length does not match network size");
        for (std::size_t r = 0; r < units_.size(); ++r) {
            const UnitId i = units_[r];
            if (z[i] != 0) continue;
            const int level = exposure(net, spec, z, i);
            if (!contrast.contains(level)) continue;
            bits_[c * words_ + r / 64] |= std::uint64_t{1} << (r % 64);
            if (level == contrast.high) high_[c * words_ + r / 64] |= std::uint64_t{1} << (r % 64);
        }
    }
}

std::size_t NullExposureGraph::edge_count() const {
    std::size_t total = 0;
    for (auto w : bits_) total += static_cast<std::size_t>(std::popcount(w));
    return total;
}

NullExposureGraph build_ne_graph(const Network& net, const ExposureSpec& spec, const GeneralDesign& design,
                                 Contrast contrast, const UnitSet& units, std::size_t n_rand,
                                 const PartialAssignment& fixed, const Assignment* z_obs, std::uint64_t seed) {
    if (n_rand < 1) throw std::invalid_argument("N_rand must be at least 1");
    std::vector<Assignment> columns(n_rand);
    parallel_for(n_rand, [&](std::size_t r) {
        Rng rng = make_rng(derive_seed(seed, kColumnStream), r);
        columns[r] = design.conditional_sample(fixed, rng);
    });
    std::vector<double> weights(n_rand, 1.0);
    std::vector<ColumnSource> sources(n_rand, ColumnSource::Sampled);
    std::optional<std::size_t> observed;
    if (z_obs) {
        if (!design.support_check(*z_obs)) throw std::invalid_argument("observed assignment is outside the design support");
        for (std::size_t i = 0; i < fixed.size(); ++i)
            if (fixed[i] != kFree && fixed[i] != static_cast<std::int8_t>((*z_obs)[i]))
                throw std::invalid_argument("observed assignment conflicts with the conditioning values");
        Rng rng = make_rng(seed, kInsertStream);
        const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, n_rand)(rng);
        columns.insert(columns.begin() + static_cast<long>(pos), *z_obs);
        weights.insert(weights.begin() + static_cast<long>(pos), 1.0);
        sources.insert(sources.begin() + static_cast<long>(pos), ColumnSource::Injected);
        observed = pos;
    }
    NullExposureGraph ne(net, spec, contrast, units, std::move(columns), std::move(weights), std::move(sources));
    if (observed) ne.set_observed_column(*observed);
    return ne;
}

NullExposureGraph build_ne_graph_enumerated(const Network& net, const ExposureSpec& spec,
                                            const BernoulliDesign& design, Contrast contrast, const UnitSet& units,
                                            const PartialAssignment& fixed, const Assignment* z_obs) {
    const BernoulliDesign restricted = design.restrict(fixed);
    std::vector<UnitId> free_units;
    for (std::size_t i = 0; i < restricted.size(); ++i)
        if (restricted.p(i) > 0.0 && restricted.p(i) < 1.0) free_units.push_back(static_cast<UnitId>(i));
    auto support = enumerate_sub_assignments(restricted, free_units, [](std::span<const std::uint8_t>) { return true; }, 22);
    Assignment base(restricted.size());
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = restricted.p(i) >= 1.0 ? 1 : 0;
    std::vector<Assignment> columns;
    std::vector<double> weights;
    std::optional<std::size_t> observed;
    for (const auto& s : support) {
        Assignment z = base;
        for (std::size_t t = 0; t < free_units.size(); ++t) z[free_units[t]] = s.values[t];
        if (z_obs && z == *z_obs) observed = columns.size();
        columns.push_back(std::move(z));
        weights.push_back(s.prob);
    }
    if (z_obs && !observed) throw std::invalid_argument("observed assignment is outside the restricted design support");
    std::vector<ColumnSource> sources(columns.size(), ColumnSource::Enumerated);
    NullExposureGraph ne(net, spec, contrast, units, std::move(columns), std::move(weights), std::move(sources));
    if (observed) ne.set_observed_column(*observed);
    return ne;
}

BicliqueDecomposition decompose(const NullExposureGraph& ne, std::uint64_t seed) {
    const std::size_t cols = ne.cols();
    const std::size_t W = ne.words();
    BicliqueDecomposition dec;
    dec.owner.assign(cols, 0);
    std::vector<bool> covered(cols, false);

    std::vector<std::size_t> sink, order;
    for (std::size_t c = 0; c < cols; ++c) {
        const auto b = ne.column_bits(c);
        if (std::all_of(b.begin(), b.end(), [](std::uint64_t w) { return w == 0; }))
            sink.push_back(c);
        else
            order.push_back(c);
    }
    Rng rng(derive_seed(seed, kDecomposeStream));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> open = order;
    std::vector<std::uint64_t> U(W);
    std::vector<std::size_t> miss_one(ne.rows());
    std::vector<std::size_t> members;
    for (std::size_t c : order) {
        if (covered[c]) continue;
        auto seed_bits = ne.column_bits(c);
        std::copy(seed_bits.begin(), seed_bits.end(), U.begin());
        std::size_t usize = 0;
        for (auto w : U) usize += static_cast<std::size_t>(std::popcount(w));
        for (;;) {
            std::fill(miss_one.begin(), miss_one.end(), 0);
            std::size_t zcount = 0;
            for (std::size_t z : open) {
                if (covered[z]) continue;
                auto zb = ne.column_bits(z);
                std::size_t missing = 0, miss_word = 0;
                for (std::size_t w = 0; w < W && missing < 2; ++w) {
                    const std::uint64_t m = U[w] & ~zb[w];
                    if (m) {
                        missing += static_cast<std::size_t>(std::popcount(m));
                        miss_word = w;
                    }
                }
                if (missing == 0) {
                    ++zcount;
                } else if (missing == 1) {
                    const std::uint64_t m = U[miss_word] & ~zb[miss_word];
                    ++miss_one[miss_word * 64 + static_cast<std::size_t>(std::countr_zero(m))];
                }
            }
            if (usize <= 1) break;
            std::size_t best_row = 0, best_gain = 0;
            bool found = false;
            for (std::size_t w = 0; w < W; ++w) {
                std::uint64_t bitsw = U[w];
                while (bitsw) {
                    const std::size_t r = w * 64 + static_cast<std::size_t>(std::countr_zero(bitsw));
                    bitsw &= bitsw - 1;
                    if (!found || miss_one[r] > best_gain) {
                        best_row = r;
                        best_gain = miss_one[r];
                        found = true;
                    }
                }
            }
            if ((usize - 1) * (zcount + best_gain) <= usize * zcount) break;
            U[best_row / 64] &= ~(std::uint64_t{1} << (best_row % 64));
            --usize;
        }
        members.clear();
        std::vector<std::uint64_t> closure(W, ~std::uint64_t{0});
        for (std::size_t z : open) {
            if (covered[z]) continue;
            auto zb = ne.column_bits(z);
            bool contains = true;
            for (std::size_t w = 0; w < W; ++w)
                if (U[w] & ~zb[w]) {
                    contains = false;
                    break;
                }
            if (!contains) continue;
            members.push_back(z);
            for (std::size_t w = 0; w < W; ++w) closure[w] &= zb[w];
        }
        Biclique b;
        for (std::size_t r = 0; r < ne.rows(); ++r)
            if ((closure[r / 64] >> (r % 64)) & 1u) b.units.push_back(ne.units()[r]);
        std::sort(members.begin(), members.end());
        for (std::size_t z : members) {
            covered[z] = true;
            dec.owner[z] = dec.bicliques.size();
        }
        b.columns = members;
        dec.bicliques.push_back(std::move(b));
        open.erase(std::remove_if(open.begin(), open.end(), [&](std::size_t z) { return covered[z]; }), open.end());
    }
    if (!sink.empty()) {
        for (std::size_t z : sink) dec.owner[z] = dec.bicliques.size();
        dec.bicliques.push_back(Biclique{{}, sink});
    }
    return dec;
}

std::vector<std::string> check_decomposition(const NullExposureGraph& ne, const BicliqueDecomposition& dec) {
    std::vector<std::string> out;
    std::vector<std::size_t> seen(ne.cols(), 0);
    for (std::size_t b = 0; b < dec.bicliques.size(); ++b) {
        const Biclique& bc = dec.bicliques[b];
        if (bc.columns.empty()) out.push_back("biclique " + std::to_string(b) + " has no columns");
        std::vector<std::size_t> rows;
        for (UnitId u : bc.units) {
            auto it = std::lower_bound(ne.units().begin(), ne.units().end(), u);
            if (it == ne.units().end() || *it != u) {
                out.push_back("biclique " + std::to_string(b) + " holds unknown unit " + std::to_string(u));
                continue;
            }
            rows.push_back(static_cast<std::size_t>(it - ne.units().begin()));
        }
        for (std::size_t c : bc.columns) {
            if (c >= ne.cols()) {
                out.push_back("biclique " + std::to_string(b) + " holds unknown column");
                continue;
            }
            ++seen[c];
            if (dec.owner.size() != ne.cols() || dec.owner[c] != b)
                out.push_back("owner map disagrees for column " + std::to_string(c));
            for (std::size_t r : rows)
                if (!ne.edge(r, c))
                    out.push_back("biclique " + std::to_string(b) + " misses edge (" + std::to_string(ne.units()[r]) +
                                  ", column " + std::to_string(c) + ")");
        }
    }
    for (std::size_t c = 0; c < ne.cols(); ++c)
        if (seen[c] != 1)
            out.push_back("column " + std::to_string(c) + " covered " + std::to_string(seen[c]) + " times");
    return out;
}

RandomizationResult biclique_test(const NullExposureGraph& ne, const BicliqueDecomposition& dec,
                                  std::span<const double> y, const StatSpec& stat,
                                  const BicliqueTestOptions& options) {
    const auto obs = ne.observed_column();
    if (!obs) throw std::invalid_argument("the observed assignment is not a column of the null exposure graph");
    if (dec.owner.size() != ne.cols()) throw std::invalid_argument("decomposition does not match the graph");
    const Biclique& b = dec.bicliques[dec.owner[*obs]];
    RandomizationResult result;
    result.active_focal_count = b.units.size();
    if (b.units.empty()) {
        result.degenerate = true;
        result.diagnostics.push_back("observed biclique has no units");
        return result;
    }
    if (b.columns.size() == 1) {
        result.degenerate = true;
        result.diagnostics.push_back("observed biclique holds a single assignment");
        return result;
    }
    std::vector<std::size_t> rows;
    for (UnitId u : b.units) rows.push_back(row_of(ne.units(), u));
    for (UnitId u : b.units)
        if (!std::isfinite(y[u])) throw std::invalid_argument("outcome of unit " + std::to_string(u) + " is not finite");
    const PreparedStatistic prepared(stat, y, b.units);
    std::vector<double> t(b.columns.size());
    std::vector<std::uint8_t> high(rows.size());
    std::size_t obs_pos = 0;
    for (std::size_t k = 0; k < b.columns.size(); ++k) {
        const std::size_t c = b.columns[k];
        for (std::size_t r = 0; r < rows.size(); ++r) high[r] = ne.high(rows[r], c) ? 1 : 0;
        t[k] = prepared.evaluate(high);
        if (c == *obs) obs_pos = k;
    }
    result.t_obs = t[obs_pos];
    result.diagnostics.push_back("observed biclique: " + std::to_string(b.units.size()) + " units x " +
                                 std::to_string(b.columns.size()) + " assignments");
    if (options.draws == 0) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < b.columns.size(); ++k) {
            const double w = ne.weight(b.columns[k]);
            den += w;
            if (at_least(t[k], result.t_obs)) num += w;
        }
        result.pval = num / den;
        return result;
    }
    std::vector<double> cumulative(b.columns.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < b.columns.size(); ++k) {
        acc += ne.weight(b.columns[k]);
        cumulative[k] = acc;
    }
    std::vector<double> draws(options.draws);
    for (std::size_t r = 0; r < options.draws; ++r) {
        Rng rng = make_rng(derive_seed(options.seed, kDrawStream), r);
        const double u = uniform01(rng) * acc;
        std::size_t k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        if (k >= t.size()) k = t.size() - 1;
        draws[r] = t[k];
    }
    result.pval = crt_pvalue(draws, result.t_obs);
    result.draws = std::move(draws);
    return result;
}

UnitSet computable_units(const Network& net, const std::vector<int>& part, int k) {
    UnitSet out;
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (part[i] != k) continue;
        bool ok = true;
        for (UnitId j : net.neighbors(i))
            if (part[j] > k) ok = false;
        if (ok) out.push_back(static_cast<UnitId>(i));
    }
    return out;
}

MonotoneReport test_monotone_general(const Network& net, const ExposureSpec& spec, const GeneralDesign& design,
                                     const std::vector<int>& part, const ObservedData& data,
                                     const GeneralTestOptions& options) {
    const std::size_t n = net.size();
    const std::size_t K = spec.size();
    if (K < 2) throw std::invalid_argument("the monotone test needs at least two exposure levels");
    data.validate(n);
    if (part.size() != n) throw std::invalid_argument("partition does not cover every unit");
    for (int p : part)
        if (p < 0 || static_cast<std::size_t>(p) >= K) throw std::invalid_argument("partition label outside [0, K)");
    std::vector<double> y = data.y_post;
    if (options.direction == Direction::Increasing) y = flip_direction(y);

    MonotoneReport report;
    report.direction = options.direction;
    report.seed = options.seed;
    report.combiner = options.combiner;
    for (std::size_t k = 1; k < K; ++k) {
        StepResult step;
        step.contrast = Contrast{static_cast<int>(k - 1), static_cast<int>(k)};
        const int part_k = static_cast<int>(k - 1);
        PartialAssignment fixed(n, kFree);
        for (std::size_t i = 0; i < n; ++i)
            if (part[i] < part_k) {
                fixed[i] = static_cast<std::int8_t>(data.z_obs[i]);
                ++step.conditioned_units;
            }
        const UnitSet rows = computable_units(net, part, part_k);
        if (rows.empty()) {
            step.result.degenerate = true;
            step.result.diagnostics.push_back("no units with exposure computable inside earlier parts");
        } else {
            const auto ne = build_ne_graph(net, spec, design, step.contrast, rows, options.n_rand, fixed, &data.z_obs,
                                           derive_seed(options.seed, kColumnStream, k));
            const auto dec = decompose(ne, derive_seed(options.seed, kDecomposeStream, k));
            BicliqueTestOptions bt;
            bt.draws = options.draws;
            bt.seed = derive_seed(options.seed, kDrawStream, k);
            step.result = biclique_test(ne, dec, y, options.stat, bt);
            step.result.draws.clear();
        }
        report.steps.push_back(std::move(step));
    }
    const auto pvals = report.pvals();
    CombinerSpec comb = options.combiner;
    if (comb.weights.empty() && comb.rule == CombineRule::Stouffer) {
        if (auto* b = dynamic_cast<const BernoulliSampler*>(&design)) {
            comb.weights = expected_contrast_counts(net, spec, b->design());
        } else {
            comb.weights.assign(K - 1, 0.0);
            constexpr std::size_t kWeightDraws = 2000;
            Rng rng = make_rng(options.seed, kWeightStream);
            for (std::size_t r = 0; r < kWeightDraws; ++r) {
                const Assignment z = design.sample(rng);
                for (std::size_t i = 0; i < n; ++i) {
                    const int l = exposure(net, spec, z, i);
                    for (std::size_t k = 0; k + 1 < K; ++k)
                        if (l == static_cast<int>(k) || l == static_cast<int>(k + 1))
                            comb.weights[k] += 1.0 / static_cast<double>(kWeightDraws);
                }
            }
        }
        if (std::all_of(comb.weights.begin(), comb.weights.end(), [](double w) { return w <= 0.0; }))
            comb.weights.assign(K - 1, 1.0);
    }
    report.combiner_weights = comb.weights;
    report.combined_pval = combine(comb, pvals);
    return report;
}

}  // namespace spillover
