#include "spillover/sim.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "spillover/crt.hpp"
#include "spillover/parallel.hpp"
#include "spillover/rng.hpp"

namespace spillover {

GammaParams calibrate_gamma(std::span<const double> y) {
    if (y.empty()) throw std::invalid_argument("cannot calibrate a Gamma law on an empty sample");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    if (!(var > 0.0)) throw std::invalid_argument("sample variance is zero");
    if (!(mean > 0.0)) throw std::invalid_argument("sample mean must be positive");
    return {mean * mean / var, mean / var};
}

std::string to_string(DgpKind kind) {
    switch (kind) {
        case DgpKind::DGP1: return "DGP1";
        case DgpKind::DGP2: return "DGP2";
        case DgpKind::DGP3: return "DGP3";
        case DgpKind::DGP4: return "DGP4";
    }
    return "DGP1";
}

DgpKind parse_dgp_kind(const std::string& name) {
    std::string s;
    for (char c : name) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (s == "DGP1") return DgpKind::DGP1;
    if (s == "DGP2") return DgpKind::DGP2;
    if (s == "DGP3") return DgpKind::DGP3;
    if (s == "DGP4") return DgpKind::DGP4;
    throw std::invalid_argument("unknown DGP '" + name + "'");
}

PotentialOutcomes::PotentialOutcomes(DgpConfig config, std::vector<double> base, std::vector<double> degree)
    : config_(config), base_(std::move(base)), degree_(std::move(degree)) {
    if (base_.size() != degree_.size()) throw std::invalid_argument("base outcomes and degrees differ in length");
}

double PotentialOutcomes::operator()(std::size_t i, int z, std::size_t w_raw) const {
    const double w = static_cast<double>(w_raw);
    const double damp = 1.0 - 0.5 * z;
    double expo = -static_cast<double>(z);
    switch (config_.kind) {
        case DgpKind::DGP1:
        case DgpKind::DGP4: expo += config_.tau * w * damp; break;
        case DgpKind::DGP2: expo += config_.tau * (w - (w_raw == 1 ? 2.0 : 0.0)) * damp; break;
        case DgpKind::DGP3: expo += config_.tau * w * damp + config_.theta * degree_[i]; break;
    }
    return base_[i] * std::exp(expo);
}

std::vector<double> PotentialOutcomes::observe(const Network& net, std::span<const std::uint8_t> z) const {
    std::vector<double> y(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) y[i] = (*this)(i, z[i], raw_exposure(net, z, i));
    return y;
}

std::vector<double> correlated_error_term(std::span<const Point> coords, double radius, std::span<const double> eps) {
    if (radius < 0.0) throw std::invalid_argument("radius must be nonnegative");
    const std::size_t n = coords.size();
    const double cell = radius > 0.0 ? radius : 1.0;
    std::map<std::pair<long, long>, std::vector<std::size_t>> grid;
    auto key = [&](const Point& p) {
        return std::pair<long, long>(static_cast<long>(std::floor(p.x / cell)), static_cast<long>(std::floor(p.y / cell)));
    };
    for (std::size_t i = 0; i < n; ++i) grid[key(coords[i])].push_back(i);
    std::vector<double> out(n);
    const double r2 = radius * radius;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [gx, gy] = key(coords[i]);
        double sum = 0.0;
        std::size_t count = 0;
        for (long dx = -1; dx <= 1; ++dx)
            for (long dy = -1; dy <= 1; ++dy) {
                auto it = grid.find({gx + dx, gy + dy});
                if (it == grid.end()) continue;
                for (std::size_t j : it->second) {
                    const double ex = coords[i].x - coords[j].x, ey = coords[i].y - coords[j].y;
                    if (ex * ex + ey * ey <= r2) {
                        sum += eps[j];
                        ++count;
                    }
                }
            }
        out[i] = std::abs(sum) / std::sqrt(static_cast<double>(count));
    }
    return out;
}

PotentialOutcomes make_dgp(const DgpConfig& config, const Network& net) {
    if (!(config.gamma.shape > 0.0) || !(config.gamma.rate > 0.0))
        throw std::invalid_argument("Gamma shape and rate must be positive");
    if (config.radius < 0.0) throw std::invalid_argument("correlation radius must be nonnegative");
    const std::size_t n = net.size();
    Rng rng = make_rng(config.seed, 0x9a);
    std::gamma_distribution<double> gamma(config.gamma.shape, 1.0 / config.gamma.rate);
    std::vector<double> base(n), degree(n);
    for (std::size_t i = 0; i < n; ++i) {
        base[i] = gamma(rng);
        degree[i] = static_cast<double>(net.degree(i));
    }
    if (config.kind == DgpKind::DGP4) {
        if (!net.has_coordinates()) throw std::invalid_argument("DGP4 needs unit coordinates");
        Rng erng = make_rng(config.seed, 0x9b);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> eps(n);
        for (auto& e : eps) e = normal(erng);
        const auto extra = correlated_error_term(net.coordinates(), config.radius, eps);
        for (std::size_t i = 0; i < n; ++i) base[i] += extra[i];
    }
    return PotentialOutcomes(config, std::move(base), std::move(degree));
}

SyntheticNetwork make_synthetic_network(const SyntheticConfig& cfg) {
    if (cfg.n == 0) throw std::invalid_argument("synthetic network needs at least one unit");
    if (!(cfg.hotspot_share > 0.0 && cfg.hotspot_share <= 1.0)) throw std::invalid_argument("hotspot share must lie in (0, 1]");
    if (!(cfg.p_treat > 0.0 && cfg.p_treat < 1.0)) throw std::invalid_argument("treatment probability must lie in (0, 1)");
    if (!(cfg.radius > 0.0)) throw std::invalid_argument("radius must be positive");
    const std::size_t n = cfg.n;
    const std::size_t H = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(cfg.hotspot_share * static_cast<double>(n))), 1, n);
    Rng rng = make_rng(cfg.seed, 0x5e);
    std::uniform_real_distribution<double> coord(0.0, cfg.side);
    std::normal_distribution<double> spread(0.0, cfg.cluster_spread);
    std::vector<Point> pts(n);
    std::vector<double> pull(H, 1.0);

    auto pick = [&](const std::vector<double>& w, std::size_t upto) {
        double total = 0.0;
        for (std::size_t h = 0; h < upto; ++h) total += w[h];
        double u = uniform01(rng) * total;
        for (std::size_t h = 0; h < upto; ++h) {
            if (u < w[h]) return h;
            u -= w[h];
        }
        return upto - 1;
    };

    for (std::size_t h = 0; h < H; ++h) {
        if (h == 0 || uniform01(rng) < cfg.new_cluster_prob) {
            pts[h] = {coord(rng), coord(rng)};
        } else {
            const std::size_t parent = pick(pull, h);
            pull[parent] += 1.0;
            pts[h] = {pts[parent].x + spread(rng), pts[parent].y + spread(rng)};
        }
    }
    std::vector<double> followers(H, 1.0);
    for (std::size_t i = H; i < n; ++i) {
        const std::size_t h = pick(followers, H);
        followers[h] += 1.0;
        const double rad = cfg.radius * std::sqrt(uniform01(rng));
        const double ang = 2.0 * M_PI * uniform01(rng);
        pts[i] = {pts[h].x + rad * std::cos(ang), pts[h].y + rad * std::sin(ang)};
    }

    SyntheticNetwork out;
    out.hotspot.assign(n, false);
    for (std::size_t h = 0; h < H; ++h) out.hotspot[h] = true;
    const auto& hot = out.hotspot;
    out.net = build_network(pts, cfg.radius, [&hot](UnitId a, UnitId b) { return hot[a] || hot[b]; });
    std::vector<double> probs(n, 0.0);
    for (std::size_t h = 0; h < H; ++h) probs[h] = cfg.p_treat;
    out.design = BernoulliDesign(std::move(probs));
    return out;
}

OlsResult ols_baseline(std::span<const std::uint8_t> z, std::span<const double> w, std::span<const double> y,
                       bool positive_alternative) {
    const std::size_t n = y.size();
    if (z.size() != n || w.size() != n) throw std::invalid_argument("OLS inputs differ in length");
    if (n <= 4) throw std::invalid_argument("OLS needs more than four observations");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 4);
    Eigen::VectorXd ly(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (!(y[i] > 0.0)) throw std::invalid_argument("OLS on log outcomes needs positive outcomes (unit " + std::to_string(i) + ")");
        const auto r = static_cast<Eigen::Index>(i);
        X(r, 0) = 1.0;
        X(r, 1) = z[i];
        X(r, 2) = w[i];
        X(r, 3) = z[i] * w[i];
        ly(r) = std::log(y[i]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < 4) throw std::invalid_argument("OLS design matrix is rank deficient");
    const Eigen::VectorXd beta = qr.solve(ly);
    const Eigen::VectorXd resid = ly - X * beta;
    OlsResult out;
    out.df = n - 4;
    const double sigma2 = resid.squaredNorm() / static_cast<double>(out.df);
    const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
    for (int j = 0; j < 4; ++j) {
        out.coef.push_back(beta(j));
        out.se.push_back(std::sqrt(sigma2 * xtx_inv(j, j)));
    }
    out.t = out.se[2] > 0.0 ? out.coef[2] / out.se[2] : 0.0;
    boost::math::students_t dist(static_cast<double>(out.df));
    const double t = positive_alternative ? out.t : -out.t;
    out.pval = boost::math::cdf(boost::math::complement(dist, t));
    return out;
}

std::string StudyMethod::statistic_name() const { return ols ? "ols" : stat.name(); }
std::string StudyMethod::combiner_name() const { return ols ? "none" : to_string(combiner); }

std::vector<StudyRow> run_study(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                const StudyOptions& options) {
    const std::size_t n = net.size();
    const std::size_t M = options.methods.size();
    // Randomization methods sharing a statistic reuse one set of per-step p-values.
    std::vector<std::string> stat_names;
    std::vector<std::size_t> stat_of(M, 0);
    for (std::size_t m = 0; m < M; ++m) {
        if (options.methods[m].ols) continue;
        const auto name = options.methods[m].stat.name();
        auto it = std::find(stat_names.begin(), stat_names.end(), name);
        stat_of[m] = static_cast<std::size_t>(it - stat_names.begin());
        if (it == stat_names.end()) stat_names.push_back(name);
    }
    std::vector<StatSpec> stats(stat_names.size());
    for (std::size_t m = 0; m < M; ++m)
        if (!options.methods[m].ols) stats[stat_of[m]] = options.methods[m].stat;
    const auto weights = expected_contrast_counts(net, spec, design);

    std::vector<StudyRow> rows;
    for (std::size_t c = 0; c < options.cells.size(); ++c) {
        const StudyCell& cell = options.cells[c];
        std::vector<std::uint8_t> reject(options.reps * M, 0);
        parallel_for(options.reps, [&](std::size_t r) {
            const std::uint64_t rep_seed = derive_seed(options.seed, c + 1, r);
            Rng zrng = make_rng(rep_seed, 0);
            ObservedData data;
            data.z_obs = design.sample(zrng);
            DgpConfig dgp = cell.dgp;
            dgp.seed = derive_seed(rep_seed, 1);
            data.y_post = make_dgp(dgp, net).observe(net, data.z_obs);
            std::vector<std::vector<double>> step_pvals(stats.size());
            for (std::size_t s = 0; s < stats.size(); ++s) {
                MonotoneOptions mo;
                mo.stat = stats[s];
                mo.draws = options.draws;
                mo.seed = derive_seed(rep_seed, 2);
                mo.direction = options.direction;
                mo.focal_pool = options.focal_pool;
                mo.stage = options.stage;
                mo.order = options.order;
                step_pvals[s] = test_monotone(net, spec, design, data, mo).pvals();
            }
            for (std::size_t m = 0; m < M; ++m) {
                const StudyMethod& method = options.methods[m];
                double p = 1.0;
                if (method.ols) {
                    std::vector<double> w(n);
                    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(raw_exposure(net, data.z_obs, i));
                    try {
                        p = ols_baseline(data.z_obs, w, data.y_post, options.direction == Direction::Decreasing).pval;
                    } catch (const std::invalid_argument&) {
                        p = 1.0;
                    }
                } else {
                    CombinerSpec comb;
                    comb.rule = method.combiner;
                    comb.seed = derive_seed(rep_seed, 3);
                    if (comb.rule == CombineRule::Stouffer || comb.rule == CombineRule::WeightedFisher ||
                        comb.rule == CombineRule::Cauchy)
                        comb.weights = weights;
                    p = combine(comb, step_pvals[stat_of[m]]);
                }
                reject[r * M + m] = p <= options.alpha ? 1 : 0;
            }
        });
        for (std::size_t m = 0; m < M; ++m) {
            std::size_t hits = 0;
            for (std::size_t r = 0; r < options.reps; ++r) hits += reject[r * M + m];
            StudyRow row;
            row.dgp = to_string(cell.dgp.kind);
            row.param = cell.param;
            row.method = options.methods[m].ols ? "ols" : "randomization";
            row.statistic = options.methods[m].statistic_name();
            row.combiner = options.methods[m].combiner_name();
            row.reps = options.reps;
            row.rejection_rate = options.reps ? static_cast<double>(hits) / static_cast<double>(options.reps) : 0.0;
            row.mc_se = options.reps ? std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) / static_cast<double>(options.reps)) : 0.0;
            rows.push_back(row);
        }
    }
    return rows;
}

void write_study_csv(std::ostream& os, const std::vector<StudyRow>& rows) {
    os << "dgp,param,method,statistic,combiner,rejection_rate,mc_se\n";
    char buf[64];
    for (const auto& r : rows) {
        os << r.dgp << ',' << r.param << ',' << r.method << ',' << r.statistic << ',' << r.combiner << ',';
        std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.rejection_rate, r.mc_se);
        os << buf << '\n';
    }
}

double aic_gap(std::span<const double> y, std::span<const std::size_t> counts, std::span<const UnitId> units,
               std::size_t g_low, std::size_t g_high) {
    if (units.empty()) return 0.0;
    auto aic = [&](std::size_t cap) {
        std::vector<double> sum(cap + 1, 0.0), sq(cap + 1, 0.0);
        std::vector<std::size_t> cnt(cap + 1, 0);
        for (UnitId i : units) {
            const std::size_t g = std::min(counts[i], cap);
            sum[g] += y[i];
            ++cnt[g];
        }
        std::vector<double> mean(cap + 1, 0.0);
        std::size_t params = 0;
        for (std::size_t g = 0; g <= cap; ++g)
            if (cnt[g]) {
                mean[g] = sum[g] / static_cast<double>(cnt[g]);
                ++params;
            }
        double rss = 0.0;
        for (UnitId i : units) {
            const double d = y[i] - mean[std::min(counts[i], cap)];
            rss += d * d;
        }
        const double m = static_cast<double>(units.size());
        return m * std::log(std::max(rss, DBL_MIN) / m) + 2.0 * static_cast<double>(params + 1);
    };
    return aic(g_low) - aic(g_high);
}

GroupingResult aic_grouping_test(const Network& net, std::size_t g_low, std::size_t g_high,
                                 const BernoulliDesign& design, std::span<const std::uint8_t> z_obs,
                                 std::span<const double> y, std::size_t draws, std::uint64_t seed) {
    const std::size_t n = net.size();
    if (design.size() != n || z_obs.size() != n || y.size() != n)
        throw std::invalid_argument("grouping test inputs differ in length");
    if (g_low >= g_high) throw std::invalid_argument("grouping thresholds must satisfy g_low < g_high");
    UnitSet units;
    for (std::size_t i = 0; i < n; ++i)
        if (design.p(i) == 0.0) units.push_back(static_cast<UnitId>(i));
    auto gap_for = [&](std::span<const std::uint8_t> z) {
        std::vector<std::size_t> counts(n);
        for (std::size_t i = 0; i < n; ++i) counts[i] = raw_exposure(net, z, i);
        return aic_gap(y, counts, units, g_low, g_high);
    };
    GroupingResult out;
    out.t_obs = gap_for(z_obs);
    if (draws == 0) {
        UnitSet free;
        for (std::size_t i = 0; i < n; ++i)
            if (design.p(i) > 0.0 && design.p(i) < 1.0) free.push_back(static_cast<UnitId>(i));
        const auto subs = enumerate_sub_assignments(design, free, {}, kEnumerationCap);
        Assignment z(n, 0);
        for (std::size_t i = 0; i < n; ++i) z[i] = design.p(i) == 1.0 ? 1 : 0;
        double p = 0.0;
        for (const auto& s : subs) {
            for (std::size_t t = 0; t < free.size(); ++t) z[free[t]] = s.values[t];
            if (at_least(gap_for(z), out.t_obs)) p += s.prob;
        }
        out.pval = std::min(1.0, p);
        out.exact = true;
        out.draws = subs.size();
        return out;
    }
    std::vector<double> t(draws);
    constexpr std::size_t kBlock = 256;
    parallel_for((draws + kBlock - 1) / kBlock, [&](std::size_t b) {
        Assignment z;
        for (std::size_t r = b * kBlock; r < std::min(draws, (b + 1) * kBlock); ++r) {
            Rng rng = make_rng(seed, r);
            design.sample_into(z, rng);
            t[r] = gap_for(z);
        }
    });
    out.pval = crt_pvalue(t, out.t_obs);
    out.draws = draws;
    return out;
}

}  // namespace spillover
