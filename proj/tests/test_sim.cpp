#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "spillover/sim.hpp"

using namespace spillover;

namespace {

Network random_graph(std::size_t n, double q, Rng& rng) {
    std::vector<std::pair<UnitId, UnitId>> e;
    for (UnitId a = 0; a < n; ++a)
        for (UnitId b = a + 1; b < n; ++b)
            if (uniform01(rng) < q) e.emplace_back(a, b);
    return build_network(n, e);
}

// Kolmogorov-Smirnov distance of a sample from U(0, 1).
double ks_uniform(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    const double n = double(p.size());
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d = std::max({d, (i + 1) / n - p[i], p[i] - i / n});
    return d;
}

// Gap between the two AIC fits, computed by regressing on exposure indicators.
double oracle_aic_gap(const std::vector<double>& y, const std::vector<std::size_t>& counts,
                      const std::vector<std::uint32_t>& units, std::size_t g_low, std::size_t g_high) {
    auto aic = [&](std::size_t cap) {
        std::vector<std::size_t> present;
        for (std::size_t g = 0; g <= cap; ++g)
            for (auto i : units)
                if (std::min(counts[i], cap) == g) {
                    present.push_back(g);
                    break;
                }
        std::vector<std::vector<double>> X;
        std::vector<double> yy;
        for (auto i : units) {
            std::vector<double> row;
            for (std::size_t g : present) row.push_back(std::min(counts[i], cap) == g ? 1.0 : 0.0);
            X.push_back(row);
            yy.push_back(y[i]);
        }
        const auto fit = oracle::ols(X, yy);
        double rss = 0.0;
        for (std::size_t r = 0; r < X.size(); ++r) {
            double f = 0.0;
            for (std::size_t c = 0; c < present.size(); ++c) f += X[r][c] * fit.coef[c];
            rss += (yy[r] - f) * (yy[r] - f);
        }
        const double m = double(units.size());
        return m * std::log(std::max(rss, 1e-300) / m) + 2.0 * double(present.size() + 1);
    };
    return aic(g_low) - aic(g_high);
}

}  // namespace

TEST(Gamma, MomentsByHand) {
    // mean 2, population variance 4.
    const std::vector<double> a{0, 4, 0, 4};
    const auto g = calibrate_gamma(a);
    EXPECT_NEAR(g.shape, 1.0, 1e-12);
    EXPECT_NEAR(g.rate, 0.5, 1e-12);
    const std::vector<double> b{0, 2};
    const auto h = calibrate_gamma(b);
    EXPECT_NEAR(h.shape, 1.0, 1e-12);
    EXPECT_NEAR(h.rate, 1.0, 1e-12);
    EXPECT_THROW(calibrate_gamma(std::vector<double>{3, 3, 3}), std::invalid_argument);
}

TEST(Gamma, SamplerRoundTrip) {
    const GammaParams g{2.0, 2.0};
    Rng rng(1);
    std::gamma_distribution<double> dist(g.shape, 1.0 / g.rate);
    std::vector<double> y(1000000);
    for (auto& v : y) v = dist(rng);
    const auto back = calibrate_gamma(y);
    EXPECT_NEAR(back.shape / back.rate, 1.0, 0.01);
    EXPECT_NEAR(back.shape / (back.rate * back.rate), 0.5, 0.005);
}

TEST(Dgp, NullLeavesControlOutcomesUnchanged) {
    const auto net = build_network(4, {{0, 1}, {0, 2}, {0, 3}});
    DgpConfig c;
    c.tau = 0.0;
    c.seed = 3;
    const auto po = make_dgp(c, net);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t w = 0; w < 5; ++w) EXPECT_EQ(po(i, 0, w), po.base()[i]);
}

TEST(Dgp, Dgp1Ratio) {
    const auto net = build_network(3, {{0, 1}, {1, 2}});
    DgpConfig c;
    c.tau = 0.2;
    const auto po = make_dgp(c, net);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(po(i, 0, 2) / po(i, 0, 1), std::exp(0.2), 1e-12);
}

TEST(Dgp, Dgp2SignFlipsAtOne) {
    const auto net = build_network(3, {{0, 1}, {1, 2}});
    DgpConfig c;
    c.kind = DgpKind::DGP2;
    c.tau = 0.2;
    const auto po = make_dgp(c, net);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(po(i, 0, 1) / po(i, 0, 0), std::exp(-0.2), 1e-12);
        EXPECT_NEAR(po(i, 0, 3) / po(i, 0, 2), std::exp(0.2), 1e-12);
    }
}

TEST(Dgp, NonpositiveTauIsMonotoneNull) {
    Rng rng(4);
    const auto net = random_graph(40, 0.2, rng);
    for (double tau : {0.0, -0.1, -0.5}) {
        DgpConfig c;
        c.tau = tau;
        c.seed = rng();
        const auto po = make_dgp(c, net);
        for (std::size_t i = 0; i < net.size(); ++i)
            for (std::size_t w = 0; w < net.degree(i); ++w) EXPECT_LE(po(i, 0, w + 1), po(i, 0, w));
    }
}

TEST(Dgp, DeterministicGivenSeed) {
    SyntheticConfig sc;
    sc.n = 300;
    sc.seed = 2;
    const auto syn = make_synthetic_network(sc);
    for (auto kind : {DgpKind::DGP1, DgpKind::DGP3, DgpKind::DGP4}) {
        DgpConfig c;
        c.kind = kind;
        c.tau = 0.1;
        c.theta = 0.1;
        c.radius = 1.0;
        c.seed = 5;
        EXPECT_EQ(make_dgp(c, syn.net).base(), make_dgp(c, syn.net).base());
    }
}

TEST(Dgp, Dgp3ScalesWithDegree) {
    const auto net = build_network(4, {{0, 1}, {0, 2}, {0, 3}});
    DgpConfig c;
    c.kind = DgpKind::DGP3;
    c.theta = 0.2;
    const auto po = make_dgp(c, net);
    EXPECT_NEAR(po(0, 0, 0) / po.base()[0], std::exp(0.6), 1e-12);
    EXPECT_NEAR(po(1, 0, 0) / po.base()[1], std::exp(0.2), 1e-12);
}

TEST(Dgp, Dgp4NeedsCoordinates) {
    const auto net = build_network(2, {{0, 1}});
    DgpConfig c;
    c.kind = DgpKind::DGP4;
    c.radius = 1.0;
    EXPECT_THROW(make_dgp(c, net), std::invalid_argument);
}

TEST(Dgp, Dgp4ErrorTermHasFoldedNormalScale) {
    // 60 x 60 unit lattice; radius 1.5 balls hold up to 9 points.
    std::vector<Point> pts;
    for (int a = 0; a < 60; ++a)
        for (int b = 0; b < 60; ++b) pts.push_back({double(a), double(b)});
    Rng rng(6);
    std::normal_distribution<double> normal;
    std::vector<double> eps(pts.size());
    for (auto& e : eps) e = normal(rng);
    const auto term = correlated_error_term(pts, 1.5, eps);
    double mean = 0.0;
    for (double v : term) mean += v;
    mean /= double(term.size());
    double var = 0.0;
    for (double v : term) var += (v - mean) * (v - mean);
    var /= double(term.size());
    const double analytic = 1.0 - 2.0 / M_PI;
    EXPECT_NEAR(var, analytic, 0.1 * analytic);
    EXPECT_NEAR(mean, std::sqrt(2.0 / M_PI), 0.05);
    // Radius 0 keeps only the unit itself.
    const auto self = correlated_error_term(pts, 0.0, eps);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(self[i], std::fabs(eps[i]), 1e-12);
}

TEST(Synthetic, StructureMatchesConfig) {
    SyntheticConfig sc;
    sc.seed = 1;
    const auto syn = make_synthetic_network(sc);
    ASSERT_EQ(syn.net.size(), 2000u);
    ASSERT_TRUE(syn.net.has_coordinates());
    std::size_t hot = 0;
    for (std::size_t i = 0; i < 2000; ++i) {
        if (syn.hotspot[i]) {
            ++hot;
            EXPECT_EQ(syn.design.p(i), 0.4);
        } else {
            EXPECT_EQ(syn.design.p(i), 0.0);
        }
        for (UnitId j : syn.net.neighbors(i)) {
            EXPECT_TRUE(syn.hotspot[i] || syn.hotspot[j]);
            const auto &a = syn.net.coordinates()[i], &b = syn.net.coordinates()[j];
            EXPECT_LE(std::hypot(a.x - b.x, a.y - b.y), sc.radius + 1e-12);
        }
    }
    EXPECT_EQ(hot, 100u);
    // Heavy tail: the busiest hotspot has many more neighbors than the median one.
    std::vector<std::size_t> deg;
    for (std::size_t i = 0; i < 2000; ++i)
        if (syn.hotspot[i]) deg.push_back(syn.net.degree(i));
    std::sort(deg.begin(), deg.end());
    EXPECT_GT(deg.back(), 2 * deg[deg.size() / 2]);
}

TEST(Ols, MatchesNormalEquationsOracle) {
    Rng rng(7);
    std::vector<std::uint8_t> z(20);
    std::vector<double> w(20), y(20);
    std::vector<std::vector<double>> X;
    std::vector<double> ly;
    for (std::size_t i = 0; i < 20; ++i) {
        z[i] = uniform01(rng) < 0.4;
        w[i] = double(rng() % 4);
        y[i] = std::exp(0.3 * w[i] - 0.5 * z[i] + 0.2 * uniform01(rng));
        X.push_back({1.0, double(z[i]), w[i], z[i] * w[i]});
        ly.push_back(std::log(y[i]));
    }
    const auto r = ols_baseline(z, w, y);
    const auto o = oracle::ols(X, ly);
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_NEAR(r.coef[c], o.coef[c], 1e-8);
        EXPECT_NEAR(r.se[c], o.se[c], 1e-8);
    }
    EXPECT_EQ(r.df, 16u);
    EXPECT_NEAR(r.t, o.coef[2] / o.se[2], 1e-8);
    EXPECT_NEAR(r.pval, oracle::student_t_sf(r.t, 16.0), 1e-8);
    EXPECT_NEAR(ols_baseline(z, w, y, false).pval, oracle::student_t_sf(-r.t, 16.0), 1e-8);
}

TEST(Ols, PerfectSignal) {
    Rng rng(8);
    const std::size_t n = 500;
    std::vector<std::uint8_t> z(n);
    std::vector<double> w(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = uniform01(rng) < 0.5;
        w[i] = double(rng() % 5);
        y[i] = std::exp(w[i] + 1e-3 * uniform01(rng));
    }
    const auto r = ols_baseline(z, w, y);
    EXPECT_NEAR(r.coef[2], 1.0, 1e-3);
    EXPECT_LT(r.pval, 1e-12);
}

TEST(Ols, RejectsRankDeficientDesign) {
    const std::vector<std::uint8_t> z(6, 0);
    const std::vector<double> w{0, 1, 2, 0, 1, 2}, y{1, 2, 3, 4, 5, 6};
    EXPECT_THROW(ols_baseline(z, w, y), std::invalid_argument);
}

TEST(Ols, NullPvaluesAreUniform) {
    Rng rng(9);
    std::vector<double> ps;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 80;
        std::vector<std::uint8_t> z(n);
        std::vector<double> w(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = uniform01(rng) < 0.5;
            w[i] = double(rng() % 4);
            y[i] = std::exp(uniform01(rng) * 2);
        }
        ps.push_back(ols_baseline(z, w, y).pval);
    }
    // 0.001 critical value of the one-sample KS statistic.
    EXPECT_LT(ks_uniform(ps), 1.949 / std::sqrt(1000.0));
}

TEST(Study, SharpNullRowsAndCsv) {
    SyntheticConfig sc;
    sc.n = 400;
    sc.seed = 3;
    const auto syn = make_synthetic_network(sc);
    StudyOptions o;
    for (double t : {0.0, 0.5}) {
        StudyCell c;
        c.dgp.tau = t;
        c.param = "tau=" + std::to_string(t).substr(0, 3);
        o.cells.push_back(c);
    }
    StudyMethod dim;
    dim.stat = StatSpec::dim();
    StudyMethod ols;
    ols.ols = true;
    o.methods = {dim, ols};
    o.reps = 40;
    o.draws = 100;
    o.seed = 5;
    const auto rows = run_study(syn.net, ExposureSpec::parse("0,1,2,>=3"), syn.design, o);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].method, "randomization");
    EXPECT_EQ(rows[1].method, "ols");
    for (const auto& r : rows) {
        EXPECT_EQ(r.reps, 40u);
        EXPECT_NEAR(r.mc_se, std::sqrt(r.rejection_rate * (1 - r.rejection_rate) / 40), 1e-12);
    }
    const auto again = run_study(syn.net, ExposureSpec::parse("0,1,2,>=3"), syn.design, o);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].rejection_rate, again[i].rejection_rate);
    std::ostringstream os;
    write_study_csv(os, rows);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "dgp,param,method,statistic,combiner,rejection_rate,mc_se");
    int n = 0;
    while (std::getline(is, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
        ++n;
    }
    EXPECT_EQ(n, 4);
}

TEST(Grouping, NoHighExposureIsDegenerate) {
    // Never-treated leaves each touch one randomized unit: nobody reaches 2 treated neighbors.
    const auto net = build_network(6, {{0, 3}, {1, 4}, {2, 5}});
    const BernoulliDesign design({0.5, 0.5, 0.5, 0, 0, 0});
    const Assignment z{1, 0, 1, 0, 0, 0};
    const std::vector<double> y{0, 0, 0, 1.0, 2.0, 0.5};
    const auto r = aic_grouping_test(net, 2, 3, design, z, y, 200, 1);
    EXPECT_EQ(r.pval, 1.0);
    EXPECT_EQ(aic_grouping_test(net, 2, 3, design, z, y, 0, 1).pval, 1.0);
}

TEST(Grouping, AicGapMatchesRegressionOracle) {
    Rng rng(10);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 25;
        std::vector<std::size_t> counts(n);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            counts[i] = rng() % 6;
            y[i] = uniform01(rng) + 0.3 * double(counts[i]);
        }
        UnitSet units;
        for (std::size_t i = 0; i < n; ++i)
            if (i % 4 != 0) units.push_back(UnitId(i));
        EXPECT_NEAR(aic_gap(y, counts, units, 2, 4),
                    oracle_aic_gap(y, counts, std::vector<std::uint32_t>(units.begin(), units.end()), 2, 4), 1e-8);
    }
}

TEST(Grouping, ExactModeMatchesEnumeration) {
    Rng rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        // Units 0..4 randomized, 5..9 never treated; leaves attach to random hubs.
        std::vector<std::pair<UnitId, UnitId>> e;
        for (UnitId l = 5; l < 10; ++l)
            for (UnitId h = 0; h < 5; ++h)
                if (uniform01(rng) < 0.5) e.emplace_back(h, l);
        const auto net = build_network(10, e);
        std::vector<double> p(10, 0.0);
        for (std::size_t h = 0; h < 5; ++h) p[h] = std::vector<double>{0.3, 0.5, 0.7}[rng() % 3];
        const BernoulliDesign design(p);
        const Assignment z = design.sample(rng);
        std::vector<double> y(10);
        for (auto& v : y) v = uniform01(rng);
        const std::vector<std::uint32_t> units{5, 6, 7, 8, 9};
        auto gap = [&](const Assignment& zz) {
            std::vector<std::size_t> counts(10, 0);
            for (std::size_t i = 0; i < 10; ++i)
                for (std::size_t j = 0; j < 10; ++j)
                    if (net.adjacent(i, j) && zz[j]) ++counts[i];
            return oracle_aic_gap(y, counts, units, 1, 2);
        };
        const double t_obs = gap(z);
        double want = 0.0;
        for (std::uint32_t mask = 0; mask < 32; ++mask) {
            Assignment zz(10, 0);
            double w = 1.0;
            for (std::size_t h = 0; h < 5; ++h) {
                zz[h] = mask >> h & 1;
                w *= zz[h] ? p[h] : 1 - p[h];
            }
            if (oracle::at_least(gap(zz), t_obs)) want += w;
        }
        const auto r = aic_grouping_test(net, 1, 2, design, z, y, 0, 0);
        EXPECT_TRUE(r.exact);
        EXPECT_NEAR(r.t_obs, t_obs, 1e-8);
        EXPECT_NEAR(r.pval, want, 1e-9);
    }
}

TEST(Grouping, DetectsBreakAboveLowThreshold) {
    Rng rng(12);
    SyntheticConfig sc;
    sc.seed = 4;
    const auto syn = make_synthetic_network(sc);
    int small = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        const Assignment z = syn.design.sample(rng);
        std::vector<double> y(syn.net.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = uniform01(rng) + (raw_exposure(syn.net, z, i) >= 3 ? 3.0 : 0.0);
        if (aic_grouping_test(syn.net, 2, 3, syn.design, z, y, 200, rng()).pval < 0.05) ++small;
    }
    EXPECT_GE(small, int(0.8 * reps));
}
