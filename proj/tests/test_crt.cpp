#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "spillover/crt.hpp"

using namespace spillover;

namespace {

// Focal a = 0 with leaves r1 = 1, r2 = 2.
struct Cherry {
    Network net = build_network(3, {{0, 1}, {0, 2}});
    BernoulliDesign design{{0.0, 0.5, 0.5}};
    ExposureSpec spec = ExposureSpec::parse("0,1,2,>=3");
    Module module{{0}, {1, 2}, true};
};

}  // namespace

TEST(ModuleDistribution, UniformModuleEnumeration) {
    Cherry c;
    const auto d = module_randomization_distribution(c.module, c.net, c.spec, Assignment{0, 1, 0}, {1, 2}, c.design,
                                                     std::vector<bool>(3, false));
    EXPECT_TRUE(d.enumerated());
    EXPECT_EQ(d.support().size(), 3u);
    EXPECT_NEAR(d.p_all_high(), 0.25 / 0.75, 1e-12);
    double total = 0.0;
    for (double p : d.probabilities()) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(ModuleDistribution, ConditionedTreatedUnit) {
    Cherry c;
    std::vector<bool> cond{false, false, true};
    const auto d = module_randomization_distribution(c.module, c.net, c.spec, Assignment{0, 0, 1}, {1, 2}, c.design, cond);
    EXPECT_EQ(d.free_units, (UnitSet{1}));
    EXPECT_NEAR(d.p_all_high(), 0.5, 1e-12);
    EXPECT_TRUE(d.is_uniform_two_point());
}

TEST(Contrast, RejectsDegenerateContrast) {
    const auto spec = ExposureSpec::parse("0,1,2");
    EXPECT_THROW(check_contrast(spec, {0, 0}), std::invalid_argument);
    EXPECT_THROW(check_contrast(spec, {1, 3}), std::invalid_argument);
    EXPECT_NO_THROW(check_contrast(spec, {0, 2}));
}

TEST(CrtPvalue, ExtremeRank) {
    const std::vector<double> draws{1, 2, 3};
    EXPECT_DOUBLE_EQ(crt_pvalue(draws, 10.0), 0.25);
    EXPECT_DOUBLE_EQ(crt_pvalue(draws, -10.0), 1.0);
}

TEST(CrtPvalue, NearTiesCountAsTies) {
    const std::vector<double> draws{0.1 + 0.2};
    EXPECT_DOUBLE_EQ(crt_pvalue(draws, 0.3), 1.0);
    EXPECT_TRUE(at_least(1.0 - 1e-12, 1.0));
    EXPECT_FALSE(at_least(1.0 - 1e-6, 1.0));
}

TEST(TestContrast, SwappingExposuresNegatesDifference) {
    // Focal a = 0 (leaves 1, 2) and b = 3 (leaves 4, 5). Observed exposures (2, 1).
    const auto net = build_network(6, {{0, 1}, {0, 2}, {3, 4}, {3, 5}});
    const BernoulliDesign design({0.0, 0.5, 0.5, 0.0, 0.5, 0.5});
    const auto spec = ExposureSpec::parse("0,1,2,>=3");
    ModuleSet mset;
    mset.modules = {Module{{0}, {1, 2}, true}, Module{{3}, {4, 5}, true}};
    const Assignment z{0, 1, 1, 0, 1, 0};
    const std::vector<double> y{7.0, 0, 0, 2.0, 0, 0};
    CrtOptions opt;
    opt.draws = 400;
    opt.seed = 3;
    const auto r = test_contrast(net, spec, design, mset, z, y, {1, 2}, StatSpec::dim(), std::vector<bool>(6, false), opt);
    EXPECT_DOUBLE_EQ(r.t_obs, 5.0);
    std::set<double> values(r.draws.begin(), r.draws.end());
    EXPECT_TRUE(values.count(-5.0));
    for (double v : values) EXPECT_TRUE(v == 5.0 || v == -5.0 || std::isinf(v));
    EXPECT_EQ(r.active_focal_count, 2u);
    EXPECT_EQ(r.active_module_count, 2u);
}

TEST(TestContrast, NoActiveModulesIsDegenerate) {
    Cherry c;
    ModuleSet mset;
    mset.modules = {c.module};
    CrtOptions opt;
    opt.draws = 10;
    const auto r = test_contrast(c.net, c.spec, c.design, mset, Assignment{0, 0, 0}, std::vector<double>(3, 1.0), {1, 2},
                                 StatSpec::dim(), std::vector<bool>(3, false), opt);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.pval, 1.0);
}

TEST(TestContrast, DeterministicGivenSeed) {
    const auto net = build_network(6, {{0, 1}, {0, 2}, {3, 4}, {3, 5}, {2, 3}});
    const BernoulliDesign design({0.0, 0.5, 0.5, 0.0, 0.5, 0.5});
    const auto spec = ExposureSpec::parse("0,1,2,>=3");
    const auto mset = build_module_set(net, spec, design, design.randomizable(), {0, 1}, std::vector<bool>(6, false),
                                       PartialAssignment(6, kFree), 5);
    const Assignment z{0, 1, 0, 0, 0, 1};
    const std::vector<double> y{1, 2, 3, 4, 5, 6};
    CrtOptions opt;
    opt.draws = 1000;
    opt.seed = 9;
    const auto a = test_contrast(net, spec, design, mset, z, y, {0, 1}, StatSpec::dim(), std::vector<bool>(6, false), opt);
    const auto b = test_contrast(net, spec, design, mset, z, y, {0, 1}, StatSpec::dim(), std::vector<bool>(6, false), opt);
    EXPECT_EQ(a.pval, b.pval);
    EXPECT_EQ(a.draws, b.draws);
}

TEST(TestContrast, LocationShiftLeavesPvalue) {
    const auto net = build_network(6, {{0, 1}, {0, 2}, {3, 4}, {3, 5}});
    const BernoulliDesign design({0.0, 0.5, 0.5, 0.0, 0.5, 0.5});
    const auto spec = ExposureSpec::parse("0,1,2,>=3");
    ModuleSet mset;
    mset.modules = {Module{{0}, {1, 2}, true}, Module{{3}, {4, 5}, true}};
    const Assignment z{0, 1, 1, 0, 1, 0};
    std::vector<double> y{7.0, 0, 0, 2.0, 0, 0};
    CrtOptions opt;
    opt.draws = 500;
    const auto a = test_contrast(net, spec, design, mset, z, y, {1, 2}, StatSpec::dim(), std::vector<bool>(6, false), opt);
    for (auto& v : y) v -= 3.7;
    const auto b = test_contrast(net, spec, design, mset, z, y, {1, 2}, StatSpec::dim(), std::vector<bool>(6, false), opt);
    EXPECT_EQ(a.pval, b.pval);
}

TEST(TestContrast, MatchesEnumeratedConditionalPvalue) {
    Rng rng(123);
    const auto spec = ExposureSpec::parse("0,1,2,>=3");
    int checked = 0;
    for (int rep = 0; rep < 60 && checked < 10; ++rep) {
        const std::size_t n = 7;
        std::vector<std::pair<UnitId, UnitId>> e;
        for (UnitId a = 0; a < n; ++a)
            for (UnitId b = a + 1; b < n; ++b)
                if (uniform01(rng) < 0.4) e.emplace_back(a, b);
        const auto net = build_network(n, e);
        const BernoulliDesign design(std::vector<double>(n, 0.5));
        const int k = static_cast<int>(rng() % 2);
        const Contrast c{k, k + 1};
        const auto mset = build_module_set(net, spec, design, design.randomizable(), c, std::vector<bool>(n, false),
                                           PartialAssignment(n, kFree), rng());
        Rng zr(rng());
        const auto z = design.sample(zr);
        std::vector<double> y(n);
        for (auto& v : y) v = uniform01(rng);
        const auto exact = oracle::module_pvalue(net, 3, true, design.probs(), mset, z, y, c.low, c.high,
                                                 std::vector<bool>(n, false));
        if (exact.degenerate) continue;
        CrtOptions opt;
        opt.draws = 50000;
        opt.seed = rng();
        const auto r = test_contrast(net, spec, design, mset, z, y, c, StatSpec::dim(), std::vector<bool>(n, false), opt);
        if (std::isinf(exact.t_obs)) EXPECT_EQ(r.t_obs, exact.t_obs);
        else EXPECT_NEAR(r.t_obs, exact.t_obs, 1e-12);
        EXPECT_NEAR(r.pval, exact.pval, 0.01) << "rep " << rep;
        ++checked;
    }
    EXPECT_EQ(checked, 10);
}

TEST(TestContrast, ObserverSeesAssignmentsInsideConditioningEvent) {
    Cherry c;
    ModuleSet mset;
    mset.modules = {c.module};
    CrtOptions opt;
    opt.draws = 200;
    std::size_t seen = 0;
    opt.observer = [&](std::size_t, std::span<const std::uint8_t> z) {
        ++seen;
        EXPECT_EQ(z[0], 0);
        EXPECT_GE(z[1] + z[2], 1);
    };
    test_contrast(c.net, c.spec, c.design, mset, Assignment{0, 1, 0}, std::vector<double>{1, 0, 0}, {1, 2},
                  StatSpec::dim(), std::vector<bool>(3, false), opt);
    EXPECT_EQ(seen, 200u);
}
