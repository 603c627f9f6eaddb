#include <gtest/gtest.h>

#include <cmath>

#include "spillover/design.hpp"

using namespace spillover;

TEST(Design, UniformProduct) {
    const BernoulliDesign d({0.5, 0.5, 0.5});
    for (std::uint32_t mask = 0; mask < 8; ++mask) {
        Assignment z{std::uint8_t(mask & 1), std::uint8_t(mask >> 1 & 1), std::uint8_t(mask >> 2 & 1)};
        EXPECT_NEAR(d.prob(z), 0.125, 1e-15);
    }
}

TEST(Design, HandComputedProbability) {
    const BernoulliDesign d({0.2, 0.7});
    EXPECT_NEAR(d.prob(Assignment{1, 0}), 0.06, 1e-15);
}

TEST(Design, ImpossibleAssignment) {
    const BernoulliDesign d({0.0, 0.5});
    EXPECT_EQ(d.prob(Assignment{1, 0}), 0.0);
    EXPECT_TRUE(std::isinf(d.log_prob(Assignment{1, 0})));
}

TEST(Design, RejectsInvalidProbabilities) {
    EXPECT_THROW(BernoulliDesign({1.2}), std::invalid_argument);
    EXPECT_THROW(BernoulliDesign({-0.1}), std::invalid_argument);
}

TEST(Design, LogSpaceAvoidsUnderflow) {
    const BernoulliDesign d(std::vector<double>(5000, 0.5));
    const Assignment z(5000, 1);
    EXPECT_NEAR(d.log_prob(z), 5000 * std::log(0.5), 1e-6);
}

TEST(Restrict, FixesTreatedUnit) {
    const BernoulliDesign d({0.5, 0.5, 0.5});
    const auto r = d.restrict({kFree, kFree, 1});
    EXPECT_EQ(r.probs(), (std::vector<double>{0.5, 0.5, 1.0}));
}

TEST(Restrict, NothingFixedIsIdentity) {
    const BernoulliDesign d({0.3, 0.6});
    EXPECT_EQ(d.restrict({kFree, kFree}).probs(), d.probs());
}

TEST(Restrict, DegenerateUnitUnchanged) {
    const BernoulliDesign d({0.0, 0.6});
    EXPECT_EQ(d.restrict({0, kFree}).probs()[0], 0.0);
}

TEST(Restrict, RejectsPinOutsideSupport) {
    const BernoulliDesign d({0.0, 0.6});
    EXPECT_THROW(d.restrict({1, kFree}), std::invalid_argument);
}

TEST(Enumerate, ExactlyOneTreated) {
    const BernoulliDesign d({0.5, 0.5});
    const UnitSet units{0, 1};
    const auto subs = enumerate_sub_assignments(d, units, [](std::span<const std::uint8_t> v) { return v[0] + v[1] == 1; });
    ASSERT_EQ(subs.size(), 2u);
    for (const auto& s : subs) {
        EXPECT_EQ(s.values[0] + s.values[1], 1);
        EXPECT_NEAR(s.prob, 0.25, 1e-15);
    }
}

TEST(Enumerate, AlwaysTrueSingleUnit) {
    const BernoulliDesign d({0.3});
    const UnitSet units{0};
    const auto subs = enumerate_sub_assignments(d, units, [](std::span<const std::uint8_t>) { return true; });
    ASSERT_EQ(subs.size(), 2u);
    double p0 = 0, p1 = 0;
    for (const auto& s : subs) (s.values[0] ? p1 : p0) = s.prob;
    EXPECT_NEAR(p0, 0.7, 1e-15);
    EXPECT_NEAR(p1, 0.3, 1e-15);
}

TEST(Enumerate, NeverTrueIsEmpty) {
    const BernoulliDesign d({0.3, 0.4});
    const UnitSet units{0, 1};
    EXPECT_TRUE(enumerate_sub_assignments(d, units, [](std::span<const std::uint8_t>) { return false; }).empty());
}

TEST(Enumerate, CapExceeded) {
    const BernoulliDesign d(std::vector<double>(25, 0.5));
    UnitSet units;
    for (UnitId i = 0; i < 25; ++i) units.push_back(i);
    EXPECT_THROW(enumerate_sub_assignments(d, units, {}), EnumerationCapExceeded);
}

TEST(Enumerate, ProbabilitiesSumToOne) {
    const BernoulliDesign d({0.1, 0.35, 0.8, 0.5});
    const UnitSet units{0, 1, 2, 3};
    double total = 0.0;
    for (const auto& s : enumerate_sub_assignments(d, units, {})) total += s.prob;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Design, SamplingFrequencies) {
    const BernoulliDesign d({0.2, 0.9, 0.0, 1.0});
    Rng rng(3);
    std::vector<int> count(4, 0);
    const int N = 40000;
    for (int r = 0; r < N; ++r) {
        const auto z = d.sample(rng);
        for (int i = 0; i < 4; ++i) count[i] += z[i];
    }
    EXPECT_NEAR(count[0] / double(N), 0.2, 0.01);
    EXPECT_NEAR(count[1] / double(N), 0.9, 0.01);
    EXPECT_EQ(count[2], 0);
    EXPECT_EQ(count[3], N);
}

TEST(GeneralDesign, BernoulliSamplerConditionalRespectsPins) {
    const BernoulliSampler s(BernoulliDesign({0.5, 0.5, 0.5}));
    Rng rng(1);
    for (int r = 0; r < 100; ++r) {
        const auto z = s.conditional_sample({1, kFree, 0}, rng);
        EXPECT_EQ(z[0], 1);
        EXPECT_EQ(z[2], 0);
        EXPECT_TRUE(s.support_check(z));
    }
    EXPECT_FALSE(BernoulliSampler(BernoulliDesign({0.0})).support_check(Assignment{1}));
}
