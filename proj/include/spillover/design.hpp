#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "spillover/network.hpp"
#include "spillover/rng.hpp"

namespace spillover {

inline constexpr std::size_t kEnumerationCap = 20;

class EnumerationCapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Independent Bernoulli assignment with unit-specific probabilities.
class BernoulliDesign {
public:
    BernoulliDesign() = default;
    explicit BernoulliDesign(std::vector<double> probs);

    std::size_t size() const { return probs_.size(); }
    double p(std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const { return probs_; }

    // Log-space product; -infinity when z contradicts a degenerate probability.
    double log_prob(std::span<const std::uint8_t> z) const;
    double prob(std::span<const std::uint8_t> z) const;

    BernoulliDesign restrict(const PartialAssignment& fixed) const;

    Assignment sample(Rng& rng) const;
    void sample_into(Assignment& z, Rng& rng) const;

    // Units with 0 < p < 1.
    std::vector<bool> randomizable() const;

private:
    std::vector<double> probs_;
};

struct WeightedSubAssignment {
    std::vector<std::uint8_t> values;  // aligned with the requested units
    double prob = 0.0;
};

// All 2^|units| sub-assignments passing predicate (all of them when it is empty), with their product
// probability over the units.
std::vector<WeightedSubAssignment> enumerate_sub_assignments(
    const BernoulliDesign& design, std::span<const UnitId> units,
    const std::function<bool(std::span<const std::uint8_t>)>& predicate, std::size_t cap = kEnumerationCap);

// Sampler contract for arbitrary assignment mechanisms.
class GeneralDesign {
public:
    virtual ~GeneralDesign() = default;
    virtual std::size_t size() const = 0;
    virtual Assignment sample(Rng& rng) const = 0;
    // Draw from the design conditional on the pinned coordinates of fixed.
    virtual Assignment conditional_sample(const PartialAssignment& fixed, Rng& rng) const = 0;
    virtual bool support_check(std::span<const std::uint8_t> z) const = 0;
    // Log probability of z when the mechanism can evaluate it.
    virtual std::optional<double> log_prob(std::span<const std::uint8_t>) const { return std::nullopt; }
};

class BernoulliSampler final : public GeneralDesign {
public:
    explicit BernoulliSampler(BernoulliDesign design) : design_(std::move(design)) {}
    std::size_t size() const override { return design_.size(); }
    Assignment sample(Rng& rng) const override { return design_.sample(rng); }
    Assignment conditional_sample(const PartialAssignment& fixed, Rng& rng) const override {
        return design_.restrict(fixed).sample(rng);
    }
    bool support_check(std::span<const std::uint8_t> z) const override;
    std::optional<double> log_prob(std::span<const std::uint8_t> z) const override { return design_.log_prob(z); }
    const BernoulliDesign& design() const { return design_; }

private:
    BernoulliDesign design_;
};

}  // namespace spillover
