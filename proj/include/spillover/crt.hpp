#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spillover/design.hpp"
#include "spillover/modsets.hpp"
#include "spillover/network.hpp"
#include "spillover/teststats.hpp"

namespace spillover {

inline constexpr std::size_t kDefaultDraws = 10000;
inline constexpr std::size_t kRejectionBudget = 1000000;

struct RandomizationResult {
    double pval = 1.0;
    double t_obs = 0.0;
    std::vector<double> draws;
    std::size_t active_focal_count = 0;
    std::size_t active_module_count = 0;
    std::size_t dropped_modules = 0;
    bool degenerate = false;
    std::vector<std::string> diagnostics;
};

// (1 + #{T >= t_obs}) / (1 + R); near-ties within 1e-9 relative error count as ties.
double crt_pvalue(std::span<const double> draws, double t_obs);
bool at_least(double t, double t_obs);

// Conditional law of one active module's free randomization units a_rand \ C, proportional to the
// design probability on the event that every active focal unit stays at a contrasted level.
class ModuleDistribution {
public:
    UnitSet focal;       // active focal units
    UnitSet rand;        // a_rand
    UnitSet free_units;  // a_rand minus conditioned units

    bool enumerated() const { return enumerated_; }
    // Enumerated support (bit t of a support point is the value of free_units[t]).
    const std::vector<std::uint32_t>& support() const { return support_; }
    const std::vector<double>& probabilities() const { return probs_; }
    // Probability that every active focal unit sits at the upper contrast level.
    double p_all_high() const;
    bool is_uniform_two_point() const;

    // Draws free-unit values into sub (aligned with free_units) and upper-level flags into high
    // (aligned with focal).
    void sample(Rng& rng, std::vector<std::uint8_t>& sub, std::vector<std::uint8_t>& high) const;
    // Upper-level flags of the focal units under free-unit values sub.
    bool flags(std::span<const std::uint8_t> sub, std::vector<std::uint8_t>& high) const;

private:
    friend ModuleDistribution module_randomization_distribution(const Module&, const Network&, const ExposureSpec&,
                                                                std::span<const std::uint8_t>, Contrast,
                                                                const BernoulliDesign&, const std::vector<bool>&,
                                                                std::size_t);
    Contrast contrast_;
    ExposureSpec spec_;
    bool enumerated_ = true;
    std::vector<std::size_t> base_;                   // treated count from pinned neighbors, per focal
    std::vector<std::vector<std::uint32_t>> links_;   // per focal, indices into free_units
    std::vector<std::uint32_t> support_;
    std::vector<double> probs_;
    std::vector<double> cumulative_;
    std::vector<std::uint32_t> pattern_of_;
    std::vector<std::vector<std::uint8_t>> patterns_;
    std::vector<double> free_probs_;
};

ModuleDistribution module_randomization_distribution(const Module& module, const Network& net, const ExposureSpec& spec,
                                                     std::span<const std::uint8_t> z_obs, Contrast contrast,
                                                     const BernoulliDesign& design,
                                                     const std::vector<bool>& conditioning,
                                                     std::size_t cap = kEnumerationCap);

struct CrtOptions {
    std::size_t draws = kDefaultDraws;
    std::uint64_t seed = 0;
    bool keep_draws = true;
    // Receives each replicated full assignment (forces sequential execution).
    std::function<void(std::size_t, std::span<const std::uint8_t>)> observer;
};

// Conditional randomization test of one contrast over a module set. Conditioning marks units held at
// z_obs; generalized module sets additionally condition on all of their focal units.
RandomizationResult test_contrast(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                  const ModuleSet& mset, std::span<const std::uint8_t> z_obs,
                                  std::span<const double> y, Contrast contrast, const StatSpec& stat,
                                  const std::vector<bool>& conditioning, const CrtOptions& options);

}  // namespace spillover
