#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spillover/combine.hpp"
#include "spillover/crt.hpp"
#include "spillover/design.hpp"
#include "spillover/modsets.hpp"
#include "spillover/network.hpp"
#include "spillover/teststats.hpp"

namespace spillover {

enum class Direction { Decreasing, Increasing };

std::string to_string(Direction d);
Direction parse_direction(const std::string& name);

struct MonotoneOptions {
    StatSpec stat;
    CombinerSpec combiner;
    std::size_t draws = kDefaultDraws;
    std::uint64_t seed = 0;
    AdjustKind adjust = AdjustKind::None;
    Direction direction = Direction::Decreasing;
    // Lets earlier randomization units observed in control serve as later focal units.
    bool relax = false;
    bool generalized = false;
    std::vector<bool> randomizable;  // empty: units with 0 < p < 1
    std::vector<bool> focal_pool;    // empty: every unit
    std::vector<int> stage;          // see BuildOptions::stage
    CandidateOrder order = CandidateOrder::Random;
    // Per-step module sets chosen in advance (e.g. by select_module_sets); built lazily otherwise.
    std::optional<std::vector<ModuleSet>> module_sets;
};

struct StepResult {
    Contrast contrast;
    ModuleSet module_set;
    RandomizationResult result;
    std::size_t conditioned_units = 0;
};

struct MonotoneReport {
    std::vector<StepResult> steps;
    double combined_pval = 1.0;
    CombinerSpec combiner;
    std::vector<double> combiner_weights;
    Direction direction = Direction::Decreasing;
    std::uint64_t seed = 0;

    std::vector<double> pvals() const;
    bool degenerate_everywhere() const;
};

std::vector<double> flip_direction(std::span<const double> y);

// Seeded split of the randomizable units into stages 1..shares.size(+1), with the given shares
// for the leading stages and the remainder in the last one. Other units get stage 0.
std::vector<int> allocate_stages(const std::vector<bool>& randomizable, std::span<const double> shares,
                                 std::uint64_t seed);

// Expected number of units whose exposure falls in each adjacent contrast, exact under the design.
std::vector<double> expected_contrast_counts(const Network& net, const ExposureSpec& spec,
                                             const BernoulliDesign& design);

MonotoneReport test_monotone(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                             const ObservedData& data, const MonotoneOptions& options);

// Builds the per-step chain of module sets without observed treatments: step k excludes the units of
// earlier steps from focal roles and screens against the unconditioned design.
std::vector<ModuleSet> build_module_chain(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                          const std::vector<bool>& randomizable, std::uint64_t seed,
                                          const BuildOptions& build = {});

struct ModuleSetSelection {
    std::vector<ModuleSet> module_sets;
    std::size_t chosen = 0;
    std::uint64_t chosen_seed = 0;
    std::vector<std::uint64_t> seeds;  // build seed of every candidate
    std::vector<double> scores;  // expected active focal count per candidate, summed over steps
};

ModuleSetSelection select_module_sets(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                      std::size_t n_candidates, std::size_t M, std::uint64_t seed,
                                      const std::vector<bool>& randomizable = {}, const BuildOptions& build = {});

// min(1, 2 * lower median).
double aggregate_constructions(std::span<const double> pvals);

struct AggregateResult {
    std::vector<double> pvals;
    std::vector<std::uint64_t> seeds;
    double aggregate = 1.0;
};

// Repeats test_monotone over n_constructions independently seeded constructions.
AggregateResult aggregate_monotone(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                   const ObservedData& data, const MonotoneOptions& options,
                                   std::size_t n_constructions);

}  // namespace spillover
