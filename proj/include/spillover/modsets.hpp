#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spillover/design.hpp"
#include "spillover/network.hpp"
#include "spillover/rng.hpp"

namespace spillover {

struct Module {
    UnitSet focal;  // eligible focal units
    UnitSet rand;   // eligible randomization units
    bool uniform = false;
};

struct ModuleSet {
    std::vector<Module> modules;
    bool generalized = false;
    // Randomization units pinned at construction time; modules may share them.
    UnitSet conditioned;

    bool empty() const { return modules.empty(); }
    UnitSet units() const;
    UnitSet focal_units() const;
};

struct ActiveModule {
    std::size_t index = 0;
    UnitSet focal;  // a_foc
    UnitSet rand;   // a_rand = N(a_foc) ∩ e_rand
};

struct ActiveSets {
    std::vector<ActiveModule> modules;  // only modules with a nonempty a_foc
    std::size_t focal_count() const;
};

enum class CandidateOrder { Random, FewestFree };

struct BuildOptions {
    bool generalized = false;
    // FewestFree visits candidates with fewer free randomizable neighbors first (seeded ties).
    CandidateOrder order = CandidateOrder::Random;
    std::vector<bool> focal_pool;  // candidate focal units; empty means every unit
    // Per-unit stage of randomizable units (1-based contrast index). A unit with a free randomizable
    // neighbor whose stage exceeds the contrast's upper level is not a candidate. Empty: no stages.
    std::vector<int> stage;
    bool augment = true;
};

// Greedy construction: visit screened candidates in a seeded random order; each unvisited candidate
// j opens a module {j} ∪ R(j) and removes the module and the neighbors of its free units from the
// pool. Modules are then augmented with unused candidates whose free randomizable neighbors all
// belong to the module (generalized sets: candidates sharing j's randomizable neighborhood).
// Randomizable units are those flagged in `randomizable` with 0 < p < 1; pinned ones are conditioned.
ModuleSet build_module_set(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                           const std::vector<bool>& randomizable, Contrast contrast,
                           const std::vector<bool>& excluded_focal, const PartialAssignment& fixed,
                           std::uint64_t seed, const BuildOptions& options = {});

// True when i can serve as a focal unit for the contrast given pinned values.
bool screen_focal(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                  const std::vector<bool>& randomizable, Contrast contrast, const PartialAssignment& fixed,
                  std::size_t i);

ActiveSets active_sets(const ModuleSet& mset, const Network& net, const ExposureSpec& spec,
                       std::span<const std::uint8_t> z, Contrast contrast);

// Monte Carlo mean of the active focal count over M draws from the design restricted to fixed.
double expected_active_focal_count(const ModuleSet& mset, const Network& net, const ExposureSpec& spec,
                                   const BernoulliDesign& design, Contrast contrast, const PartialAssignment& fixed,
                                   std::size_t M, Rng& rng);

// Violations of the module and module-set invariants; empty when valid. Units in `conditioned`
// (default: mset.conditioned) may be shared between modules.
std::vector<std::string> validate(const ModuleSet& mset, const Network& net, const std::vector<bool>& randomizable);

}  // namespace spillover
