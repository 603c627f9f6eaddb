#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spillover/combine.hpp"
#include "spillover/crt.hpp"
#include "spillover/design.hpp"
#include "spillover/monotone.hpp"
#include "spillover/network.hpp"
#include "spillover/teststats.hpp"

namespace spillover {

enum class ColumnSource : std::uint8_t { Sampled, Enumerated, Injected };

// Bipartite graph of units (rows) and assignments (columns); edge iff the unit is in control and
// exposed at one of the contrasted levels under that assignment.
class NullExposureGraph {
public:
    NullExposureGraph() = default;
    NullExposureGraph(const Network& net, const ExposureSpec& spec, Contrast contrast, UnitSet units,
                      std::vector<Assignment> columns, std::vector<double> weights, std::vector<ColumnSource> sources);

    std::size_t rows() const { return units_.size(); }
    std::size_t cols() const { return columns_.size(); }
    const UnitSet& units() const { return units_; }
    const Assignment& column(std::size_t c) const { return columns_[c]; }
    double weight(std::size_t c) const { return weights_[c]; }
    ColumnSource source(std::size_t c) const { return sources_[c]; }
    Contrast contrast() const { return contrast_; }
    std::optional<std::size_t> observed_column() const { return observed_; }
    void set_observed_column(std::size_t c) { observed_ = c; }

    bool edge(std::size_t row, std::size_t col) const {
        return (bits_[col * words_ + row / 64] >> (row % 64)) & 1u;
    }
    std::size_t words() const { return words_; }
    std::span<const std::uint64_t> column_bits(std::size_t col) const { return {bits_.data() + col * words_, words_}; }
    // Whether the unit in row sits at the upper contrast level under column col.
    bool high(std::size_t row, std::size_t col) const {
        return (high_[col * words_ + row / 64] >> (row % 64)) & 1u;
    }
    std::size_t edge_count() const;

private:
    UnitSet units_;
    std::vector<Assignment> columns_;
    std::vector<double> weights_;
    std::vector<ColumnSource> sources_;
    Contrast contrast_;
    std::size_t words_ = 0;
    std::vector<std::uint64_t> bits_;
    std::vector<std::uint64_t> high_;
    std::optional<std::size_t> observed_;
};

// Columns drawn independently from the (conditional) design, each with unit weight. When z_obs is
// given it is inserted at a uniformly random position with the same weight, keeping the columns
// exchangeable.
NullExposureGraph build_ne_graph(const Network& net, const ExposureSpec& spec, const GeneralDesign& design,
                                 Contrast contrast, const UnitSet& units, std::size_t n_rand,
                                 const PartialAssignment& fixed, const Assignment* z_obs, std::uint64_t seed);

// Columns = every assignment in the support of the restricted Bernoulli design, weighted by its
// probability (small designs only).
NullExposureGraph build_ne_graph_enumerated(const Network& net, const ExposureSpec& spec,
                                            const BernoulliDesign& design, Contrast contrast, const UnitSet& units,
                                            const PartialAssignment& fixed, const Assignment* z_obs);

struct Biclique {
    UnitSet units;                     // unit ids
    std::vector<std::size_t> columns;  // column indices
};

struct BicliqueDecomposition {
    std::vector<Biclique> bicliques;
    std::vector<std::size_t> owner;  // column -> biclique index
};

BicliqueDecomposition decompose(const NullExposureGraph& ne, std::uint64_t seed);

// Violations of the partition and completeness properties; empty when valid.
std::vector<std::string> check_decomposition(const NullExposureGraph& ne, const BicliqueDecomposition& dec);

struct BicliqueTestOptions {
    std::size_t draws = kDefaultDraws;  // 0 evaluates the conditional law exactly over the biclique
    std::uint64_t seed = 0;
};

RandomizationResult biclique_test(const NullExposureGraph& ne, const BicliqueDecomposition& dec,
                                  std::span<const double> y, const StatSpec& stat,
                                  const BicliqueTestOptions& options = {});

struct GeneralTestOptions {
    StatSpec stat;
    CombinerSpec combiner;
    std::size_t n_rand = 10000;
    std::size_t draws = kDefaultDraws;
    std::uint64_t seed = 0;
    Direction direction = Direction::Decreasing;
};

// part[i] in [0, K) places unit i in V_1..V_K.
MonotoneReport test_monotone_general(const Network& net, const ExposureSpec& spec, const GeneralDesign& design,
                                     const std::vector<int>& part, const ObservedData& data,
                                     const GeneralTestOptions& options);

// Units of part k whose neighbors all lie in parts <= k.
UnitSet computable_units(const Network& net, const std::vector<int>& part, int k);

}  // namespace spillover
