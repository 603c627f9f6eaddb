#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spillover/combine.hpp"
#include "spillover/design.hpp"
#include "spillover/monotone.hpp"
#include "spillover/network.hpp"
#include "spillover/teststats.hpp"

namespace spillover {

// Shape and rate (mean = shape / rate).
struct GammaParams {
    double shape = 2.0;
    double rate = 2.0;
};

// Method of moments with the population variance.
GammaParams calibrate_gamma(std::span<const double> y);

enum class DgpKind { DGP1, DGP2, DGP3, DGP4 };

std::string to_string(DgpKind kind);
DgpKind parse_dgp_kind(const std::string& name);

struct DgpConfig {
    DgpKind kind = DgpKind::DGP1;
    double tau = 0.0;
    double theta = 0.0;   // degree confounding
    double radius = 0.0;  // error correlation radius
    GammaParams gamma;
    std::uint64_t seed = 0;
};

// y_i(z, w) over raw treated-neighbor counts w.
class PotentialOutcomes {
public:
    PotentialOutcomes(DgpConfig config, std::vector<double> base, std::vector<double> degree);

    double operator()(std::size_t i, int z, std::size_t w) const;
    std::vector<double> observe(const Network& net, std::span<const std::uint8_t> z) const;

    const DgpConfig& config() const { return config_; }
    // y_i(0,0), or y*_i(0,0) under DGP4.
    const std::vector<double>& base() const { return base_; }

private:
    DgpConfig config_;
    std::vector<double> base_;
    std::vector<double> degree_;
};

PotentialOutcomes make_dgp(const DgpConfig& config, const Network& net);

// |sum_{d(i,j)<=r} eps_j| / sqrt(#{j : d(i,j) <= r}) for every unit, i in its own ball.
std::vector<double> correlated_error_term(std::span<const Point> coords, double radius, std::span<const double> eps);

struct SyntheticConfig {
    std::size_t n = 2000;
    double hotspot_share = 0.05;
    double p_treat = 0.4;
    double radius = 1.0;
    double side = 40.0;              // square region side length
    double new_cluster_prob = 0.17;  // chance a hotspot starts a new cluster
    double cluster_spread = 1.5;     // sd of hotspot offsets within a cluster
    std::uint64_t seed = 0;
};

struct SyntheticNetwork {
    Network net;
    std::vector<bool> hotspot;
    BernoulliDesign design;
};

// Hotspots form clusters grown by preferential attachment; every other unit attaches to a hotspot
// chosen with probability proportional to its current following and lands within the radius of it.
// Edges join pairs within the radius when at least one endpoint is a hotspot.
SyntheticNetwork make_synthetic_network(const SyntheticConfig& config);

struct OlsResult {
    std::vector<double> coef;  // intercept, z, w, z*w
    std::vector<double> se;
    double t = 0.0;            // on the w coefficient
    double pval = 1.0;
    std::size_t df = 0;
};

// log y on (1, z, w, z*w); one-sided t-test on w. positive_alternative tests coef > 0.
OlsResult ols_baseline(std::span<const std::uint8_t> z, std::span<const double> w, std::span<const double> y,
                       bool positive_alternative = true);

struct StudyMethod {
    bool ols = false;
    StatSpec stat;
    CombineRule combiner = CombineRule::Fisher;
    std::string statistic_name() const;
    std::string combiner_name() const;
};

struct StudyCell {
    DgpConfig dgp;
    std::string param;  // label written to the table
};

struct StudyOptions {
    std::vector<StudyCell> cells;
    std::vector<StudyMethod> methods;
    std::size_t reps = 2000;
    std::size_t draws = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    Direction direction = Direction::Decreasing;
    std::vector<bool> focal_pool;  // empty: every unit
    std::vector<int> stage;        // empty: no stages
    CandidateOrder order = CandidateOrder::Random;
};

struct StudyRow {
    std::string dgp;
    std::string param;
    std::string method;  // "randomization" or "ols"
    std::string statistic;
    std::string combiner;
    double rejection_rate = 0.0;
    double mc_se = 0.0;
    std::size_t reps = 0;
};

// Each replication draws Z from the design and fresh base outcomes, then runs every method.
std::vector<StudyRow> run_study(const Network& net, const ExposureSpec& spec, const BernoulliDesign& design,
                                const StudyOptions& options);

void write_study_csv(std::ostream& os, const std::vector<StudyRow>& rows);

struct GroupingResult {
    double pval = 1.0;
    double t_obs = 0.0;
    std::size_t draws = 0;
    bool exact = false;
};

// AIC(saturated at g_low) - AIC(saturated at g_high) fit on never-treated units, with
// AIC = n log(RSS / n) + 2 (params + 1); empty exposure cells are dropped.
double aic_gap(std::span<const double> y, std::span<const std::size_t> raw_counts, std::span<const UnitId> units,
               std::size_t g_low, std::size_t g_high);

// Randomization p-value of the AIC gap. draws == 0 enumerates every assignment of the randomizable units.
GroupingResult aic_grouping_test(const Network& net, std::size_t g_low, std::size_t g_high,
                                 const BernoulliDesign& design, std::span<const std::uint8_t> z_obs,
                                 std::span<const double> y, std::size_t draws, std::uint64_t seed);

}  // namespace spillover
