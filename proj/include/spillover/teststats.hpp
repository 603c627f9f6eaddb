#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spillover/network.hpp"

namespace spillover {

enum class StatKind { DiffInMeans, RankSum };

struct StatSpec {
    StatKind kind = StatKind::DiffInMeans;
    std::function<double(double)> psi1;  // transform of high-exposure outcomes; identity when empty
    std::function<double(double)> psi0;  // transform of low-exposure outcomes; identity when empty
    std::size_t stephenson_s = 1;
    std::function<double(std::size_t)> phi;  // rank score; Stephenson when empty
    std::vector<double> weights;             // optional per-unit DiM weights (length n)

    static StatSpec dim() { return {}; }
    static StatSpec stephenson(std::size_t s);
    // "dim", "rs<s>" (Stephenson rank sum with parameter s).
    static StatSpec parse(const std::string& name);
    std::string name() const;
};

// C(r-1, s-1) for r >= s, else 0.
double stephenson_phi(std::size_t r, std::size_t s);

// high[t] flags whether focal[t] is exposed at the upper contrast level. Empty upper group gives
// -infinity and empty lower group +infinity.
double dim_stat(std::span<const double> y, std::span<const UnitId> focal, std::span<const std::uint8_t> high,
                const StatSpec& spec);
double rank_stat(std::span<const double> y, std::span<const UnitId> focal, std::span<const std::uint8_t> high,
                 const StatSpec& spec);
double evaluate_stat(std::span<const double> y, std::span<const UnitId> focal, std::span<const std::uint8_t> high,
                     const StatSpec& spec);

// Tie-averaged rank scores of y over focal, ties ordered by unit id.
std::vector<double> rank_scores(std::span<const double> y, std::span<const UnitId> focal, const StatSpec& spec);

// Precomputes per-focal terms so repeated evaluation over exposure patterns is cheap.
class PreparedStatistic {
public:
    PreparedStatistic(const StatSpec& spec, std::span<const double> y, std::span<const UnitId> focal);
    double evaluate(std::span<const std::uint8_t> high) const;
    std::size_t size() const { return hi_term_.size(); }

private:
    StatKind kind_;
    std::vector<double> hi_term_;
    std::vector<double> lo_term_;
    std::vector<double> weight_;
};

enum class AdjustKind { None, PreSubtraction, Linear };

std::string to_string(AdjustKind kind);
AdjustKind parse_adjust_kind(const std::string& name);

// Returns y_post with scope entries replaced by y - f(x). The linear model is fit on training units
// only; training units that are in scope but outside the conditioning set are rejected.
std::vector<double> adjust_outcomes(const ObservedData& data, AdjustKind kind, std::span<const UnitId> training,
                                    std::span<const UnitId> scope, const std::vector<bool>& conditioning);

}  // namespace spillover
