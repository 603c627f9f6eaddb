#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spillover {

enum class CombineRule { Fisher, Stouffer, Cauchy, Bonferroni, WeightedFisher };

std::string to_string(CombineRule rule);
CombineRule parse_combine_rule(const std::string& name);

struct CombinerSpec {
    CombineRule rule = CombineRule::Fisher;
    std::vector<double> weights;  // empty: rule default
    double epsilon = 1e-4;        // clamping for Stouffer and Cauchy
    std::uint64_t seed = 0;       // weighted-Fisher reference draws
    std::size_t mc_draws = 100000;
};

// Survival function of the chi-square distribution.
double chi2_sf(double x, double df);

double fisher(std::span<const double> pvals);
double stouffer(std::span<const double> pvals, std::span<const double> weights, double epsilon = 1e-4);
double cauchy(std::span<const double> pvals, std::span<const double> weights, double epsilon = 1e-4);
double bonferroni(std::span<const double> pvals);
double weighted_fisher(std::span<const double> pvals, std::span<const double> weights, std::uint64_t seed,
                       std::size_t draws = 100000);

double combine(const CombinerSpec& spec, std::span<const double> pvals);

}  // namespace spillover
