#include "spillover/combine.hpp"

#include <algorithm>
#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spillover/rng.hpp"

namespace spillover {

namespace {

void check_pvals(std::span<const double> pvals) {
    if (pvals.empty()) throw std::invalid_argument("no p-values to combine");
    for (double p : pvals)
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p-values must lie in (0,1]");
}

std::vector<double> resolve_weights(std::span<const double> pvals, std::span<const double> weights) {
    std::vector<double> w(weights.begin(), weights.end());
    if (w.empty()) w.assign(pvals.size(), 1.0);
    if (w.size() != pvals.size()) throw std::invalid_argument("weight count does not match p-value count");
    bool any = false;
    for (double x : w) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("weights must be nonnegative");
        any = any || x > 0.0;
    }
    if (!any) throw std::invalid_argument("weights must not all be zero");
    return w;
}

double clamp_p(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

void check_epsilon(double eps) {
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("truncation epsilon must lie in (0, 0.5)");
}

}  // namespace

std::string to_string(CombineRule rule) {
    switch (rule) {
        case CombineRule::Fisher: return "fisher";
        case CombineRule::Stouffer: return "stouffer";
        case CombineRule::Cauchy: return "cauchy";
        case CombineRule::Bonferroni: return "bonferroni";
        case CombineRule::WeightedFisher: return "weighted-fisher";
    }
    return "fisher";
}

CombineRule parse_combine_rule(const std::string& name) {
    if (name == "fisher") return CombineRule::Fisher;
    if (name == "stouffer") return CombineRule::Stouffer;
    if (name == "cauchy") return CombineRule::Cauchy;
    if (name == "bonferroni") return CombineRule::Bonferroni;
    if (name == "weighted-fisher") return CombineRule::WeightedFisher;
    throw std::invalid_argument("unknown combination rule '" + name + "'");
}

double chi2_sf(double x, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
    if (x <= 0.0) return 1.0;
    // 1 - P(df/2, x/2) with P the regularized lower incomplete gamma.
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

double fisher(std::span<const double> pvals) {
    check_pvals(pvals);
    double x = 0.0;
    for (double p : pvals) x -= 2.0 * std::log(p);
    return chi2_sf(x, 2.0 * static_cast<double>(pvals.size()));
}

double stouffer(std::span<const double> pvals, std::span<const double> weights, double epsilon) {
    check_pvals(pvals);
    check_epsilon(epsilon);
    const auto w = resolve_weights(pvals, weights);
    const boost::math::normal_distribution<double> normal;
    double num = 0.0, norm2 = 0.0;
    for (std::size_t k = 0; k < pvals.size(); ++k) {
        num += w[k] * boost::math::quantile(normal, clamp_p(pvals[k], epsilon));
        norm2 += w[k] * w[k];
    }
    return boost::math::cdf(normal, num / std::sqrt(norm2));
}

double cauchy(std::span<const double> pvals, std::span<const double> weights, double epsilon) {
    check_pvals(pvals);
    check_epsilon(epsilon);
    const auto w = resolve_weights(pvals, weights);
    double total = 0.0, stat = 0.0;
    for (double x : w) total += x;
    for (std::size_t k = 0; k < pvals.size(); ++k)
        stat += (w[k] / total) * std::tan((0.5 - clamp_p(pvals[k], epsilon)) * std::numbers::pi);
    const boost::math::cauchy_distribution<double> c;
    return boost::math::cdf(boost::math::complement(c, stat));
}

double bonferroni(std::span<const double> pvals) {
    check_pvals(pvals);
    return std::min(1.0, static_cast<double>(pvals.size()) * *std::min_element(pvals.begin(), pvals.end()));
}

double weighted_fisher(std::span<const double> pvals, std::span<const double> weights, std::uint64_t seed,
                       std::size_t draws) {
    check_pvals(pvals);
    const auto w = resolve_weights(pvals, weights);
    double obs = 0.0;
    for (std::size_t k = 0; k < pvals.size(); ++k) obs -= w[k] * std::log(pvals[k]);
    Rng rng(derive_seed(seed, 0x77f1));
    std::size_t exceed = 0;
    for (std::size_t r = 0; r < draws; ++r) {
        double t = 0.0;
        for (std::size_t k = 0; k < pvals.size(); ++k) {
            double u = uniform01(rng);
            if (u <= 0.0) u = std::numeric_limits<double>::min();
            t -= w[k] * std::log(u);
        }
        if (t >= obs) ++exceed;
    }
    return (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(draws));
}

double combine(const CombinerSpec& spec, std::span<const double> pvals) {
    switch (spec.rule) {
        case CombineRule::Fisher: return fisher(pvals);
        case CombineRule::Stouffer: return stouffer(pvals, spec.weights, spec.epsilon);
        case CombineRule::Cauchy: return cauchy(pvals, spec.weights, spec.epsilon);
        case CombineRule::Bonferroni: return bonferroni(pvals);
        case CombineRule::WeightedFisher: return weighted_fisher(pvals, spec.weights, spec.seed, spec.mc_draws);
    }
    throw std::invalid_argument("unknown combination rule");
}

}  // namespace spillover
