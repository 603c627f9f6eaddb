#include "spillover/design.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace spillover {

BernoulliDesign::BernoulliDesign(std::vector<double> probs) : probs_(std::move(probs)) {
    for (std::size_t i = 0; i < probs_.size(); ++i)
        if (!(probs_[i] >= 0.0 && probs_[i] <= 1.0))
            throw std::invalid_argument("treatment probability of unit " + std::to_string(i) + " outside [0,1]");
}

double BernoulliDesign::log_prob(std::span<const std::uint8_t> z) const {
    if (z.size() != probs_.size()) throw std::invalid_argument("assignment length does not match design");
    double lp = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        const double q = z[i] ? probs_[i] : 1.0 - probs_[i];
        if (q <= 0.0) return -std::numeric_limits<double>::infinity();
        lp += std::log(q);
    }
    return lp;
}

double BernoulliDesign::prob(std::span<const std::uint8_t> z) const { return std::exp(log_prob(z)); }

BernoulliDesign BernoulliDesign::restrict(const PartialAssignment& fixed) const {
    if (fixed.size() != probs_.size()) throw std::invalid_argument("partial assignment length does not match design");
    std::vector<double> p = probs_;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (fixed[i] == kFree) continue;
        if ((fixed[i] == 1 && p[i] <= 0.0) || (fixed[i] == 0 && p[i] >= 1.0))
            throw std::invalid_argument("fixing unit " + std::to_string(i) + " contradicts its treatment probability");
        p[i] = fixed[i] ? 1.0 : 0.0;
    }
    return BernoulliDesign(std::move(p));
}

Assignment BernoulliDesign::sample(Rng& rng) const {
    Assignment z(probs_.size());
    sample_into(z, rng);
    return z;
}

void BernoulliDesign::sample_into(Assignment& z, Rng& rng) const {
    z.resize(probs_.size());
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        const double p = probs_[i];
        z[i] = p >= 1.0 ? 1 : (p <= 0.0 ? 0 : (uniform01(rng) < p ? 1 : 0));
    }
}

std::vector<bool> BernoulliDesign::randomizable() const {
    std::vector<bool> out(probs_.size());
    for (std::size_t i = 0; i < probs_.size(); ++i) out[i] = probs_[i] > 0.0 && probs_[i] < 1.0;
    return out;
}

std::vector<WeightedSubAssignment> enumerate_sub_assignments(
    const BernoulliDesign& design, std::span<const UnitId> units,
    const std::function<bool(std::span<const std::uint8_t>)>& predicate, std::size_t cap) {
    const std::size_t m = units.size();
    if (m > cap)
        throw EnumerationCapExceeded("enumeration over " + std::to_string(m) + " units exceeds cap " +
                                     std::to_string(cap));
    std::vector<WeightedSubAssignment> out;
    std::vector<std::uint8_t> v(m);
    const std::uint64_t total = std::uint64_t{1} << m;
    for (std::uint64_t bits = 0; bits < total; ++bits) {
        double lp = 0.0;
        bool possible = true;
        for (std::size_t t = 0; t < m; ++t) {
            v[t] = static_cast<std::uint8_t>((bits >> t) & 1u);
            const double p = design.p(units[t]);
            const double q = v[t] ? p : 1.0 - p;
            if (q <= 0.0) {
                possible = false;
                break;
            }
            lp += std::log(q);
        }
        if (!possible || (predicate && !predicate(v))) continue;
        out.push_back({v, std::exp(lp)});
    }
    return out;
}

bool BernoulliSampler::support_check(std::span<const std::uint8_t> z) const {
    return z.size() == design_.size() && std::isfinite(design_.log_prob(z));
}

}  // namespace spillover
