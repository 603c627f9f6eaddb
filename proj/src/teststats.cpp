#include "spillover/teststats.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace spillover {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double apply(const std::function<double(double)>& f, double v) { return f ? f(v) : v; }

}  // namespace

StatSpec StatSpec::stephenson(std::size_t s) {
    if (s < 1) throw std::invalid_argument("Stephenson parameter must be at least 1");
    StatSpec spec;
    spec.kind = StatKind::RankSum;
    spec.stephenson_s = s;
    return spec;
}

StatSpec StatSpec::parse(const std::string& name) {
    if (name == "dim") return dim();
    if (name.rfind("rs", 0) == 0 && name.size() > 2) {
        std::size_t pos = 0;
        unsigned long s = 0;
        try {
            s = std::stoul(name.substr(2), &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == name.size() - 2 && s >= 1) return stephenson(s);
    }
    throw std::invalid_argument("unknown statistic '" + name + "' (expected dim or rs<s>)");
}

std::string StatSpec::name() const {
    return kind == StatKind::DiffInMeans ? std::string("dim") : "rs" + std::to_string(stephenson_s);
}

double stephenson_phi(std::size_t r, std::size_t s) {
    if (r < s || s == 0) return 0.0;
    double c = 1.0;
    for (std::size_t i = 1; i < s; ++i) c = c * static_cast<double>(r - s + i) / static_cast<double>(i);
    return c < 1e15 ? std::round(c) : c;
}

double dim_stat(std::span<const double> y, std::span<const UnitId> focal, std::span<const std::uint8_t> high,
                const StatSpec& spec) {
    double s1 = 0, w1 = 0, s0 = 0, w0 = 0;
    for (std::size_t t = 0; t < focal.size(); ++t) {
        const UnitId i = focal[t];
        const double w = spec.weights.empty() ? 1.0 : spec.weights[i];
        if (high[t]) {
            s1 += w * apply(spec.psi1, y[i]);
            w1 += w;
        } else {
            s0 += w * apply(spec.psi0, y[i]);
            w0 += w;
        }
    }
    if (w1 <= 0.0) return -kInf;
    if (w0 <= 0.0) return kInf;
    return s1 / w1 - s0 / w0;
}

std::vector<double> rank_scores(std::span<const double> y, std::span<const UnitId> focal, const StatSpec& spec) {
    const std::size_t n = focal.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ya = y[focal[a]], yb = y[focal[b]];
        return ya != yb ? ya < yb : focal[a] < focal[b];
    });
    auto phi = [&](std::size_t r) { return spec.phi ? spec.phi(r) : stephenson_phi(r, spec.stephenson_s); };
    std::vector<double> scores(n);
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && y[focal[order[end]]] == y[focal[order[start]]]) ++end;
        double sum = 0.0;
        for (std::size_t pos = start; pos < end; ++pos) sum += phi(pos + 1);
        const double avg = sum / static_cast<double>(end - start);
        for (std::size_t pos = start; pos < end; ++pos) scores[order[pos]] = avg;
        start = end;
    }
    return scores;
}

double rank_stat(std::span<const double> y, std::span<const UnitId> focal, std::span<const std::uint8_t> high,
                 const StatSpec& spec) {
    const auto scores = rank_scores(y, focal, spec);
    double total = 0.0;
    for (std::size_t t = 0; t < focal.size(); ++t)
        if (high[t]) total += scores[t];
    return total;
}

double evaluate_stat(std::span<const double> y, std::span<const UnitId> focal, std::span<const std::uint8_t> high,
                     const StatSpec& spec) {
    return spec.kind == StatKind::DiffInMeans ? dim_stat(y, focal, high, spec) : rank_stat(y, focal, high, spec);
}

PreparedStatistic::PreparedStatistic(const StatSpec& spec, std::span<const double> y, std::span<const UnitId> focal)
    : kind_(spec.kind) {
    const std::size_t n = focal.size();
    if (kind_ == StatKind::RankSum) {
        hi_term_ = rank_scores(y, focal, spec);
        return;
    }
    hi_term_.resize(n);
    lo_term_.resize(n);
    weight_.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const UnitId i = focal[t];
        const double w = spec.weights.empty() ? 1.0 : spec.weights[i];
        weight_[t] = w;
        hi_term_[t] = w * apply(spec.psi1, y[i]);
        lo_term_[t] = w * apply(spec.psi0, y[i]);
    }
}

double PreparedStatistic::evaluate(std::span<const std::uint8_t> high) const {
    const std::size_t n = hi_term_.size();
    if (kind_ == StatKind::RankSum) {
        double total = 0.0;
        for (std::size_t t = 0; t < n; ++t)
            if (high[t]) total += hi_term_[t];
        return total;
    }
    double s1 = 0, w1 = 0, s0 = 0, w0 = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (high[t]) {
            s1 += hi_term_[t];
            w1 += weight_[t];
        } else {
            s0 += lo_term_[t];
            w0 += weight_[t];
        }
    }
    if (w1 <= 0.0) return -kInf;
    if (w0 <= 0.0) return kInf;
    return s1 / w1 - s0 / w0;
}

std::string to_string(AdjustKind kind) {
    switch (kind) {
        case AdjustKind::None: return "none";
        case AdjustKind::PreSubtraction: return "pre";
        case AdjustKind::Linear: return "linear";
    }
    return "none";
}

AdjustKind parse_adjust_kind(const std::string& name) {
    if (name == "none") return AdjustKind::None;
    if (name == "pre") return AdjustKind::PreSubtraction;
    if (name == "linear") return AdjustKind::Linear;
    throw std::invalid_argument("unknown adjustment '" + name + "' (expected none, pre or linear)");
}

std::vector<double> adjust_outcomes(const ObservedData& data, AdjustKind kind, std::span<const UnitId> training,
                                    std::span<const UnitId> scope, const std::vector<bool>& conditioning) {
    std::vector<double> y = data.y_post;
    if (kind == AdjustKind::None) return y;
    if (kind == AdjustKind::PreSubtraction) {
        if (!data.y_pre) throw std::invalid_argument("pre-period subtraction requires y_pre");
        for (UnitId i : scope) y[i] = data.y_post[i] - (*data.y_pre)[i];
        return y;
    }
    std::vector<bool> in_scope(y.size(), false);
    for (UnitId i : scope) in_scope[i] = true;
    for (UnitId i : training)
        if (in_scope[i] && !conditioning[i])
            throw std::invalid_argument("training unit " + std::to_string(i) +
                                        " lies in the randomized scope; fit only on conditioned units");
    if (training.empty()) return y;
    if (data.covariates.empty()) throw std::invalid_argument("linear adjustment requires covariates");
    const std::size_t p = data.covariates[training.front()].size();
    Eigen::MatrixXd X(training.size(), p + 1);
    Eigen::VectorXd t(training.size());
    for (std::size_t r = 0; r < training.size(); ++r) {
        const auto& x = data.covariates[training[r]];
        if (x.size() != p) throw std::invalid_argument("covariate rows have inconsistent lengths");
        X(static_cast<Eigen::Index>(r), 0) = 1.0;
        for (std::size_t c = 0; c < p; ++c) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c + 1)) = x[c];
        t(static_cast<Eigen::Index>(r)) = data.y_post[training[r]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) throw std::invalid_argument("linear adjustment design matrix is rank deficient");
    const Eigen::VectorXd beta = qr.solve(t);
    for (UnitId i : scope) {
        const auto& x = data.covariates[i];
        if (x.size() != p) throw std::invalid_argument("covariate rows have inconsistent lengths");
        double f = beta(0);
        for (std::size_t c = 0; c < p; ++c) f += beta(static_cast<Eigen::Index>(c + 1)) * x[c];
        y[i] = data.y_post[i] - f;
    }
    return y;
}

}  // namespace spillover
