#include "ebmflow/targets.hpp"

#include <cmath>
#include <stdexcept>

namespace ebmflow {

TargetDistribution::TargetDistribution(std::vector<Component> components)
    : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
        if (c.weight <= 0.0) throw std::invalid_argument("mixture weights must be positive");
        if (std::abs(c.cov(0, 1) - c.cov(1, 0)) > 1e-12)
            throw std::invalid_argument("covariance must be symmetric");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("mixture weights must sum to 1");
    double cum = 0.0;
    for (const auto& c : components_) {
        Eigen::LLT<Eigen::Matrix2d> llt(c.cov);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("covariance must be positive definite");
        Prepared p;
        p.chol = llt.matrixL();
        p.precision = c.cov.inverse();
        const double logdet = 2.0 * std::log(p.chol(0, 0) * p.chol(1, 1));
        p.log_norm = std::log(c.weight) - std::log(2.0 * M_PI) - 0.5 * logdet;
        prepared_.push_back(p);
        cum += c.weight;
        cum_weights_.push_back(cum);
    }
    cum_weights_.back() = 1.0;
}

TargetDistribution TargetDistribution::single_gaussian(const Eigen::Vector2d& mean,
                                                       const Eigen::Matrix2d& cov) {
    return TargetDistribution({{mean, cov, 1.0}});
}

TargetDistribution TargetDistribution::ring_mixture(int k, double radius, double sigma) {
    std::vector<Component> comps;
    for (int i = 0; i < k; ++i) {
        const double a = 2.0 * M_PI * i / k;
        comps.push_back({Eigen::Vector2d(radius * std::cos(a), radius * std::sin(a)),
                         sigma * sigma * Eigen::Matrix2d::Identity(), 1.0 / k});
    }
    return TargetDistribution(std::move(comps));
}

TargetDistribution TargetDistribution::grid_mixture(int rows, int cols, double spacing,
                                                    double sigma) {
    std::vector<Component> comps;
    const double x0 = -spacing * (cols - 1) / 2.0;
    const double y0 = -spacing * (rows - 1) / 2.0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            comps.push_back({Eigen::Vector2d(x0 + spacing * c, y0 + spacing * r),
                             sigma * sigma * Eigen::Matrix2d::Identity(),
                             1.0 / (rows * cols)});
    return TargetDistribution(std::move(comps));
}

Eigen::MatrixXd TargetDistribution::sample(Eigen::Index n, RngStream& rng) const {
    if (n < 1) throw std::invalid_argument("sample count must be >= 1");
    Eigen::MatrixXd X(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = rng.uniform();
        std::size_t c = 0;
        while (c + 1 < cum_weights_.size() && u > cum_weights_[c]) ++c;
        Eigen::Vector2d z(rng.normal(), rng.normal());
        X.col(i) = components_[c].mean + prepared_[c].chol * z;
    }
    return X;
}

double TargetDistribution::log_pdf(const Eigen::Vector2d& x) const {
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const Eigen::Vector2d d = x - components_[c].mean;
        terms[c] = prepared_[c].log_norm - 0.5 * d.dot(prepared_[c].precision * d);
        max_term = std::max(max_term, terms[c]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc);
}

Eigen::Vector2d TargetDistribution::score(const Eigen::Vector2d& x) const {
    const double lp = log_pdf(x);
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const Eigen::Vector2d d = x - components_[c].mean;
        const double lt = prepared_[c].log_norm - 0.5 * d.dot(prepared_[c].precision * d);
        s += std::exp(lt - lp) * (-(prepared_[c].precision * d));
    }
    return s;
}

}  // namespace ebmflow
