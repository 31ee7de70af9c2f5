#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ebmflow/rng.hpp"

namespace ebmflow {

/// Analytic 2-D Gaussian mixture with exact sampling, log-density and
/// score. Serves both as the data source and as the evaluation oracle.
class TargetDistribution {
public:
    struct Component {
        Eigen::Vector2d mean;
        Eigen::Matrix2d cov;
        double weight;
    };

    explicit TargetDistribution(std::vector<Component> components);

    /// Single isotropic-free Gaussian.
    static TargetDistribution single_gaussian(const Eigen::Vector2d& mean,
                                              const Eigen::Matrix2d& cov);
    /// k isotropic Gaussians equally spaced on a ring. The default
    /// experiment target is ring_mixture(8, 4.0, 0.3).
    static TargetDistribution ring_mixture(int k = 8, double radius = 4.0, double sigma = 0.3);
    /// rows x cols grid of isotropic Gaussians centered on the origin.
    static TargetDistribution grid_mixture(int rows, int cols, double spacing, double sigma);

    const std::vector<Component>& components() const { return components_; }

    /// i.i.d. draws as columns of a 2 x n matrix; deterministic given rng.
    Eigen::MatrixXd sample(Eigen::Index n, RngStream& rng) const;

    double log_pdf(const Eigen::Vector2d& x) const;
    /// Exact score grad_x log p(x).
    Eigen::Vector2d score(const Eigen::Vector2d& x) const;

private:
    struct Prepared {
        Eigen::Matrix2d chol;      // lower Cholesky of cov
        Eigen::Matrix2d precision;
        double log_norm;           // log weight - log(2*pi) - 0.5*log|cov|
    };
    std::vector<Component> components_;
    std::vector<Prepared> prepared_;
    std::vector<double> cum_weights_;
};

}  // namespace ebmflow
