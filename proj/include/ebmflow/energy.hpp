#pragma once

#include <string>

#include <Eigen/Dense>

#include "ebmflow/params.hpp"
#include "ebmflow/rng.hpp"

namespace ebmflow {

enum class EnergyKind { Mlp, AnalyticGaussian, AnalyticScaledQuadratic };

/// Scalar energy E(x, theta) with the derivative surface the particle
/// fields need: grad wrt x, grad wrt theta, and the mixed quantity
/// grad_x <grad_theta E(x,theta), u>.
///
/// The MLP variant is a fully-connected network (1 or 2 hidden layers of
/// width H, Swish activations, scalar output) with hand-rolled layered
/// backprop; the mixed derivative is computed by forward tangent
/// propagation through the backward pass, never by finite differences.
/// Batch variants take points as columns of a d x B matrix.
class EnergyModel {
public:
    EnergyModel(EnergyKind kind, int input_dim, int hidden = 0, int hidden_layers = 2);

    static EnergyModel mlp(int input_dim, int hidden, int hidden_layers = 2) {
        return {EnergyKind::Mlp, input_dim, hidden, hidden_layers};
    }
    static EnergyModel analytic_gaussian(int input_dim = 2) {
        return {EnergyKind::AnalyticGaussian, input_dim};
    }
    static EnergyModel analytic_scaled_quadratic(int input_dim = 2) {
        return {EnergyKind::AnalyticScaledQuadratic, input_dim};
    }

    EnergyKind kind() const { return kind_; }
    int input_dim() const { return input_dim_; }
    int hidden() const { return hidden_; }
    int hidden_layers() const { return hidden_layers_; }
    const LayoutPtr& layout() const { return layout_; }

    /// Weights ~ Normal(0, 1/fan_in), biases zero. For analytic kinds the
    /// single parameter is set to 1.
    ParameterVector init_params(RngStream& rng) const;

    double energy(const Eigen::VectorXd& x, const ParameterVector& theta) const;
    Eigen::VectorXd energy_batch(const Eigen::MatrixXd& X, const ParameterVector& theta) const;

    Eigen::VectorXd grad_x(const Eigen::VectorXd& x, const ParameterVector& theta) const;
    Eigen::MatrixXd grad_x_batch(const Eigen::MatrixXd& X, const ParameterVector& theta) const;

    ParameterVector grad_theta(const Eigen::VectorXd& x, const ParameterVector& theta) const;
    /// Mean over columns of X of grad_theta, as one parameter vector.
    ParameterVector grad_theta_mean(const Eigen::MatrixXd& X, const ParameterVector& theta) const;

    /// grad_x <grad_theta E(x,theta), u>, exact (directional derivative of
    /// the x-gradient along the parameter tangent u).
    Eigen::VectorXd grad_x_param_dot(const Eigen::VectorXd& x, const ParameterVector& theta,
                                     const ParameterVector& u) const;
    Eigen::MatrixXd grad_x_param_dot_batch(const Eigen::MatrixXd& X, const ParameterVector& theta,
                                           const ParameterVector& u) const;

    /// <grad_theta E(x,theta), u> for every column of X (forward tangent
    /// pass; used for kernel evaluation on grids).
    Eigen::VectorXd param_dot_batch(const Eigen::MatrixXd& X, const ParameterVector& theta,
                                    const ParameterVector& u) const;

private:
    void check_point(const Eigen::MatrixXd& X) const;
    void check_theta(const ParameterVector& theta) const;

    EnergyKind kind_;
    int input_dim_;
    int hidden_;
    int hidden_layers_;
    LayoutPtr layout_;
};

inline double swish(double z) { return z / (1.0 + std::exp(-z)); }

}  // namespace ebmflow
