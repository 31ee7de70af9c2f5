#pragma once

#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ebmflow/energy.hpp"

namespace ebmflow {

/// Positive-definite kernel with gradient evaluation. Batch points are
/// columns of d x N matrices.
class Kernel {
public:
    virtual ~Kernel() = default;

    virtual double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const = 0;
    /// Gradient with respect to the first argument.
    virtual Eigen::VectorXd grad_x_eval(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& y) const = 0;

    /// For every column x of X: mean over columns y of Y of grad_x_eval(x, y).
    virtual Eigen::MatrixXd mean_grad_field(const Eigen::MatrixXd& X,
                                            const Eigen::MatrixXd& Y) const;

    /// For every column x of X: mean over columns y of Y of eval(y, x).
    virtual Eigen::VectorXd mean_embedding(const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& Y) const;
};

class RbfKernel : public Kernel {
public:
    explicit RbfKernel(double bandwidth);
    double bandwidth() const { return h_; }

    double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override;
    Eigen::VectorXd grad_x_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override;
    Eigen::MatrixXd mean_grad_field(const Eigen::MatrixXd& X,
                                    const Eigen::MatrixXd& Y) const override;
    Eigen::VectorXd mean_embedding(const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& Y) const override;

    Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const;

private:
    double h_;
};

/// Neural tangent kernel k(x,y) = <grad_theta E(x,theta), grad_theta E(y,theta)>,
/// averaged over one or more parameter draws. One stored draw gives the
/// fixed-theta kernel; M draws from the initialization distribution give the
/// averaged-init kernel (redraw() refreshes them, e.g. once per trainer
/// iteration). The draws are fixed for the lifetime of one field evaluation.
class NtkKernel : public Kernel {
public:
    NtkKernel(EnergyModel model, ParameterVector theta);
    NtkKernel(EnergyModel model, int ensemble_size, std::uint64_t seed);

    void redraw(std::uint64_t seed);
    const std::vector<ParameterVector>& draws() const { return thetas_; }
    /// True when constructed with draws from the initialization distribution
    /// (as opposed to one externally fixed theta).
    bool averaged_init() const { return averaged_; }

    double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override;
    Eigen::VectorXd grad_x_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const override;
    Eigen::MatrixXd mean_grad_field(const Eigen::MatrixXd& X,
                                    const Eigen::MatrixXd& Y) const override;
    Eigen::VectorXd mean_embedding(const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& Y) const override;

private:
    EnergyModel model_;
    std::vector<ParameterVector> thetas_;
    int ensemble_size_ = 1;
    bool averaged_ = false;
};

/// Median pairwise Euclidean distance over the columns of X (the rbf
/// bandwidth heuristic; recomputed once per run, not per step).
double median_bandwidth(const Eigen::MatrixXd& X);

/// Biased V-statistic: mean k(X,X) + mean k(Y,Y) - 2 mean k(X,Y).
double mmd2_vstat(const Kernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);
/// Unbiased U-statistic (diagonal terms excluded); needs >= 2 points per set.
double mmd2_ustat(const Kernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Both sides of the empirical KL-descent identity: the energy time
/// derivative (mean-embedding difference) averaged against the two sample
/// sets on the left, -mmd2_vstat on the right. Equal up to roundoff.
std::pair<double, double> kl_descent_identity_check(const Kernel& k, const Eigen::MatrixXd& Xp,
                                                    const Eigen::MatrixXd& Xq);

}  // namespace ebmflow
