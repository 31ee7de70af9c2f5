#include "ebmflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ebmflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::MatrixXd Kernel::mean_grad_field(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const {
    MatrixXd F = MatrixXd::Zero(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        for (Eigen::Index j = 0; j < Y.cols(); ++j) F.col(i) += grad_x_eval(X.col(i), Y.col(j));
        F.col(i) /= static_cast<double>(Y.cols());
    }
    return F;
}

Eigen::VectorXd Kernel::mean_embedding(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const {
    VectorXd e = VectorXd::Zero(X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        for (Eigen::Index j = 0; j < Y.cols(); ++j) e[i] += eval(Y.col(j), X.col(i));
        e[i] /= static_cast<double>(Y.cols());
    }
    return e;
}

RbfKernel::RbfKernel(double bandwidth) : h_(bandwidth) {
    if (!(h_ > 0.0)) throw std::invalid_argument("rbf bandwidth must be positive");
}

double RbfKernel::eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    return std::exp(-(x - y).squaredNorm() / (2.0 * h_ * h_));
}

Eigen::VectorXd RbfKernel::grad_x_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    return -(x - y) / (h_ * h_) * eval(x, y);
}

Eigen::MatrixXd RbfKernel::gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const {
    MatrixXd D2 = (-2.0 * X.transpose() * Y).colwise() + X.colwise().squaredNorm().transpose();
    D2.rowwise() += Y.colwise().squaredNorm();
    return (-D2.array() / (2.0 * h_ * h_)).exp();
}

Eigen::MatrixXd RbfKernel::mean_grad_field(const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& Y) const {
    const MatrixXd K = gram(X, Y);  // |X| x |Y|
    const VectorXd row_mean = K.rowwise().mean();
    const MatrixXd weighted = Y * K.transpose() / static_cast<double>(Y.cols());
    MatrixXd F = weighted - (X.array().rowwise() * row_mean.transpose().array()).matrix();
    return F / (h_ * h_);
}

Eigen::VectorXd RbfKernel::mean_embedding(const Eigen::MatrixXd& X,
                                          const Eigen::MatrixXd& Y) const {
    return gram(X, Y).rowwise().mean();
}

NtkKernel::NtkKernel(EnergyModel model, ParameterVector theta) : model_(std::move(model)) {
    thetas_.push_back(std::move(theta));
}

NtkKernel::NtkKernel(EnergyModel model, int ensemble_size, std::uint64_t seed)
    : model_(std::move(model)), ensemble_size_(ensemble_size), averaged_(true) {
    if (ensemble_size_ < 1) throw std::invalid_argument("ntk ensemble size must be >= 1");
    redraw(seed);
}

void NtkKernel::redraw(std::uint64_t seed) {
    thetas_.clear();
    for (int m = 0; m < ensemble_size_; ++m) {
        RngStream rng(derive_seed(seed, 0x6e746bULL, static_cast<std::uint64_t>(m)));
        thetas_.push_back(model_.init_params(rng));
    }
}

double NtkKernel::eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    double acc = 0.0;
    for (const auto& th : thetas_)
        acc += model_.grad_theta(x, th).values.dot(model_.grad_theta(y, th).values);
    return acc / static_cast<double>(thetas_.size());
}

Eigen::VectorXd NtkKernel::grad_x_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    VectorXd g = VectorXd::Zero(x.size());
    for (const auto& th : thetas_) g += model_.grad_x_param_dot(x, th, model_.grad_theta(y, th));
    return g / static_cast<double>(thetas_.size());
}

Eigen::MatrixXd NtkKernel::mean_grad_field(const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& Y) const {
    // mean_y grad_x <g(x), g(y)> = grad_x <g(x), mean_y g(y)>: one batched
    // backward pass over Y and one tangent pass over X per draw.
    MatrixXd F = MatrixXd::Zero(X.rows(), X.cols());
    for (const auto& th : thetas_)
        F += model_.grad_x_param_dot_batch(X, th, model_.grad_theta_mean(Y, th));
    return F / static_cast<double>(thetas_.size());
}

Eigen::VectorXd NtkKernel::mean_embedding(const Eigen::MatrixXd& X,
                                          const Eigen::MatrixXd& Y) const {
    VectorXd e = VectorXd::Zero(X.cols());
    for (const auto& th : thetas_)
        e += model_.param_dot_batch(X, th, model_.grad_theta_mean(Y, th));
    return e / static_cast<double>(thetas_.size());
}

double median_bandwidth(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.cols();
    if (n < 2) return 1.0;
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back((X.col(i) - X.col(j)).norm());
    auto mid = dists.begin() + dists.size() / 2;
    std::nth_element(dists.begin(), mid, dists.end());
    return *mid > 0.0 ? *mid : 1.0;
}

namespace {

// Full cross-gram means without materializing the matrix for non-rbf kernels.
double mean_gram(const Kernel& k, const MatrixXd& X, const MatrixXd& Y) {
    if (X.cols() == 0 || Y.cols() == 0) throw std::invalid_argument("empty sample set");
    if (const auto* rbf = dynamic_cast<const RbfKernel*>(&k))
        return rbf->gram(X, Y).mean();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i)
        for (Eigen::Index j = 0; j < Y.cols(); ++j) acc += k.eval(X.col(i), Y.col(j));
    return acc / static_cast<double>(X.cols() * Y.cols());
}

}  // namespace

double mmd2_vstat(const Kernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    return mean_gram(k, X, X) + mean_gram(k, Y, Y) - 2.0 * mean_gram(k, X, Y);
}

double mmd2_ustat(const Kernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    const Eigen::Index n = X.cols(), m = Y.cols();
    if (n < 2 || m < 2) throw std::invalid_argument("u-statistic needs >= 2 points per set");
    double xx = 0.0, yy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) xx += k.eval(X.col(i), X.col(j));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            if (i != j) yy += k.eval(Y.col(i), Y.col(j));
    return xx / static_cast<double>(n * (n - 1)) + yy / static_cast<double>(m * (m - 1)) -
           2.0 * mean_gram(k, X, Y);
}

std::pair<double, double> kl_descent_identity_check(const Kernel& k, const Eigen::MatrixXd& Xp,
                                                    const Eigen::MatrixXd& Xq) {
    if (Xp.cols() == 0 || Xq.cols() == 0) throw std::invalid_argument("empty sample set");
    // bracket(x') = mean_{Xq} k(., x') - mean_{Xp} k(., x'), the empirical
    // dE/dt; lhs averages it over Xp minus over Xq.
    const double lhs = (k.mean_embedding(Xp, Xq).mean() - k.mean_embedding(Xp, Xp).mean()) -
                       (k.mean_embedding(Xq, Xq).mean() - k.mean_embedding(Xq, Xp).mean());
    const double rhs = -mmd2_vstat(k, Xp, Xq);
    return {lhs, rhs};
}

}  // namespace ebmflow
