#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ebmflow/energy.hpp"

using namespace ebmflow;

namespace {

double rel_err(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / denom;
}

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double denom = std::max({a.norm(), b.norm(), 1e-12});
    return (a - b).norm() / denom;
}

Eigen::VectorXd fd_grad_x(const EnergyModel& model, const Eigen::VectorXd& x,
                          const ParameterVector& theta, double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (model.energy(xp, theta) - model.energy(xm, theta)) / (2.0 * h);
    }
    return g;
}

Eigen::VectorXd fd_grad_theta(const EnergyModel& model, const Eigen::VectorXd& x,
                              const ParameterVector& theta, double h = 1e-5) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        ParameterVector tp = theta, tm = theta;
        tp.values[i] += h;
        tm.values[i] -= h;
        g[i] = (model.energy(x, tp) - model.energy(x, tm)) / (2.0 * h);
    }
    return g;
}

// finite differences of g(x) = <grad_theta(x), u> in x
Eigen::VectorXd fd_grad_x_param_dot(const EnergyModel& model, const Eigen::VectorXd& x,
                                    const ParameterVector& theta, const ParameterVector& u,
                                    double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (model.grad_theta(xp, theta).dot(u) - model.grad_theta(xm, theta).dot(u)) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("analytic gaussian energy and derivatives are closed form") {
    auto model = EnergyModel::analytic_gaussian();
    RngStream rng(7);
    auto theta = model.init_params(rng);
    CHECK(theta.values[0] == 1.0);

    Eigen::Vector2d x(1.0, 2.0);
    CHECK(model.energy(x, theta) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(rel_err(model.grad_x(x, theta), Eigen::Vector2d(1.0, 2.0)) <= 1e-12);

    // E = |x|^2/(2 s^2): dE/ds = -|x|^2/s^3
    auto gt = model.grad_theta(x, theta);
    CHECK(rel_err(gt.values[0], -5.0) <= 1e-12);

    theta.values[0] = 2.0;
    CHECK(model.energy(x, theta) == doctest::Approx(2.5 / 4.0).epsilon(1e-12));
    CHECK(rel_err(model.grad_theta(x, theta).values[0], -5.0 / 8.0) <= 1e-12);

    ParameterVector u = theta;
    u.values[0] = 3.0;
    // grad_x <grad_theta, u> = -2 u x / s^3
    Eigen::Vector2d expect = -2.0 * 3.0 / 8.0 * x;
    CHECK(rel_err(model.grad_x_param_dot(x, theta, u), expect) <= 1e-12);
}

TEST_CASE("scaled quadratic energy matches closed forms") {
    auto model = EnergyModel::analytic_scaled_quadratic();
    RngStream rng(7);
    auto theta = model.init_params(rng);

    Eigen::Vector2d x(1.0, 2.0);
    CHECK(rel_err(model.grad_theta(x, theta).values[0], 2.5) <= 1e-12);

    ParameterVector u = theta;
    u.values[0] = 3.0;
    CHECK(rel_err(model.grad_x_param_dot(x, theta, u), Eigen::Vector2d(3.0, 6.0)) <= 1e-12);

    theta.values[0] = 0.7;
    CHECK(model.energy(x, theta) == doctest::Approx(0.7 * 2.5).epsilon(1e-15));
    CHECK(rel_err(model.grad_x(x, theta), Eigen::Vector2d(0.7, 1.4)) <= 1e-12);
    // grad_theta is independent of theta, grad_x_param_dot of u only
    CHECK(rel_err(model.grad_theta(x, theta).values[0], 2.5) <= 1e-12);
    CHECK(rel_err(model.grad_x_param_dot(x, theta, u), Eigen::Vector2d(3.0, 6.0)) <= 1e-12);
}

TEST_CASE("zero mlp weights give zero energy plus output bias") {
    auto model = EnergyModel::mlp(2, 16);
    auto theta = ParameterVector::zeros(model.layout());
    Eigen::Vector2d x(0.3, -1.7);
    CHECK(model.energy(x, theta) == 0.0);
    theta.view("b_out")(0, 0) = 4.0;
    CHECK(model.energy(x, theta) == 4.0);
    CHECK(model.grad_x(x, theta).norm() == 0.0);
}

TEST_CASE("single effective unit composes swish through both layers") {
    auto model = EnergyModel::mlp(2, 16, 2);
    auto theta = ParameterVector::zeros(model.layout());
    theta.view("W1")(0, 0) = 1.0;
    theta.view("W2")(0, 0) = 1.0;
    theta.view("w_out")(0, 0) = 1.0;

    Eigen::Vector2d x(2.0, 0.0);
    // E = swish(swish(2)) = s(s(2)), s(z) = z/(1+e^-z); hand value frozen
    CHECK(model.energy(x, theta) == doctest::Approx(1.5033606674109596).epsilon(1e-15));

    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    auto sw = [&](double z) { return z * sig(z); };
    CHECK(model.energy(x, theta) == doctest::Approx(sw(sw(2.0))).epsilon(1e-15));
}

TEST_CASE("one hidden layer mlp is swish of the preactivation") {
    auto model = EnergyModel::mlp(2, 8, 1);
    auto theta = ParameterVector::zeros(model.layout());
    theta.view("W1")(0, 0) = 1.0;
    theta.view("W1")(0, 1) = -0.5;
    theta.view("b1")(0, 0) = 0.25;
    theta.view("w_out")(0, 0) = 2.0;
    theta.view("b_out")(0, 0) = -1.0;

    Eigen::Vector2d x(1.0, 2.0);
    double z = 1.0 - 0.5 * 2.0 + 0.25;
    CHECK(model.energy(x, theta) == doctest::Approx(2.0 * swish(z) - 1.0).epsilon(1e-15));
}

TEST_CASE("mlp grad_x matches central finite differences") {
    for (int layers : {1, 2}) {
        auto model = EnergyModel::mlp(2, 24, layers);
        RngStream rng(11 + layers);
        auto theta = model.init_params(rng);
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::VectorXd x = rng.normal_vector(2);
            CHECK(rel_err(model.grad_x(x, theta), fd_grad_x(model, x, theta)) <= 1e-5);
        }
    }
}

TEST_CASE("mlp grad_theta matches central finite differences") {
    auto model = EnergyModel::mlp(2, 12);
    RngStream rng(19);
    auto theta = model.init_params(rng);
    Eigen::VectorXd x = rng.normal_vector(2);
    CHECK(rel_err(model.grad_theta(x, theta).values, fd_grad_theta(model, x, theta)) <= 1e-5);
}

TEST_CASE("zero input with zero biases kills first-layer weight gradients") {
    auto model = EnergyModel::mlp(2, 12);
    RngStream rng(23);
    auto theta = model.init_params(rng);  // biases zero by construction
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    auto gt = model.grad_theta(x, theta);
    CHECK(gt.view("W1").norm() == 0.0);
    CHECK(gt.values.norm() > 0.0);
    CHECK(rel_err(gt.values, fd_grad_theta(model, x, theta)) <= 1e-5);
}

TEST_CASE("grad_x_param_dot matches finite differences of the inner product") {
    for (int layers : {1, 2}) {
        auto model = EnergyModel::mlp(2, 16, layers);
        RngStream rng(31 + layers);
        auto theta = model.init_params(rng);
        ParameterVector u(model.layout(), rng.normal_vector(theta.size()));
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::VectorXd x = rng.normal_vector(2);
            CHECK(rel_err(model.grad_x_param_dot(x, theta, u),
                          fd_grad_x_param_dot(model, x, theta, u)) <= 1e-4);
        }
    }
}

TEST_CASE("grad_x_param_dot is linear in the tangent") {
    auto model = EnergyModel::mlp(2, 16);
    RngStream rng(37);
    auto theta = model.init_params(rng);
    ParameterVector u(model.layout(), rng.normal_vector(theta.size()));
    ParameterVector w(model.layout(), rng.normal_vector(theta.size()));
    Eigen::VectorXd x = rng.normal_vector(2);

    ParameterVector zero = ParameterVector::zeros(model.layout());
    CHECK(model.grad_x_param_dot(x, theta, zero).norm() == 0.0);

    double a = 1.7, b = -0.3;
    Eigen::VectorXd combined = model.grad_x_param_dot(x, theta, a * u + b * w);
    Eigen::VectorXd split =
        a * model.grad_x_param_dot(x, theta, u) + b * model.grad_x_param_dot(x, theta, w);
    CHECK(rel_err(combined, split) <= 1e-10);
}

TEST_CASE("parameter-gradient inner products are symmetric") {
    auto model = EnergyModel::mlp(2, 16);
    RngStream rng(41);
    auto theta = model.init_params(rng);
    Eigen::VectorXd x = rng.normal_vector(2);
    Eigen::VectorXd y = rng.normal_vector(2);
    double kxy = model.grad_theta(x, theta).dot(model.grad_theta(y, theta));
    double kyx = model.grad_theta(y, theta).dot(model.grad_theta(x, theta));
    CHECK(kxy == kyx);
}

TEST_CASE("batch evaluations agree with per-point evaluation") {
    auto model = EnergyModel::mlp(2, 16);
    RngStream rng(43);
    auto theta = model.init_params(rng);
    ParameterVector u(model.layout(), rng.normal_vector(theta.size()));
    Eigen::MatrixXd X = rng.normal_matrix(2, 9);

    Eigen::VectorXd e = model.energy_batch(X, theta);
    Eigen::MatrixXd gx = model.grad_x_batch(X, theta);
    Eigen::MatrixXd gxu = model.grad_x_param_dot_batch(X, theta, u);
    Eigen::VectorXd pd = model.param_dot_batch(X, theta, u);
    Eigen::VectorXd gt_sum = Eigen::VectorXd::Zero(theta.size());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        Eigen::VectorXd x = X.col(c);
        CHECK(rel_err(e[c], model.energy(x, theta)) <= 1e-14);
        CHECK(rel_err(Eigen::VectorXd(gx.col(c)), model.grad_x(x, theta)) <= 1e-13);
        CHECK(rel_err(Eigen::VectorXd(gxu.col(c)), model.grad_x_param_dot(x, theta, u)) <= 1e-12);
        CHECK(rel_err(pd[c], model.grad_theta(x, theta).dot(u)) <= 1e-12);
        gt_sum += model.grad_theta(x, theta).values;
    }
    CHECK(rel_err(model.grad_theta_mean(X, theta).values,
                  Eigen::VectorXd(gt_sum / double(X.cols()))) <= 1e-13);
}

TEST_CASE("dimension and layout mismatches are rejected") {
    auto model = EnergyModel::mlp(2, 8);
    RngStream rng(47);
    auto theta = model.init_params(rng);
    Eigen::VectorXd bad = rng.normal_vector(3);
    CHECK_THROWS_AS(model.energy(bad, theta), LayoutError);

    auto other = EnergyModel::mlp(2, 9);
    auto wrong_theta = ParameterVector::zeros(other.layout());
    Eigen::Vector2d x(0.0, 0.0);
    CHECK_THROWS_AS(model.energy(x, wrong_theta), LayoutError);
    CHECK_THROWS_AS(model.grad_x_param_dot(x, theta, wrong_theta), LayoutError);
}

TEST_CASE("energy evaluation is deterministic") {
    auto model = EnergyModel::mlp(2, 32);
    RngStream rng(53);
    auto theta = model.init_params(rng);
    Eigen::VectorXd x = rng.normal_vector(2);
    double a = model.energy(x, theta);
    double b = model.energy(x, theta);
    CHECK(a == b);

    RngStream rng2(53);
    auto theta2 = model.init_params(rng2);
    CHECK(theta.values == theta2.values);
}
