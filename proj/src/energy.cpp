#include "ebmflow/energy.hpp"

#include <cmath>

namespace ebmflow {

namespace {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

ArrayXXd sigmoid(const ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

// s(z) = z*sigma(z)
ArrayXXd swish_a(const ArrayXXd& z) { return z * sigmoid(z); }

// s'(z) = sigma(z) * (1 + z*(1 - sigma(z)))
ArrayXXd swish_d1(const ArrayXXd& z) {
    ArrayXXd s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

// s''(z) = sigma(z)*(1-sigma(z)) * (2 + z*(1 - 2*sigma(z)))
ArrayXXd swish_d2(const ArrayXXd& z) {
    ArrayXXd s = sigmoid(z);
    return s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s));
}

// Forward activations for the MLP, shared by all derivative passes.
struct Forward {
    MatrixXd Z1, A1;  // first hidden layer, H x B
    MatrixXd Z2, A2;  // second hidden layer (2-layer nets only)
};

Forward forward_mlp(const ParameterVector& th, const MatrixXd& X, int layers) {
    Forward f;
    f.Z1 = (th.view("W1") * X).colwise() + th.view("b1").col(0);
    f.A1 = swish_a(f.Z1.array());
    if (layers == 2) {
        f.Z2 = (th.view("W2") * f.A1).colwise() + th.view("b2").col(0);
        f.A2 = swish_a(f.Z2.array());
    }
    return f;
}

}  // namespace

EnergyModel::EnergyModel(EnergyKind kind, int input_dim, int hidden, int hidden_layers)
    : kind_(kind), input_dim_(input_dim), hidden_(hidden), hidden_layers_(hidden_layers) {
    auto layout = std::make_shared<ParameterLayout>();
    switch (kind_) {
        case EnergyKind::Mlp: {
            if (hidden_ < 1) throw LayoutError("mlp hidden width must be >= 1");
            if (hidden_layers_ != 1 && hidden_layers_ != 2)
                throw LayoutError("mlp supports 1 or 2 hidden layers");
            layout->add("W1", hidden_, input_dim_);
            layout->add("b1", hidden_, 1);
            if (hidden_layers_ == 2) {
                layout->add("W2", hidden_, hidden_);
                layout->add("b2", hidden_, 1);
            }
            layout->add("w_out", hidden_, 1);
            layout->add("b_out", 1, 1);
            break;
        }
        case EnergyKind::AnalyticGaussian:
            layout->add("sigma", 1, 1);
            break;
        case EnergyKind::AnalyticScaledQuadratic:
            layout->add("scale", 1, 1);
            break;
    }
    layout_ = layout;
}

void EnergyModel::check_point(const Eigen::MatrixXd& X) const {
    if (X.rows() != input_dim_)
        throw LayoutError("point dimension " + std::to_string(X.rows()) +
                          " does not match model input dimension " + std::to_string(input_dim_));
}

void EnergyModel::check_theta(const ParameterVector& theta) const {
    if (!theta.layout || !(*theta.layout == *layout_))
        throw LayoutError("parameter vector does not match model layout");
}

ParameterVector EnergyModel::init_params(RngStream& rng) const {
    ParameterVector p = ParameterVector::zeros(layout_);
    if (kind_ != EnergyKind::Mlp) {
        p.values[0] = 1.0;
        return p;
    }
    for (const auto& seg : layout_->segments()) {
        if (seg.name[0] != 'W' && seg.name[0] != 'w') continue;
        const double fan_in = seg.name == "W1" ? input_dim_ : hidden_;
        const double std_dev = 1.0 / std::sqrt(fan_in);
        for (Eigen::Index i = 0; i < seg.size(); ++i)
            p.values[seg.offset + i] = std_dev * rng.normal();
    }
    return p;
}

Eigen::VectorXd EnergyModel::energy_batch(const Eigen::MatrixXd& X,
                                          const ParameterVector& theta) const {
    check_point(X);
    check_theta(theta);
    switch (kind_) {
        case EnergyKind::AnalyticGaussian: {
            const double s = theta.values[0];
            return X.colwise().squaredNorm() / (2.0 * s * s);
        }
        case EnergyKind::AnalyticScaledQuadratic:
            return theta.values[0] * X.colwise().squaredNorm() / 2.0;
        case EnergyKind::Mlp: {
            Forward f = forward_mlp(theta, X, hidden_layers_);
            const MatrixXd& top = hidden_layers_ == 2 ? f.A2 : f.A1;
            VectorXd e = top.transpose() * theta.view("w_out").col(0);
            e.array() += theta.values[layout_->segment("b_out").offset];
            return e;
        }
    }
    return {};
}

double EnergyModel::energy(const Eigen::VectorXd& x, const ParameterVector& theta) const {
    return energy_batch(x, theta)[0];
}

Eigen::MatrixXd EnergyModel::grad_x_batch(const Eigen::MatrixXd& X,
                                          const ParameterVector& theta) const {
    check_point(X);
    check_theta(theta);
    switch (kind_) {
        case EnergyKind::AnalyticGaussian: {
            const double s = theta.values[0];
            return X / (s * s);
        }
        case EnergyKind::AnalyticScaledQuadratic:
            return theta.values[0] * X;
        case EnergyKind::Mlp: {
            Forward f = forward_mlp(theta, X, hidden_layers_);
            const VectorXd w_out = theta.view("w_out").col(0);
            MatrixXd d1;
            if (hidden_layers_ == 2) {
                MatrixXd d2 = (swish_d1(f.Z2.array()).colwise() * w_out.array()).matrix();
                d1 = (theta.view("W2").transpose() * d2).array() * swish_d1(f.Z1.array());
            } else {
                d1 = (swish_d1(f.Z1.array()).colwise() * w_out.array()).matrix();
            }
            return theta.view("W1").transpose() * d1;
        }
    }
    return {};
}

Eigen::VectorXd EnergyModel::grad_x(const Eigen::VectorXd& x, const ParameterVector& theta) const {
    return grad_x_batch(x, theta).col(0);
}

ParameterVector EnergyModel::grad_theta_mean(const Eigen::MatrixXd& X,
                                             const ParameterVector& theta) const {
    check_point(X);
    check_theta(theta);
    ParameterVector g = ParameterVector::zeros(layout_);
    const double B = static_cast<double>(X.cols());
    switch (kind_) {
        case EnergyKind::AnalyticGaussian: {
            const double s = theta.values[0];
            g.values[0] = -X.colwise().squaredNorm().sum() / (B * s * s * s);
            return g;
        }
        case EnergyKind::AnalyticScaledQuadratic:
            g.values[0] = X.colwise().squaredNorm().sum() / (2.0 * B);
            return g;
        case EnergyKind::Mlp: {
            Forward f = forward_mlp(theta, X, hidden_layers_);
            const VectorXd w_out = theta.view("w_out").col(0);
            MatrixXd d1, d2;
            if (hidden_layers_ == 2) {
                d2 = (swish_d1(f.Z2.array()).colwise() * w_out.array()).matrix();
                d1 = (theta.view("W2").transpose() * d2).array() * swish_d1(f.Z1.array());
                g.view("W2") = d2 * f.A1.transpose() / B;
                g.view("b2") = d2.rowwise().mean();
                g.view("w_out") = f.A2.rowwise().mean();
            } else {
                d1 = (swish_d1(f.Z1.array()).colwise() * w_out.array()).matrix();
                g.view("w_out") = f.A1.rowwise().mean();
            }
            g.view("W1") = d1 * X.transpose() / B;
            g.view("b1") = d1.rowwise().mean();
            g.view("b_out")(0, 0) = 1.0;
            return g;
        }
    }
    return g;
}

ParameterVector EnergyModel::grad_theta(const Eigen::VectorXd& x,
                                        const ParameterVector& theta) const {
    return grad_theta_mean(x, theta);
}

Eigen::MatrixXd EnergyModel::grad_x_param_dot_batch(const Eigen::MatrixXd& X,
                                                    const ParameterVector& theta,
                                                    const ParameterVector& u) const {
    check_point(X);
    check_theta(theta);
    theta.check_same_layout(u);
    switch (kind_) {
        case EnergyKind::AnalyticGaussian: {
            const double s = theta.values[0];
            return (-2.0 * u.values[0] / (s * s * s)) * X;
        }
        case EnergyKind::AnalyticScaledQuadratic:
            return u.values[0] * X;
        case EnergyKind::Mlp: {
            // Forward tangent pass along the parameter direction u, then
            // the same tangents pushed through the backward-to-x pass.
            Forward f = forward_mlp(theta, X, hidden_layers_);
            const VectorXd w_out = theta.view("w_out").col(0);
            const VectorXd u_out = u.view("w_out").col(0);
            ArrayXXd sp1 = swish_d1(f.Z1.array());
            ArrayXXd spp1 = swish_d2(f.Z1.array());
            MatrixXd dZ1 = (u.view("W1") * X).colwise() + u.view("b1").col(0);
            if (hidden_layers_ == 1) {
                MatrixXd d1 = (sp1.colwise() * w_out.array()).matrix();
                MatrixXd dd1 = (sp1.colwise() * u_out.array() +
                                (spp1 * dZ1.array()).colwise() * w_out.array())
                                   .matrix();
                return u.view("W1").transpose() * d1 + theta.view("W1").transpose() * dd1;
            }
            ArrayXXd sp2 = swish_d1(f.Z2.array());
            ArrayXXd spp2 = swish_d2(f.Z2.array());
            MatrixXd dA1 = (sp1 * dZ1.array()).matrix();
            MatrixXd dZ2 =
                ((u.view("W2") * f.A1 + theta.view("W2") * dA1).colwise() + u.view("b2").col(0));
            MatrixXd d2 = (sp2.colwise() * w_out.array()).matrix();
            MatrixXd dd2 = (sp2.colwise() * u_out.array() +
                            (spp2 * dZ2.array()).colwise() * w_out.array())
                               .matrix();
            MatrixXd t = theta.view("W2").transpose() * d2;
            MatrixXd dt = u.view("W2").transpose() * d2 + theta.view("W2").transpose() * dd2;
            MatrixXd d1 = (t.array() * sp1).matrix();
            MatrixXd dd1 = (dt.array() * sp1 + t.array() * spp1 * dZ1.array()).matrix();
            return u.view("W1").transpose() * d1 + theta.view("W1").transpose() * dd1;
        }
    }
    return {};
}

Eigen::VectorXd EnergyModel::grad_x_param_dot(const Eigen::VectorXd& x,
                                              const ParameterVector& theta,
                                              const ParameterVector& u) const {
    return grad_x_param_dot_batch(x, theta, u).col(0);
}

Eigen::VectorXd EnergyModel::param_dot_batch(const Eigen::MatrixXd& X,
                                             const ParameterVector& theta,
                                             const ParameterVector& u) const {
    check_point(X);
    check_theta(theta);
    theta.check_same_layout(u);
    switch (kind_) {
        case EnergyKind::AnalyticGaussian: {
            const double s = theta.values[0];
            return (-u.values[0] / (s * s * s)) * X.colwise().squaredNorm().transpose();
        }
        case EnergyKind::AnalyticScaledQuadratic:
            return (u.values[0] / 2.0) * X.colwise().squaredNorm().transpose();
        case EnergyKind::Mlp: {
            Forward f = forward_mlp(theta, X, hidden_layers_);
            MatrixXd dZ1 = (u.view("W1") * X).colwise() + u.view("b1").col(0);
            MatrixXd dA1 = (swish_d1(f.Z1.array()) * dZ1.array()).matrix();
            const MatrixXd* top = &f.A1;
            const MatrixXd* dtop = &dA1;
            MatrixXd dA2;
            if (hidden_layers_ == 2) {
                MatrixXd dZ2 = ((u.view("W2") * f.A1 + theta.view("W2") * dA1).colwise() +
                                u.view("b2").col(0));
                dA2 = (swish_d1(f.Z2.array()) * dZ2.array()).matrix();
                top = &f.A2;
                dtop = &dA2;
            }
            VectorXd e = top->transpose() * u.view("w_out").col(0) +
                         dtop->transpose() * theta.view("w_out").col(0);
            e.array() += u.values[layout_->segment("b_out").offset];
            return e;
        }
    }
    return {};
}

}  // namespace ebmflow
