#include "ebmflow/samplers.hpp"

#include <cmath>

namespace ebmflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::MatrixXd v_alpha_batch(const EnergyModel& model, const ParameterVector& theta_old,
                              const ParameterVector& theta_new, const Eigen::MatrixXd& X) {
    theta_old.check_same_layout(theta_new);
    return model.grad_x_batch(X, theta_old) - model.grad_x_batch(X, theta_new);
}

Eigen::VectorXd v_alpha(const EnergyModel& model, const ParameterVector& theta_old,
                        const ParameterVector& theta_new, const Eigen::VectorXd& x) {
    return v_alpha_batch(model, theta_old, theta_new, x).col(0);
}

Eigen::MatrixXd v_beta_batch(const EnergyModel& model, const ParameterVector& theta,
                             const ParameterVector& dtheta, const Eigen::MatrixXd& X) {
    return -model.grad_x_param_dot_batch(X, theta, dtheta);
}

Eigen::VectorXd v_beta(const EnergyModel& model, const ParameterVector& theta,
                       const ParameterVector& dtheta, const Eigen::VectorXd& x) {
    return v_beta_batch(model, theta, dtheta, x).col(0);
}

Eigen::MatrixXd v_gamma_batch(const Kernel& kernel, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& data_batch,
                              const Eigen::MatrixXd& particle_batch) {
    if (data_batch.cols() == 0 || particle_batch.cols() == 0)
        throw std::invalid_argument("v_gamma requires nonempty batches");
    return kernel.mean_grad_field(X, data_batch) - kernel.mean_grad_field(X, particle_batch);
}

Eigen::VectorXd v_gamma(const Kernel& kernel, const Eigen::VectorXd& x,
                        const Eigen::MatrixXd& data_batch, const Eigen::MatrixXd& particle_batch) {
    return v_gamma_batch(kernel, x, data_batch, particle_batch).col(0);
}

Eigen::VectorXd langevin_step(const Eigen::VectorXd& x,
                              const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& score,
                              double step, RngStream& rng, double noise_scale) {
    if (!(step > 0.0)) throw std::invalid_argument("langevin step must be positive");
    return x + 0.5 * step * score(x) + noise_scale * std::sqrt(step) * rng.normal_vector(x.size());
}

Eigen::MatrixXd langevin_step_batch(const Eigen::MatrixXd& X, const EnergyModel& model,
                                    const ParameterVector& theta, double step, RngStream& rng,
                                    double noise_scale) {
    if (!(step > 0.0)) throw std::invalid_argument("langevin step must be positive");
    MatrixXd next = X - 0.5 * step * model.grad_x_batch(X, theta);
    if (noise_scale != 0.0)
        next += noise_scale * std::sqrt(step) * rng.normal_matrix(X.rows(), X.cols());
    return next;
}

Eigen::VectorXd pcd_step(const Eigen::VectorXd& x, const EnergyModel& model,
                         const ParameterVector& theta_new, double step, RngStream& rng) {
    return langevin_step(
        x, [&](const VectorXd& p) { return (-model.grad_x(p, theta_new)).eval(); }, step, rng,
        1.0);
}

ReplayBuffer::ReplayBuffer(Eigen::MatrixXd storage, double reinit_prob, double noise_scale,
                           InitSampler init_sampler)
    : storage_(std::move(storage)),
      reinit_prob_(reinit_prob),
      noise_scale_(noise_scale),
      init_sampler_(std::move(init_sampler)) {
    if (reinit_prob_ < 0.0 || reinit_prob_ > 1.0)
        throw std::invalid_argument("reinit_prob must lie in [0,1]");
    if (!(noise_scale_ > 0.0) || noise_scale_ > 1.0)
        throw std::invalid_argument("noise_scale must lie in (0,1]");
}

std::pair<Eigen::MatrixXd, std::vector<Eigen::Index>> ReplayBuffer::draw(Eigen::Index m,
                                                                         RngStream& rng) {
    if (m > capacity()) throw std::invalid_argument("draw exceeds buffer capacity");
    auto slots = rng.sample_without_replacement(static_cast<std::size_t>(capacity()),
                                                static_cast<std::size_t>(m));
    MatrixXd points(storage_.rows(), m);
    std::vector<Eigen::Index> indices(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        indices[i] = static_cast<Eigen::Index>(slots[i]);
        if (rng.uniform() <= reinit_prob_)
            points.col(i) = init_sampler_(1, rng).col(0);
        else
            points.col(i) = storage_.col(indices[i]);
    }
    return {points, indices};
}

void ReplayBuffer::write_back(const Eigen::MatrixXd& points,
                              const std::vector<Eigen::Index>& indices) {
    for (std::size_t i = 0; i < indices.size(); ++i)
        storage_.col(indices[i]) = points.col(static_cast<Eigen::Index>(i));
}

ParticleEnsemble propagate(const ParticleEnsemble& ensemble, const Eigen::MatrixXd& field,
                           double dt, const SupportBox& box) {
    if (!(dt > 0.0)) throw std::invalid_argument("propagate requires dt > 0");
    ParticleEnsemble next = ensemble;
    next.points = ensemble.points + dt * field;
    for (Eigen::Index i = 0; i < next.points.cols(); ++i) {
        if (!next.points.col(i).allFinite())
            throw DivergenceError(i, "non-finite field output for particle " + std::to_string(i));
        bool clamped = false;
        for (Eigen::Index r = 0; r < next.points.rows(); ++r) {
            double& v = next.points(r, i);
            if (v < box.lo[r] || v > box.hi[r]) {
                v = std::clamp(v, box.lo[r], box.hi[r]);
                clamped = true;
            }
        }
        if (clamped) ++next.out_of_box_count;
    }
    ++next.step_count;
    return next;
}

ParticleEnsemble propagate(const ParticleEnsemble& ensemble,
                           const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& field,
                           double dt, const SupportBox& box) {
    MatrixXd F(ensemble.points.rows(), ensemble.points.cols());
    for (Eigen::Index i = 0; i < ensemble.points.cols(); ++i)
        F.col(i) = field(ensemble.points.col(i));
    return propagate(ensemble, F, dt, box);
}

}  // namespace ebmflow
