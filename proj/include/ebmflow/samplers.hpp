#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ebmflow/energy.hpp"
#include "ebmflow/kernels.hpp"
#include "ebmflow/rng.hpp"

namespace ebmflow {

struct DivergenceError : std::runtime_error {
    Eigen::Index particle_index;
    DivergenceError(Eigen::Index i, const std::string& what)
        : std::runtime_error(what), particle_index(i) {}
};

/// Axis-aligned support box; particles leaving it are clamped and counted.
struct SupportBox {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    static SupportBox square(double half_width, int dim = 2) {
        SupportBox b;
        b.lo = Eigen::VectorXd::Constant(dim, -half_width);
        b.hi = Eigen::VectorXd::Constant(dim, half_width);
        return b;
    }
};

/// Persistent set of particles approximating q_t. Updates are synchronous:
/// every field evaluation reads only the time-t snapshot.
struct ParticleEnsemble {
    Eigen::MatrixXd points;  // d x n, one particle per column
    long step_count = 0;
    long out_of_box_count = 0;

    Eigen::Index size() const { return points.cols(); }
};

// --- vector fields (the 1/dt factor of the continuous-time fields is
// --- absorbed into the particle step size) ---

/// Method alpha: -grad_x E(x, theta_new) + grad_x E(x, theta_old).
Eigen::VectorXd v_alpha(const EnergyModel& model, const ParameterVector& theta_old,
                        const ParameterVector& theta_new, const Eigen::VectorXd& x);
Eigen::MatrixXd v_alpha_batch(const EnergyModel& model, const ParameterVector& theta_old,
                              const ParameterVector& theta_new, const Eigen::MatrixXd& X);

/// Method beta: -grad_x <grad_theta E(x, theta), dtheta>.
Eigen::VectorXd v_beta(const EnergyModel& model, const ParameterVector& theta,
                       const ParameterVector& dtheta, const Eigen::VectorXd& x);
Eigen::MatrixXd v_beta_batch(const EnergyModel& model, const ParameterVector& theta,
                             const ParameterVector& dtheta, const Eigen::MatrixXd& X);

/// Method gamma: attraction to data minus repulsion between particles,
/// mean_{x' in data} grad_x k(x, x') - mean_{x' in particles} grad_x k(x, x').
Eigen::VectorXd v_gamma(const Kernel& kernel, const Eigen::VectorXd& x,
                        const Eigen::MatrixXd& data_batch, const Eigen::MatrixXd& particle_batch);
Eigen::MatrixXd v_gamma_batch(const Kernel& kernel, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& data_batch,
                              const Eigen::MatrixXd& particle_batch);

// --- stochastic updates ---

/// x + (step/2) * score(x) + noise_scale * sqrt(step) * z.
Eigen::VectorXd langevin_step(const Eigen::VectorXd& x,
                              const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& score,
                              double step, RngStream& rng, double noise_scale = 1.0);

/// Batched Langevin step with score -grad_x E(., theta).
Eigen::MatrixXd langevin_step_batch(const Eigen::MatrixXd& X, const EnergyModel& model,
                                    const ParameterVector& theta, double step, RngStream& rng,
                                    double noise_scale = 1.0);

/// One stochastic Langevin step against the updated model (the PCD particle
/// update).
Eigen::VectorXd pcd_step(const Eigen::VectorXd& x, const EnergyModel& model,
                         const ParameterVector& theta_new, double step, RngStream& rng);

/// Negative-sample store with probabilistic reinitialization and annealed
/// (reduced) Langevin noise.
class ReplayBuffer {
public:
    using InitSampler = std::function<Eigen::MatrixXd(Eigen::Index, RngStream&)>;

    ReplayBuffer(Eigen::MatrixXd storage, double reinit_prob, double noise_scale,
                 InitSampler init_sampler);

    Eigen::Index capacity() const { return storage_.cols(); }
    double noise_scale() const { return noise_scale_; }
    const Eigen::MatrixXd& storage() const { return storage_; }

    /// Draw m slots; each is independently replaced by a fresh init sample
    /// with probability reinit_prob. Returns points and their slot indices.
    std::pair<Eigen::MatrixXd, std::vector<Eigen::Index>> draw(Eigen::Index m, RngStream& rng);

    void write_back(const Eigen::MatrixXd& points, const std::vector<Eigen::Index>& indices);

private:
    Eigen::MatrixXd storage_;
    double reinit_prob_;
    double noise_scale_;
    InitSampler init_sampler_;
};

/// Synchronous Euler step x += dt * field(x) for every particle, evaluated
/// on the input snapshot only. Out-of-box points are clamped and counted;
/// a non-finite field value raises DivergenceError naming the particle.
ParticleEnsemble propagate(const ParticleEnsemble& ensemble,
                           const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& field,
                           double dt, const SupportBox& box);

/// Same update with a precomputed field matrix (one column per particle).
ParticleEnsemble propagate(const ParticleEnsemble& ensemble, const Eigen::MatrixXd& field,
                           double dt, const SupportBox& box);

}  // namespace ebmflow
