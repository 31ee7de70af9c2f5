#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ebmflow/config.hpp"
#include "ebmflow/kernels.hpp"
#include "ebmflow/metrics.hpp"
#include "ebmflow/samplers.hpp"

namespace ebmflow {

/// Plain SGD or Adam over a flat parameter vector. step() performs descent
/// on the supplied gradient.
class Optimizer {
public:
    Optimizer(const OptimizerSpec& spec, Eigen::Index param_size);

    ParameterVector step(const ParameterVector& theta, const ParameterVector& grad);

    const OptimizerSpec& spec() const { return spec_; }

private:
    OptimizerSpec spec_;
    bool adam_;
    Eigen::VectorXd m_, v_;
    long t_ = 0;
};

/// Contrastive KL gradient: mean grad_theta over data minus mean over
/// particles.
ParameterVector estimate_kl_grad(const Eigen::MatrixXd& data_batch,
                                 const Eigen::MatrixXd& particle_batch, const EnergyModel& model,
                                 const ParameterVector& theta);

/// Everything a run mutates per iteration.
struct TrainState {
    EnergyModel model;
    ParameterVector theta;
    Optimizer optimizer;
    ParticleEnsemble ensemble;
    TargetDistribution target;
    SupportBox box;
    RngStream rng;  // batches, Langevin noise
    std::unique_ptr<Kernel> kernel;       // gamma only
    std::unique_ptr<ReplayBuffer> buffer; // anneal-rb only
    EnergyHistory history;                // gamma only
    long iteration = 0;
};

TrainState init_state(const RunConfig& cfg);

/// Columns of the ensemble drawn uniformly without replacement (full batch
/// when batch_size >= n, in ensemble order).
Eigen::MatrixXd draw_particle_batch(const ParticleEnsemble& ensemble, int batch_size,
                                    RngStream& rng);

void train_step_alpha_beta(TrainState& state, const RunConfig& cfg);
void train_step_gamma(TrainState& state, const RunConfig& cfg);
void train_step_pcd(TrainState& state, const RunConfig& cfg);
void train_step_anneal_rb(TrainState& state, const RunConfig& cfg);

/// Dispatch on cfg.method.
void train_step(TrainState& state, const RunConfig& cfg);

struct MetricsRow {
    long iteration = 0;
    double loglik = std::numeric_limits<double>::quiet_NaN();
    double mmd2_rbf_biased = 0.0;
    double mmd2_rbf_unbiased = 0.0;
    int mode_coverage = 0;
    long out_of_box_count = 0;
    double wall_ms = 0.0;
};

struct RunResult {
    std::string run_dir;
    std::vector<std::pair<std::string, std::string>> manifest;  // role -> path
    std::vector<MetricsRow> metrics;
    long completed_iterations = 0;
    bool diverged = false;
    std::string error;
    int final_coverage = 0;
};

/// Execute a full configured run and write all artifacts (metrics CSV,
/// particle dumps, density grids, checkpoint, resolved config, manifest)
/// under a fresh per-run directory.
RunResult run(const RunConfig& cfg);

}  // namespace ebmflow
