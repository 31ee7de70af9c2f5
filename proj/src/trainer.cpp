#include "ebmflow/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "ebmflow/artifacts.hpp"

namespace ebmflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Optimizer::Optimizer(const OptimizerSpec& spec, Eigen::Index param_size)
    : spec_(spec), adam_(spec.kind == "adam") {
    if (spec_.kind != "adam" && spec_.kind != "sgd")
        throw ConfigError("unknown optimizer kind '" + spec_.kind + "'");
    if (adam_) {
        m_ = VectorXd::Zero(param_size);
        v_ = VectorXd::Zero(param_size);
    }
}

ParameterVector Optimizer::step(const ParameterVector& theta, const ParameterVector& grad) {
    theta.check_same_layout(grad);
    if (!adam_) return {theta.layout, theta.values - spec_.lr * grad.values};
    ++t_;
    m_ = spec_.beta1 * m_ + (1.0 - spec_.beta1) * grad.values;
    v_ = spec_.beta2 * v_ + (1.0 - spec_.beta2) * grad.values.cwiseProduct(grad.values);
    const double bc1 = 1.0 - std::pow(spec_.beta1, t_);
    const double bc2 = 1.0 - std::pow(spec_.beta2, t_);
    VectorXd update =
        (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + spec_.epsilon);
    return {theta.layout, theta.values - spec_.lr * update.matrix()};
}

ParameterVector estimate_kl_grad(const Eigen::MatrixXd& data_batch,
                                 const Eigen::MatrixXd& particle_batch, const EnergyModel& model,
                                 const ParameterVector& theta) {
    if (data_batch.cols() == 0 || particle_batch.cols() == 0)
        throw std::invalid_argument("estimate_kl_grad requires nonempty batches");
    return model.grad_theta_mean(data_batch, theta) - model.grad_theta_mean(particle_batch, theta);
}

namespace {

constexpr std::uint64_t kTagInit = 0x696e6974;       // theta init
constexpr std::uint64_t kTagParticles = 0x70617274;  // particle init
constexpr std::uint64_t kTagTrain = 0x7472616e;      // batches + noise
constexpr std::uint64_t kTagMetrics = 0x6d657472;    // fresh eval batches
constexpr std::uint64_t kTagKernel = 0x6b65726e;     // gamma kernel draws
constexpr std::uint64_t kTagBandwidth = 0x62616e64;

void clamp_to_box(ParticleEnsemble& ensemble, const SupportBox& box) {
    for (Eigen::Index i = 0; i < ensemble.points.cols(); ++i) {
        if (!ensemble.points.col(i).allFinite())
            throw DivergenceError(i, "non-finite particle " + std::to_string(i));
        bool clamped = false;
        for (Eigen::Index r = 0; r < ensemble.points.rows(); ++r) {
            double& v = ensemble.points(r, i);
            if (v < box.lo[r] || v > box.hi[r]) {
                v = std::clamp(v, box.lo[r], box.hi[r]);
                clamped = true;
            }
        }
        if (clamped) ++ensemble.out_of_box_count;
    }
}

double base_langevin_step(const RunConfig& cfg) {
    return (cfg.method == Method::Pcd || cfg.method == Method::AnnealRb) ? cfg.langevin_step
                                                                         : cfg.correction.step;
}

std::unique_ptr<Kernel> build_kernel(const RunConfig& cfg, const EnergyModel& model,
                                     const ParameterVector& theta,
                                     const ParticleEnsemble& ensemble,
                                     const TargetDistribution& target) {
    if (cfg.kernel.kind == "rbf") {
        double h = cfg.kernel.bandwidth;
        if (h <= 0.0) {
            RngStream rng(derive_seed(cfg.seed, kTagBandwidth));
            MatrixXd data = target.sample(ensemble.size(), rng);
            MatrixXd joint(2, ensemble.size() + data.cols());
            joint << ensemble.points, data;
            h = median_bandwidth(joint);
        }
        return std::make_unique<RbfKernel>(h);
    }
    if (cfg.kernel.kind == "ntk-fixed") return std::make_unique<NtkKernel>(model, theta);
    if (cfg.kernel.kind == "ntk-averaged-init")
        return std::make_unique<NtkKernel>(model, cfg.kernel.ensemble_size,
                                           derive_seed(cfg.seed, kTagKernel, 0));
    throw ConfigError("unknown kernel kind '" + cfg.kernel.kind + "'");
}

}  // namespace

TrainState init_state(const RunConfig& cfg) {
    EnergyModel model = cfg.model.build();
    RngStream init_rng(derive_seed(cfg.seed, kTagInit));
    ParameterVector theta = model.init_params(init_rng);
    TargetDistribution target = cfg.target.build();
    SupportBox box = SupportBox::square(cfg.box_half_width, model.input_dim());

    RngStream particle_rng(derive_seed(cfg.seed, kTagParticles));
    ParticleEnsemble ensemble;
    ensemble.points = particle_rng.normal_matrix(model.input_dim(), cfg.particle_count);
    // Practical stand-in for exact sampling from the untrained model.
    const double burn_step = base_langevin_step(cfg);
    for (int i = 0; i < cfg.burnin_steps; ++i) {
        ensemble.points =
            langevin_step_batch(ensemble.points, model, theta, burn_step, particle_rng, 1.0);
        clamp_to_box(ensemble, box);
    }
    ensemble.out_of_box_count = 0;

    Optimizer optimizer(cfg.optimizer, model.layout()->total_size());
    TrainState state{std::move(model),
                     std::move(theta),
                     std::move(optimizer),
                     std::move(ensemble),
                     std::move(target),
                     std::move(box),
                     RngStream(derive_seed(cfg.seed, kTagTrain))};

    if (cfg.method == Method::Gamma)
        state.kernel = build_kernel(cfg, state.model, state.theta, state.ensemble, state.target);
    if (cfg.method == Method::AnnealRb) {
        const Eigen::Index cap =
            static_cast<Eigen::Index>(cfg.replay.capacity_multiplier) * cfg.particle_count;
        MatrixXd storage = particle_rng.normal_matrix(state.model.input_dim(), cap);
        const int dim = state.model.input_dim();
        state.buffer = std::make_unique<ReplayBuffer>(
            std::move(storage), cfg.replay.reinit_prob, cfg.replay.noise_scale,
            [dim](Eigen::Index n, RngStream& rng) { return rng.normal_matrix(dim, n); });
        state.ensemble.points = state.buffer->storage();
    }
    return state;
}

Eigen::MatrixXd draw_particle_batch(const ParticleEnsemble& ensemble, int batch_size,
                                    RngStream& rng) {
    if (batch_size >= ensemble.size()) return ensemble.points;
    auto idx = rng.sample_without_replacement(static_cast<std::size_t>(ensemble.size()),
                                              static_cast<std::size_t>(batch_size));
    MatrixXd batch(ensemble.points.rows(), batch_size);
    for (int i = 0; i < batch_size; ++i)
        batch.col(i) = ensemble.points.col(static_cast<Eigen::Index>(idx[i]));
    return batch;
}

void train_step_alpha_beta(TrainState& state, const RunConfig& cfg) {
    const MatrixXd data = state.target.sample(cfg.batch_size, state.rng);
    const MatrixXd negatives = draw_particle_batch(state.ensemble, cfg.batch_size, state.rng);
    const ParameterVector grad = estimate_kl_grad(data, negatives, state.model, state.theta);
    const ParameterVector theta_old = state.theta;
    const ParameterVector theta_new = state.optimizer.step(theta_old, grad);

    const MatrixXd field =
        cfg.method == Method::Alpha
            ? v_alpha_batch(state.model, theta_old, theta_new, state.ensemble.points)
            : v_beta_batch(state.model, theta_old, theta_new - theta_old,
                           state.ensemble.points);
    state.ensemble = propagate(state.ensemble, field, cfg.resolved_particle_lr(), state.box);

    for (int i = 0; i < cfg.correction.steps; ++i) {
        state.ensemble.points =
            langevin_step_batch(state.ensemble.points, state.model, theta_new,
                                cfg.correction.step, state.rng, cfg.correction.noise_scale);
        clamp_to_box(state.ensemble, state.box);
    }
    state.theta = theta_new;
    ++state.iteration;
}

void train_step_gamma(TrainState& state, const RunConfig& cfg) {
    if (!state.kernel) throw ConfigError("gamma step requires a configured kernel");
    const MatrixXd data = state.target.sample(cfg.batch_size, state.rng);
    const std::uint64_t kernel_seed = derive_seed(cfg.seed, kTagKernel, state.iteration + 1);
    if (auto* ntk = dynamic_cast<NtkKernel*>(state.kernel.get()); ntk && ntk->averaged_init())
        ntk->redraw(kernel_seed);

    const MatrixXd snapshot = state.ensemble.points;
    const MatrixXd field = v_gamma_batch(*state.kernel, snapshot, data, snapshot);
    state.history.push_back({data, snapshot, kernel_seed, cfg.resolved_particle_lr()});
    state.ensemble = propagate(state.ensemble, field, cfg.resolved_particle_lr(), state.box);

    if (cfg.gamma_correction) {
        // Noisy extra steps along the recomputed field (there is no
        // parametric score to run Langevin against).
        for (int i = 0; i < cfg.correction.steps; ++i) {
            const MatrixXd drift =
                v_gamma_batch(*state.kernel, state.ensemble.points, data, state.ensemble.points);
            state.ensemble.points +=
                0.5 * cfg.correction.step * drift +
                cfg.correction.noise_scale * std::sqrt(cfg.correction.step) *
                    state.rng.normal_matrix(snapshot.rows(), snapshot.cols());
            clamp_to_box(state.ensemble, state.box);
        }
    }
    ++state.iteration;
}

void train_step_pcd(TrainState& state, const RunConfig& cfg) {
    const MatrixXd data = state.target.sample(cfg.batch_size, state.rng);
    const MatrixXd negatives = draw_particle_batch(state.ensemble, cfg.batch_size, state.rng);
    const ParameterVector grad = estimate_kl_grad(data, negatives, state.model, state.theta);
    state.theta = state.optimizer.step(state.theta, grad);
    for (int i = 0; i < cfg.langevin_steps; ++i) {
        state.ensemble.points = langevin_step_batch(state.ensemble.points, state.model,
                                                    state.theta, cfg.langevin_step, state.rng, 1.0);
        clamp_to_box(state.ensemble, state.box);
    }
    ++state.iteration;
}

void train_step_anneal_rb(TrainState& state, const RunConfig& cfg) {
    if (!state.buffer) throw ConfigError("anneal-rb step requires a replay buffer");
    const MatrixXd data = state.target.sample(cfg.batch_size, state.rng);
    auto [negatives, slots] = state.buffer->draw(cfg.batch_size, state.rng);
    for (int i = 0; i < cfg.langevin_steps; ++i) {
        negatives = langevin_step_batch(negatives, state.model, state.theta, cfg.langevin_step,
                                        state.rng, state.buffer->noise_scale());
        for (Eigen::Index c = 0; c < negatives.cols(); ++c)
            for (Eigen::Index r = 0; r < negatives.rows(); ++r)
                negatives(r, c) = std::clamp(negatives(r, c), state.box.lo[r], state.box.hi[r]);
    }
    const ParameterVector grad = estimate_kl_grad(data, negatives, state.model, state.theta);
    state.theta = state.optimizer.step(state.theta, grad);
    state.buffer->write_back(negatives, slots);
    state.ensemble.points = state.buffer->storage();
    ++state.iteration;
}

void train_step(TrainState& state, const RunConfig& cfg) {
    switch (cfg.method) {
        case Method::Alpha:
        case Method::Beta:
            train_step_alpha_beta(state, cfg);
            break;
        case Method::Gamma:
            train_step_gamma(state, cfg);
            break;
        case Method::Pcd:
            train_step_pcd(state, cfg);
            break;
        case Method::AnnealRb:
            train_step_anneal_rb(state, cfg);
            break;
    }
}

namespace {

double bilinear(const Grid& g, double x, double y) {
    const GridSpec& s = g.spec;
    const double fx = std::clamp((x - s.xmin) / s.dx(), 0.0, static_cast<double>(s.nx - 1));
    const double fy = std::clamp((y - s.ymin) / s.dy(), 0.0, static_cast<double>(s.ny - 1));
    const int ix = std::min(static_cast<int>(fx), s.nx - 2);
    const int iy = std::min(static_cast<int>(fy), s.ny - 2);
    const double tx = fx - ix, ty = fy - iy;
    return (1 - tx) * (1 - ty) * g.values(iy, ix) + tx * (1 - ty) * g.values(iy, ix + 1) +
           (1 - tx) * ty * g.values(iy + 1, ix) + tx * ty * g.values(iy + 1, ix + 1);
}

struct GammaEnergyTracker {
    Grid energy;
    Eigen::MatrixXd nodes;

    explicit GammaEnergyTracker(const GridSpec& spec)
        : energy(Grid::zeros(spec)), nodes(spec.nodes()) {}

    void accumulate(const Kernel& kernel, const EnergyHistoryRecord& rec) {
        const VectorXd delta = rec.dt * (kernel.mean_embedding(nodes, rec.particle_batch) -
                                         kernel.mean_embedding(nodes, rec.data_batch));
        Eigen::Index k = 0;
        for (int iy = 0; iy < energy.spec.ny; ++iy)
            for (int ix = 0; ix < energy.spec.nx; ++ix, ++k) energy.values(iy, ix) += delta[k];
    }

    double loglik(const MatrixXd& data) const {
        const double log_z = log_partition_grid(energy);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < data.cols(); ++i)
            acc += -bilinear(energy, data(0, i), data(1, i)) - log_z;
        return acc / static_cast<double>(data.cols());
    }
};

}  // namespace

RunResult run(const RunConfig& cfg) {
    RunResult result;
    result.run_dir = make_run_dir(cfg);
    const std::string dir = result.run_dir;
    auto artifact = [&](const std::string& role, const std::string& name) {
        result.manifest.emplace_back(role, dir + "/" + name);
        return dir + "/" + name;
    };

    std::ofstream(dir + "/resolved_config.json") << resolved_config_json(cfg);
    result.manifest.emplace_back("resolved_config", dir + "/resolved_config.json");

    TrainState state = init_state(cfg);

    // Metric kernel: rbf, median bandwidth over initial particles + one
    // fresh target batch, frozen for the run.
    RngStream bw_rng(derive_seed(cfg.seed, kTagBandwidth, 1));
    const Eigen::Index bw_n = std::min<Eigen::Index>(state.ensemble.size(), cfg.particle_count);
    MatrixXd bw_data = state.target.sample(bw_n, bw_rng);
    MatrixXd bw_joint(2, 2 * bw_n);
    bw_joint << state.ensemble.points.leftCols(bw_n), bw_data;
    const RbfKernel metric_kernel(median_bandwidth(bw_joint));

    const bool gamma = cfg.method == Method::Gamma;
    std::unique_ptr<GammaEnergyTracker> gamma_energy;
    if (gamma && cfg.logging.track_loglik) {
        GridSpec espec;
        espec.xmin = -cfg.box_half_width;
        espec.xmax = cfg.box_half_width;
        espec.ymin = -cfg.box_half_width;
        espec.ymax = cfg.box_half_width;
        espec.nx = espec.ny = 100;
        gamma_energy = std::make_unique<GammaEnergyTracker>(espec);
    }

    auto last_clock = std::chrono::steady_clock::now();
    auto log_metrics = [&](long iter) {
        MetricsRow row;
        row.iteration = iter;
        RngStream mrng(derive_seed(cfg.seed, kTagMetrics, static_cast<std::uint64_t>(iter)));
        // Replay-buffer runs hold more points than particle_count; metrics use
        // a seeded subsample of that size to keep MMD cost bounded.
        MatrixXd current = state.ensemble.points;
        if (current.cols() > cfg.particle_count) {
            auto idx = mrng.sample_without_replacement(
                static_cast<std::size_t>(current.cols()),
                static_cast<std::size_t>(cfg.particle_count));
            MatrixXd sub(current.rows(), cfg.particle_count);
            for (int i = 0; i < cfg.particle_count; ++i)
                sub.col(i) = current.col(static_cast<Eigen::Index>(idx[i]));
            current = std::move(sub);
        }
        const MatrixXd fresh = state.target.sample(current.cols(), mrng);
        row.mmd2_rbf_biased = mmd2_vstat(metric_kernel, current, fresh);
        row.mmd2_rbf_unbiased = mmd2_ustat(metric_kernel, current, fresh);
        row.mode_coverage = mode_coverage(current, state.target).first;
        row.out_of_box_count = state.ensemble.out_of_box_count;
        if (cfg.logging.track_loglik) {
            if (gamma_energy)
                row.loglik = gamma_energy->loglik(fresh);
            else if (!gamma)
                row.loglik = avg_log_likelihood(fresh, state.model, state.theta, cfg.logging.grid);
        }
        if (cfg.logging.record_timing) {
            auto now = std::chrono::steady_clock::now();
            row.wall_ms = std::chrono::duration<double, std::milli>(now - last_clock).count();
            last_clock = now;
        }
        result.metrics.push_back(row);
        result.final_coverage = row.mode_coverage;
        if (cfg.logging.particle_dumps) {
            char name[64];
            std::snprintf(name, sizeof(name), "particles_%06ld.csv", iter);
            write_particles_csv(artifact("particles", name), state.ensemble.points);
        }
        return row;
    };

    const int total_modes = static_cast<int>(state.target.components().size());
    log_metrics(0);
    try {
        for (long it = 1; it <= cfg.iterations; ++it) {
            train_step(state, cfg);
            if (gamma_energy && !state.history.empty())
                gamma_energy->accumulate(*state.kernel, state.history.back());
            const bool log_now = (it % cfg.logging.interval == 0) || it == cfg.iterations;
            if (log_now) {
                MetricsRow row = log_metrics(it);
                if (cfg.stop_when_covered && row.mode_coverage == total_modes) break;
            }
        }
    } catch (const DivergenceError& e) {
        result.diverged = true;
        result.error = e.what();
    }
    result.completed_iterations = state.iteration;

    write_metrics_csv(artifact("metrics", "metrics.csv"), result.metrics);
    write_particles_csv(artifact("particles_final", "particles_final.csv"),
                        state.ensemble.points);

    // Density / energy grids.
    if (!gamma) {
        Grid energy = Grid::from_flat(cfg.logging.grid,
                                      state.model.energy_batch(cfg.logging.grid.nodes(),
                                                               state.theta));
        const double log_z = log_partition_grid(energy);
        Grid density = energy;
        density.values = (-energy.values.array() - log_z).exp();
        write_grid(artifact("energy_grid", "energy.grid"), energy);
        write_grid(artifact("density_grid", "density.grid"), density);
    } else if (gamma_energy) {
        const Grid& energy = gamma_energy->energy;
        const double log_z = log_partition_grid(energy);
        Grid density = energy;
        density.values = (-energy.values.array() - log_z).exp();
        write_grid(artifact("energy_grid", "energy.grid"), energy);
        write_grid(artifact("density_grid", "density.grid"), density);
    }

    write_checkpoint(artifact("checkpoint", "checkpoint.txt"), cfg, state.theta);
    write_manifest(dir + "/manifest.json", result.manifest, result.diverged, result.error);
    return result;
}

}  // namespace ebmflow
