#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "ebmflow/energy.hpp"
#include "ebmflow/metrics.hpp"
#include "ebmflow/targets.hpp"

namespace ebmflow {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Method { Alpha, Beta, Gamma, Pcd, AnnealRb };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct TargetSpec {
    std::string kind = "gaussian-ring-mixture";
    // ring
    int count = 8;
    double radius = 4.0;
    double sigma = 0.3;
    // grid
    int rows = 5, cols = 5;
    double spacing = 2.0;
    // single gaussian
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
    // explicit mixture
    std::vector<TargetDistribution::Component> components;

    TargetDistribution build() const;
};

struct ModelSpec {
    std::string kind = "mlp";  // mlp | analytic-gaussian | analytic-scaled-quadratic
    int input_dim = 2;
    int hidden = 300;
    int hidden_layers = 2;

    EnergyModel build() const;
};

struct KernelConfig {
    std::string kind = "rbf";  // rbf | ntk-fixed | ntk-averaged-init
    double bandwidth = 0.0;    // rbf; 0 selects the median heuristic
    int ensemble_size = 1;     // ntk-averaged-init
};

struct OptimizerSpec {
    std::string kind = "adam";  // adam | sgd
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct CorrectionSpec {
    int steps = 10;
    double noise_scale = 1.0;
    double step = 0.01;
};

struct ReplayBufferSpec {
    int capacity_multiplier = 10;
    double reinit_prob = 0.05;
    double noise_scale = 0.1;
};

struct LoggingSpec {
    int interval = 100;
    bool track_loglik = true;
    bool particle_dumps = true;
    bool record_timing = false;
    GridSpec grid;
};

struct RunConfig {
    Method method = Method::Alpha;
    std::uint64_t seed = 1;
    TargetSpec target;
    ModelSpec model;
    KernelConfig kernel;
    bool kernel_present = false;  // whether the config file had a kernel section
    int particle_count = 1000;
    int batch_size = 256;
    int burnin_steps = 100;
    double particle_lr = 0.0;  // 0 resolves per method (0.1 alpha/beta, 0.5 gamma)
    OptimizerSpec optimizer;
    long iterations = 5000;
    CorrectionSpec correction;
    bool gamma_correction = false;  // correction steps off by default for gamma
    double langevin_step = 0.01;    // PCD / replay-buffer inner step
    int langevin_steps = 20;        // PCD / replay-buffer steps per iteration
    ReplayBufferSpec replay;
    LoggingSpec logging;
    bool stop_when_covered = false;
    double box_half_width = 6.0;
    std::string output_dir = "runs";

    double resolved_particle_lr() const {
        if (particle_lr > 0.0) return particle_lr;
        return method == Method::Gamma ? 0.5 : 0.1;
    }
};

/// Parse and validate a JSON run config; unknown keys and missing
/// method-specific sections are errors with a field diagnostic.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

/// Canonical JSON of the fully resolved config (every default filled in);
/// re-parsing it yields an identical RunConfig.
std::string resolved_config_json(const RunConfig& cfg);

/// FNV-1a hash of the resolved config with seed and output_dir masked, so
/// all runs of one sweep share a hash.
std::string config_hash(const RunConfig& cfg);

}  // namespace ebmflow
