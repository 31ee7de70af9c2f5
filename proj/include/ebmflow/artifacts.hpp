#pragma once

#include <string>
#include <vector>

#include "ebmflow/metrics.hpp"
#include "ebmflow/trainer.hpp"

namespace ebmflow {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Formats a double with full round-trip precision ("%.17g").
std::string format_double(double v);

/// Creates <output_dir>/<confighash>-seed<seed>; existing directories get a
/// versioned -v2, -v3, ... suffix instead of being overwritten.
std::string make_run_dir(const RunConfig& cfg);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
/// Particle snapshot CSV with header "x0,x1", one point per line.
void write_particles_csv(const std::string& path, const Eigen::MatrixXd& points);
Eigen::MatrixXd read_particles_csv(const std::string& path);

/// Self-describing grid text format: header "nx ny xmin xmax ymin ymax",
/// then row-major values, one grid row per line.
void write_grid(const std::string& path, const Grid& grid);
Grid read_grid(const std::string& path);

/// Resolved config plus the parameter vector as full-precision decimal text.
void write_checkpoint(const std::string& path, const RunConfig& cfg, const ParameterVector& theta);
Eigen::VectorXd read_checkpoint_params(const std::string& path);

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& manifest,
                    bool diverged, const std::string& error);

/// Renders a grid file as a lossless 24-bit BMP with a monotone grayscale
/// colormap (one pixel per node, top row = ymax); particles, when given,
/// are overlaid as red points.
void render_heatmap(const std::string& grid_path, const std::string& image_path,
                    const std::string& particles_csv = "");

struct SweepSummary {
    struct Entry {
        std::uint64_t seed = 0;
        bool ok = false;
        std::string run_dir;
        std::string error;
        int final_coverage = 0;
    };
    std::vector<Entry> runs;
    std::string aggregate_csv;
};

/// One run per seed (concurrently when workers > 1) plus an aggregate CSV of
/// per-iteration means across the seeds that succeeded. Individual failures
/// are recorded and the sweep continues.
SweepSummary run_sweep(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                       unsigned workers = 0);

}  // namespace ebmflow
