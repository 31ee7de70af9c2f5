#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ebmflow/energy.hpp"
#include "ebmflow/kernels.hpp"
#include "ebmflow/targets.hpp"

namespace ebmflow {

struct GridSpec {
    double xmin = -6.0, xmax = 6.0;
    double ymin = -6.0, ymax = 6.0;
    int nx = 400, ny = 400;

    double dx() const { return (xmax - xmin) / (nx - 1); }
    double dy() const { return (ymax - ymin) / (ny - 1); }
    /// All grid nodes as columns of a 2 x (nx*ny) matrix, x fastest.
    Eigen::MatrixXd nodes() const;
};

/// Row-major grid of values over a GridSpec (row i = y index, col j = x index).
struct Grid {
    GridSpec spec;
    Eigen::MatrixXd values;  // ny x nx

    static Grid zeros(const GridSpec& s) { return {s, Eigen::MatrixXd::Zero(s.ny, s.nx)}; }
    /// Reshape a flat node vector (x fastest, as produced by spec.nodes()).
    static Grid from_flat(const GridSpec& s, const Eigen::VectorXd& flat);
};

/// log Z = log integral exp(-E) by trapezoid quadrature with log-sum-exp
/// stabilization. energies holds E at the grid nodes.
double log_partition_grid(const Grid& energies);
double log_partition_grid(const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& energy_fn,
                          const GridSpec& grid);

/// Mean over data of -E(x,theta) - log Z(grid).
double avg_log_likelihood(const Eigen::MatrixXd& data, const EnergyModel& model,
                          const ParameterVector& theta, const GridSpec& grid);

/// Per-iteration record of a method-gamma run, enough to replay the energy
/// integration deterministically.
struct EnergyHistoryRecord {
    Eigen::MatrixXd data_batch;       // 2 x m
    Eigen::MatrixXd particle_batch;   // 2 x n snapshot the field was built on
    std::uint64_t kernel_seed = 0;    // draw seed for averaged-init kernels
    double dt = 0.0;
};

using EnergyHistory = std::vector<EnergyHistoryRecord>;

/// E_T on the grid, integrating dE/dt = mean_particles k - mean_data k over
/// the history with E_0 = 0. For averaged-init NTK kernels the stored
/// per-record seed restores the exact parameter draws.
Grid integrate_energy_gamma(const EnergyHistory& history, const GridSpec& grid, Kernel& kernel);

/// A mode counts as covered when at least min_frac of the particles lie
/// within radius of its mean. radius <= 0 selects 3 standard deviations of
/// the component (largest covariance eigenvalue).
std::pair<int, int> mode_coverage(const Eigen::MatrixXd& particles, const TargetDistribution& dist,
                                  double radius = 0.0, double min_frac = 0.01);

/// KL(p || q_hat) where q_hat is exp(-E) grid-normalized; quadrature of
/// p * (log p - log q_hat) over the grid.
double grid_kl_to_target(const TargetDistribution& target, const Grid& energies);

}  // namespace ebmflow
