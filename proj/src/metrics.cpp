#include "ebmflow/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace ebmflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::MatrixXd GridSpec::nodes() const {
    if (nx < 2 || ny < 2) throw std::invalid_argument("grid resolution must be >= 2");
    MatrixXd N(2, static_cast<Eigen::Index>(nx) * ny);
    Eigen::Index k = 0;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix, ++k) N.col(k) = Eigen::Vector2d(xmin + ix * dx(), ymin + iy * dy());
    return N;
}

Grid Grid::from_flat(const GridSpec& s, const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(s.nx) * s.ny)
        throw std::invalid_argument("flat grid size mismatch");
    Grid g = Grid::zeros(s);
    Eigen::Index k = 0;
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix, ++k) g.values(iy, ix) = flat[k];
    return g;
}

namespace {

double trapezoid_coeff(int i, int n) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; }

}  // namespace

double log_partition_grid(const Grid& energies) {
    const GridSpec& s = energies.spec;
    if (!energies.values.allFinite())
        throw std::invalid_argument("non-finite energy on quadrature grid");
    const double log_cell = std::log(s.dx() * s.dy());
    double max_term = -std::numeric_limits<double>::infinity();
    MatrixXd terms(s.ny, s.nx);
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix) {
            terms(iy, ix) = -energies.values(iy, ix) + log_cell +
                            std::log(trapezoid_coeff(ix, s.nx) * trapezoid_coeff(iy, s.ny));
            max_term = std::max(max_term, terms(iy, ix));
        }
    return max_term + std::log((terms.array() - max_term).exp().sum());
}

double log_partition_grid(const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& energy_fn,
                          const GridSpec& grid) {
    return log_partition_grid(Grid::from_flat(grid, energy_fn(grid.nodes())));
}

double avg_log_likelihood(const Eigen::MatrixXd& data, const EnergyModel& model,
                          const ParameterVector& theta, const GridSpec& grid) {
    if (data.cols() == 0) throw std::invalid_argument("empty data set");
    const double log_z = log_partition_grid(
        [&](const MatrixXd& X) { return model.energy_batch(X, theta); }, grid);
    return -model.energy_batch(data, theta).mean() - log_z;
}

Grid integrate_energy_gamma(const EnergyHistory& history, const GridSpec& grid, Kernel& kernel) {
    const MatrixXd nodes = grid.nodes();
    VectorXd energy = VectorXd::Zero(nodes.cols());
    auto* ntk = dynamic_cast<NtkKernel*>(&kernel);
    for (const auto& rec : history) {
        if (ntk && ntk->averaged_init()) ntk->redraw(rec.kernel_seed);
        energy += rec.dt * (kernel.mean_embedding(nodes, rec.particle_batch) -
                            kernel.mean_embedding(nodes, rec.data_batch));
    }
    return Grid::from_flat(grid, energy);
}

std::pair<int, int> mode_coverage(const Eigen::MatrixXd& particles, const TargetDistribution& dist,
                                  double radius, double min_frac) {
    const auto& comps = dist.components();
    int covered = 0;
    for (const auto& c : comps) {
        double r = radius;
        if (r <= 0.0) {
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c.cov);
            r = 3.0 * std::sqrt(es.eigenvalues().maxCoeff());
        }
        Eigen::Index within = 0;
        for (Eigen::Index i = 0; i < particles.cols(); ++i)
            if ((particles.col(i) - c.mean).norm() <= r) ++within;
        if (static_cast<double>(within) >= min_frac * static_cast<double>(particles.cols()))
            ++covered;
    }
    return {covered, static_cast<int>(comps.size())};
}

double grid_kl_to_target(const TargetDistribution& target, const Grid& energies) {
    const GridSpec& s = energies.spec;
    const double log_z = log_partition_grid(energies);
    double kl = 0.0;
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix) {
            const Eigen::Vector2d x(s.xmin + ix * s.dx(), s.ymin + iy * s.dy());
            const double lp = target.log_pdf(x);
            const double p = std::exp(lp);
            if (p <= 0.0) continue;
            const double lq = -energies.values(iy, ix) - log_z;
            kl += trapezoid_coeff(ix, s.nx) * trapezoid_coeff(iy, s.ny) * p * (lp - lq);
        }
    return kl * s.dx() * s.dy();
}

}  // namespace ebmflow
