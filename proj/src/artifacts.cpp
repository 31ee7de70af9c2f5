#include "ebmflow/artifacts.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace ebmflow {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string make_run_dir(const RunConfig& cfg) {
    fs::path root = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create output directory '" + root.string() + "'");
    const std::string base = config_hash(cfg) + "-seed" + std::to_string(cfg.seed);
    fs::path dir = root / base;
    for (int version = 2; fs::exists(dir); ++version)
        dir = root / (base + "-v" + std::to_string(version));
    if (!fs::create_directory(dir, ec) || ec)
        throw IoError("cannot create run directory '" + dir.string() + "'");
    return dir.string();
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    auto out = open_out(path);
    out << "iteration,loglik,mmd2_rbf_biased,mmd2_rbf_unbiased,mode_coverage,out_of_box_count,"
           "wall_ms\n";
    for (const auto& r : rows)
        out << r.iteration << ',' << format_double(r.loglik) << ','
            << format_double(r.mmd2_rbf_biased) << ',' << format_double(r.mmd2_rbf_unbiased) << ','
            << r.mode_coverage << ',' << r.out_of_box_count << ',' << format_double(r.wall_ms)
            << '\n';
}

void write_particles_csv(const std::string& path, const Eigen::MatrixXd& points) {
    auto out = open_out(path);
    out << "x0,x1\n";
    for (Eigen::Index i = 0; i < points.cols(); ++i)
        out << format_double(points(0, i)) << ',' << format_double(points(1, i)) << '\n';
}

Eigen::MatrixXd read_particles_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open particles file '" + path + "'");
    std::string line;
    std::getline(in, line);  // header
    std::vector<Eigen::Vector2d> pts;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double a, b;
        if (std::sscanf(line.c_str(), "%lf,%lf", &a, &b) != 2)
            throw IoError("malformed particles line: " + line);
        pts.emplace_back(a, b);
    }
    Eigen::MatrixXd X(2, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = pts[i];
    return X;
}

void write_grid(const std::string& path, const Grid& grid) {
    auto out = open_out(path);
    const GridSpec& s = grid.spec;
    out << s.nx << ' ' << s.ny << ' ' << format_double(s.xmin) << ' ' << format_double(s.xmax)
        << ' ' << format_double(s.ymin) << ' ' << format_double(s.ymax) << '\n';
    for (int iy = 0; iy < s.ny; ++iy) {
        for (int ix = 0; ix < s.nx; ++ix) {
            if (ix) out << ' ';
            out << format_double(grid.values(iy, ix));
        }
        out << '\n';
    }
}

Grid read_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid file '" + path + "'");
    GridSpec s;
    if (!(in >> s.nx >> s.ny >> s.xmin >> s.xmax >> s.ymin >> s.ymax) || s.nx < 2 || s.ny < 2)
        throw IoError("malformed grid header in '" + path + "'");
    Grid g = Grid::zeros(s);
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix)
            if (!(in >> g.values(iy, ix))) throw IoError("truncated grid file '" + path + "'");
    return g;
}

void write_checkpoint(const std::string& path, const RunConfig& cfg,
                      const ParameterVector& theta) {
    auto out = open_out(path);
    out << "# ebmflow checkpoint v1\n";
    out << "# resolved config follows, then one parameter per line\n";
    std::istringstream cfg_text(resolved_config_json(cfg));
    std::string line;
    while (std::getline(cfg_text, line)) out << "#cfg " << line << '\n';
    out << "params " << theta.size() << '\n';
    for (Eigen::Index i = 0; i < theta.size(); ++i) out << format_double(theta.values[i]) << '\n';
}

Eigen::VectorXd read_checkpoint_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string line;
    Eigen::Index n = -1;
    while (std::getline(in, line)) {
        if (line.rfind("params ", 0) == 0) {
            n = std::stol(line.substr(7));
            break;
        }
    }
    if (n < 0) throw IoError("checkpoint missing params header");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(in >> v[i])) throw IoError("truncated checkpoint '" + path + "'");
    return v;
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& manifest,
                    bool diverged, const std::string& error) {
    nlohmann::json j;
    j["diverged"] = diverged;
    if (!error.empty()) j["error"] = error;
    nlohmann::json files = nlohmann::json::array();
    for (const auto& [role, file] : manifest) files.push_back({{"role", role}, {"path", file}});
    j["files"] = files;
    open_out(path) << j.dump(2) << '\n';
}

namespace {

#pragma pack(push, 1)
struct BmpHeader {
    std::uint16_t magic = 0x4d42;  // "BM"
    std::uint32_t file_size = 0;
    std::uint32_t reserved = 0;
    std::uint32_t data_offset = 54;
    std::uint32_t info_size = 40;
    std::int32_t width = 0;
    std::int32_t height = 0;
    std::uint16_t planes = 1;
    std::uint16_t bpp = 24;
    std::uint32_t compression = 0;
    std::uint32_t image_size = 0;
    std::int32_t ppm_x = 2835;
    std::int32_t ppm_y = 2835;
    std::uint32_t colors = 0;
    std::uint32_t important = 0;
};
#pragma pack(pop)

}  // namespace

void render_heatmap(const std::string& grid_path, const std::string& image_path,
                    const std::string& particles_csv) {
    const Grid g = read_grid(grid_path);
    const GridSpec& s = g.spec;
    const double lo = g.values.minCoeff();
    const double hi = g.values.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;

    // 24-bit rows padded to 4 bytes; BMP stores bottom row first, which
    // matches y increasing upward.
    const int row_bytes = ((s.nx * 3 + 3) / 4) * 4;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(row_bytes) * s.ny, 0);
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix) {
            const double t = (g.values(iy, ix) - lo) / span;
            const auto v = static_cast<std::uint8_t>(std::lround(255.0 * t));
            std::uint8_t* px = &pixels[static_cast<std::size_t>(iy) * row_bytes + 3 * ix];
            px[0] = px[1] = px[2] = v;  // BGR grayscale
        }

    if (!particles_csv.empty()) {
        const Eigen::MatrixXd pts = read_particles_csv(particles_csv);
        for (Eigen::Index i = 0; i < pts.cols(); ++i) {
            const int ix = static_cast<int>(std::lround((pts(0, i) - s.xmin) / s.dx()));
            const int iy = static_cast<int>(std::lround((pts(1, i) - s.ymin) / s.dy()));
            if (ix < 0 || ix >= s.nx || iy < 0 || iy >= s.ny) continue;
            std::uint8_t* px = &pixels[static_cast<std::size_t>(iy) * row_bytes + 3 * ix];
            px[0] = 0;
            px[1] = 0;
            px[2] = 255;  // red
        }
    }

    BmpHeader hdr;
    hdr.width = s.nx;
    hdr.height = s.ny;
    hdr.image_size = static_cast<std::uint32_t>(pixels.size());
    hdr.file_size = hdr.data_offset + hdr.image_size;
    std::ofstream out(image_path, std::ios::binary);
    if (!out) throw IoError("cannot open image '" + image_path + "' for writing");
    out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
}

SweepSummary run_sweep(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                       unsigned workers) {
    if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(seeds.size()));

    SweepSummary summary;
    summary.runs.resize(seeds.size());
    std::vector<std::vector<MetricsRow>> metrics(seeds.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            RunConfig cfg = base;
            cfg.seed = seeds[i];
            auto& entry = summary.runs[i];
            entry.seed = seeds[i];
            try {
                RunResult r = run(cfg);
                entry.ok = !r.diverged;
                entry.run_dir = r.run_dir;
                entry.error = r.error;
                entry.final_coverage = r.final_coverage;
                metrics[i] = std::move(r.metrics);
            } catch (const std::exception& e) {
                entry.ok = false;
                entry.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // Aggregate: arithmetic mean per iteration row across successful runs
    // that logged that row.
    struct Sums {
        MetricsRow sum;
        int count = 0;
        Sums() { sum.loglik = 0.0; }
    };
    std::map<long, Sums> agg;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!summary.runs[i].ok) continue;
        for (const auto& r : metrics[i]) {
            auto& [sum, count] = agg[r.iteration];
            sum.iteration = r.iteration;
            sum.loglik += r.loglik;
            sum.mmd2_rbf_biased += r.mmd2_rbf_biased;
            sum.mmd2_rbf_unbiased += r.mmd2_rbf_unbiased;
            sum.mode_coverage += r.mode_coverage;
            sum.out_of_box_count += r.out_of_box_count;
            sum.wall_ms += r.wall_ms;
            ++count;
        }
    }
    std::vector<MetricsRow> rows;
    for (auto& [iter, entry] : agg) {
        auto& [sum, count] = entry;
        MetricsRow r = sum;
        r.loglik /= count;
        r.mmd2_rbf_biased /= count;
        r.mmd2_rbf_unbiased /= count;
        r.mode_coverage = static_cast<int>(std::lround(static_cast<double>(sum.mode_coverage) / count));
        r.out_of_box_count = sum.out_of_box_count / count;
        r.wall_ms /= count;
        rows.push_back(r);
    }
    fs::path root = base.output_dir;
    std::error_code ec;
    fs::create_directories(root, ec);
    summary.aggregate_csv = (root / (config_hash(base) + "-aggregate.csv")).string();
    write_metrics_csv(summary.aggregate_csv, rows);
    return summary;
}

}  // namespace ebmflow
