#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ebmflow/artifacts.hpp"
#include "ebmflow/config.hpp"
#include "ebmflow/trainer.hpp"

using namespace ebmflow;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("ebmflow_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

RunConfig tiny_run_config(Method m, const std::string& dir) {
    RunConfig cfg;
    cfg.method = m;
    cfg.seed = 3;
    cfg.model.hidden = 12;
    cfg.particle_count = 30;
    cfg.batch_size = 12;
    cfg.burnin_steps = 3;
    cfg.iterations = 8;
    cfg.logging.interval = 2;
    cfg.logging.grid.nx = 40;
    cfg.logging.grid.ny = 40;
    cfg.output_dir = dir;
    return cfg;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(path);
    REQUIRE(in.good());
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("a minimal config resolves to the documented defaults") {
    RunConfig cfg = parse_config_text(R"({"method": "alpha", "target": "ring8", "seed": 1})");
    CHECK(cfg.method == Method::Alpha);
    CHECK(cfg.seed == 1);
    CHECK(cfg.target.kind == "gaussian-ring-mixture");
    CHECK(cfg.target.count == 8);
    CHECK(cfg.model.kind == "mlp");
    CHECK(cfg.model.hidden == 300);
    CHECK(cfg.model.hidden_layers == 2);
    CHECK(cfg.particle_count == 1000);
    CHECK(cfg.batch_size == 256);
    CHECK(cfg.optimizer.kind == "adam");
    CHECK(cfg.optimizer.lr == 1e-3);
    CHECK(cfg.iterations == 5000);
    CHECK(cfg.correction.steps == 10);
    CHECK(cfg.correction.noise_scale == 1.0);
    CHECK(cfg.langevin_steps == 20);
    CHECK(cfg.resolved_particle_lr() == 0.1);
    CHECK(cfg.logging.interval == 100);
    CHECK(cfg.logging.grid.nx == 400);
    CHECK(cfg.box_half_width == 6.0);
}

TEST_CASE("gamma without a kernel section is rejected naming the section") {
    try {
        parse_config_text(R"({"method": "gamma", "target": "ring8"})");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("kernel") != std::string::npos);
    }
    CHECK_NOTHROW(
        parse_config_text(R"({"method": "gamma", "target": "ring8", "kernel": {"kind": "rbf"}})"));
}

TEST_CASE("unknown keys, bad types and bad names carry field diagnostics") {
    try {
        parse_config_text(R"({"method": "alpha", "bogus": 1})");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
    try {
        parse_config_text(R"({"method": "alpha", "optimizer": {"lr": "fast"}})");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("optimizer.lr") != std::string::npos);
    }
    try {
        parse_config_text(R"({"method": "delta"})");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("delta") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text(R"({"target": "ring8"})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("{not json"), ConfigError);
    CHECK_THROWS_AS(
        parse_config_text(R"({"method": "alpha", "particles": {"count": 0}})"), ConfigError);
}

TEST_CASE("resolved configs round-trip to the identical resolution") {
    const std::string text = R"({
        "method": "gamma",
        "seed": 9,
        "target": {"kind": "grid-mixture", "rows": 3, "cols": 4, "sigma": 0.5},
        "kernel": {"kind": "ntk-averaged-init", "ensemble_size": 2},
        "particles": {"count": 123, "batch_size": 45},
        "optimizer": {"kind": "sgd", "lr": 0.02}
    })";
    RunConfig cfg = parse_config_text(text);
    std::string resolved = resolved_config_json(cfg);
    RunConfig reparsed = parse_config_text(resolved);
    CHECK(resolved_config_json(reparsed) == resolved);
    CHECK(config_hash(reparsed) == config_hash(cfg));
}

TEST_CASE("config hash masks the seed but tracks substantive changes") {
    RunConfig a = parse_config_text(R"({"method": "alpha", "seed": 1})");
    RunConfig b = parse_config_text(R"({"method": "alpha", "seed": 2, "output_dir": "elsewhere"})");
    CHECK(config_hash(a) == config_hash(b));
    RunConfig c = parse_config_text(R"({"method": "beta", "seed": 1})");
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("run directories version instead of overwriting") {
    RunConfig cfg = tiny_run_config(Method::Alpha, fresh_dir("dirs"));
    std::string d1 = make_run_dir(cfg);
    std::string d2 = make_run_dir(cfg);
    CHECK(d1 != d2);
    CHECK(fs::exists(d1));
    CHECK(fs::exists(d2));
    CHECK(d2.find("-v2") != std::string::npos);
    CHECK(d1.find(config_hash(cfg)) != std::string::npos);
    CHECK(d1.find("seed3") != std::string::npos);
}

TEST_CASE("metrics csv has the fixed schema with one row per logging interval") {
    RunConfig cfg = tiny_run_config(Method::Beta, fresh_dir("schema"));
    RunResult res = run(cfg);
    auto rows = read_csv(res.run_dir + "/metrics.csv");
    REQUIRE(!rows.empty());
    std::vector<std::string> header = {"iteration",        "loglik",        "mmd2_rbf_biased",
                                       "mmd2_rbf_unbiased", "mode_coverage", "out_of_box_count",
                                       "wall_ms"};
    CHECK(rows[0] == header);
    // iterations 0, 2, 4, 6, 8
    REQUIRE(rows.size() == 6);
    CHECK(rows[1][0] == "0");
    CHECK(rows[5][0] == "8");
    for (std::size_t r = 1; r < rows.size(); ++r) CHECK(rows[r].size() == header.size());
}

TEST_CASE("particle csv and grid files round-trip through their readers") {
    std::string dir = fresh_dir("io");
    RngStream rng(5);
    Eigen::MatrixXd pts = rng.normal_matrix(2, 7);
    write_particles_csv(dir + "/p.csv", pts);
    Eigen::MatrixXd back = read_particles_csv(dir + "/p.csv");
    CHECK((pts.array() == back.array()).all());

    GridSpec spec;
    spec.nx = 5;
    spec.ny = 4;
    Grid g = Grid::zeros(spec);
    g.values.setRandom();
    write_grid(dir + "/g.grid", g);
    Grid gback = read_grid(dir + "/g.grid");
    CHECK(gback.spec.nx == 5);
    CHECK(gback.spec.ny == 4);
    CHECK((g.values.array() == gback.values.array()).all());

    CHECK_THROWS_AS(read_grid(dir + "/missing.grid"), IoError);
}

TEST_CASE("a one-seed sweep aggregate equals the single run metrics") {
    RunConfig cfg = tiny_run_config(Method::Alpha, fresh_dir("sweep1"));
    SweepSummary sweep = run_sweep(cfg, {cfg.seed}, 1);
    REQUIRE(sweep.runs.size() == 1);
    CHECK(sweep.runs[0].ok);

    auto agg = read_csv(sweep.aggregate_csv);
    auto single = read_csv(sweep.runs[0].run_dir + "/metrics.csv");
    REQUIRE(agg.size() == single.size());
    for (std::size_t r = 1; r < agg.size(); ++r) {
        CHECK(agg[r][0] == single[r][0]);
        for (std::size_t c = 1; c < single[r].size(); ++c)
            CHECK(std::stod(agg[r][c]) ==
                  doctest::Approx(std::stod(single[r][c])).epsilon(1e-12));
    }
}

TEST_CASE("sweep aggregates are per-iteration means across seeds") {
    RunConfig cfg = tiny_run_config(Method::Beta, fresh_dir("sweep3"));
    SweepSummary sweep = run_sweep(cfg, {1, 2, 3}, 2);
    REQUIRE(sweep.runs.size() == 3);

    std::vector<std::vector<std::vector<std::string>>> per_seed;
    for (const auto& r : sweep.runs) {
        CHECK(r.ok);
        per_seed.push_back(read_csv(r.run_dir + "/metrics.csv"));
    }
    auto agg = read_csv(sweep.aggregate_csv);
    // column 3 = mmd2_rbf_unbiased
    for (std::size_t r = 1; r < agg.size(); ++r) {
        double mean = 0.0;
        for (const auto& rows : per_seed) mean += std::stod(rows[r][3]);
        mean /= 3.0;
        CHECK(std::stod(agg[r][3]) == doctest::Approx(mean).epsilon(1e-10));
    }
}

TEST_CASE("duplicate seeds in a sweep produce identical per-seed files") {
    RunConfig cfg = tiny_run_config(Method::Alpha, fresh_dir("sweepdup"));
    cfg.logging.particle_dumps = false;
    SweepSummary sweep = run_sweep(cfg, {7, 7}, 1);
    REQUIRE(sweep.runs.size() == 2);
    CHECK(sweep.runs[0].run_dir != sweep.runs[1].run_dir);
    CHECK(slurp(sweep.runs[0].run_dir + "/metrics.csv") ==
          slurp(sweep.runs[1].run_dir + "/metrics.csv"));
}

TEST_CASE("heatmaps render deterministically with the brightest block at the maximum") {
    std::string dir = fresh_dir("render");

    GridSpec spec;
    spec.nx = 2;
    spec.ny = 2;
    Grid g = Grid::zeros(spec);
    SUBCASE("constant grid gives a uniform image") {
        g.values.setConstant(3.5);
        write_grid(dir + "/c.grid", g);
        render_heatmap(dir + "/c.grid", dir + "/c.bmp");
        std::string img = slurp(dir + "/c.bmp");
        // 54-byte header, then identical pixel payload
        REQUIRE(img.size() > 54);
        std::string body = img.substr(54);
        for (char ch : body) CHECK(ch == body[0]);
    }
    SUBCASE("the maximal cell is the brightest pixel") {
        // row 1 = top of the y range; put the max at (x index 1, y index 0)
        g.values << 0.0, 0.0, 0.0, 9.0;  // values(1,1) maximal
        write_grid(dir + "/m.grid", g);
        render_heatmap(dir + "/m.grid", dir + "/m.bmp");
        std::string img = slurp(dir + "/m.bmp");
        REQUIRE(img.size() >= 54 + 16);  // 2x2 pixels, 3 bytes each, rows padded to 8
        // BMP rows bottom-up: first stored row is y index 0
        auto pixel = [&](int row, int col) {
            return static_cast<unsigned char>(img[54 + row * 8 + col * 3]);
        };
        CHECK(pixel(1, 1) > pixel(0, 0));
        CHECK(pixel(1, 1) > pixel(0, 1));
        CHECK(pixel(1, 1) > pixel(1, 0));
    }
    SUBCASE("rendering twice is byte-identical") {
        g.values << 0.1, 0.7, 0.3, 0.9;
        write_grid(dir + "/d.grid", g);
        render_heatmap(dir + "/d.grid", dir + "/d1.bmp");
        render_heatmap(dir + "/d.grid", dir + "/d2.bmp");
        CHECK(slurp(dir + "/d1.bmp") == slurp(dir + "/d2.bmp"));
    }
}

#ifdef EBMFLOW_CLI_PATH
TEST_CASE("the cli exposes the documented verbs and exit codes") {
    const std::string cli = EBMFLOW_CLI_PATH;
    const std::string dir = fresh_dir("verbs");
    auto sh = [&](const std::string& args) {
        std::string cmd = cli + " " + args + " >" + dir + "/out.txt 2>" + dir + "/err.txt";
        int rc = std::system(cmd.c_str());
        return WEXITSTATUS(rc);
    };

    spit(dir + "/good.json",
         R"({"method": "alpha", "target": "ring8", "seed": 1,
             "model": {"hidden": 8}, "particles": {"count": 20, "batch_size": 10,
             "burnin_steps": 2}, "iterations": 4,
             "logging": {"interval": 2, "track_loglik": false, "particle_dumps": false,
                         "grid": {"nx": 30, "ny": 30}},
             "output_dir": ")" + dir + R"(/runs"})");
    spit(dir + "/bad.json", R"({"method": "gamma"})");

    CHECK(sh("validate " + dir + "/good.json") == 0);
    CHECK(sh("validate " + dir + "/bad.json") == 2);
    CHECK(sh("run " + dir + "/missing.json") == 2);
    CHECK(sh("run " + dir + "/good.json") == 0);
    CHECK(sh("render " + dir + "/nogrid.grid " + dir + "/x.bmp") == 4);

    // environment override redirects the output root
    setenv("EBMFLOW_OUTPUT_ROOT", (dir + "/override").c_str(), 1);
    CHECK(sh("run " + dir + "/good.json") == 0);
    unsetenv("EBMFLOW_OUTPUT_ROOT");
    CHECK(fs::exists(dir + "/override"));
}
#endif
