// Experiment runner: config-driven training runs, multi-seed sweeps, config
// validation and heatmap rendering.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ebmflow/artifacts.hpp"
#include "ebmflow/config.hpp"
#include "ebmflow/samplers.hpp"
#include "ebmflow/trainer.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIoError = 4;

ebmflow::RunConfig load_config(const std::string& path) {
    ebmflow::RunConfig cfg = ebmflow::parse_config(path);
    if (const char* root = std::getenv("EBMFLOW_OUTPUT_ROOT"); root && *root)
        cfg.output_dir = root;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ebmflow: particle-transport training for energy-based models"};
    app.require_subcommand(1);

    std::string config_path, grid_path, image_path, particles_path, seeds_arg;
    unsigned workers = 0;

    auto* cmd_run = app.add_subcommand("run", "execute a single training run");
    cmd_run->add_option("config", config_path, "run config (JSON)")->required();

    auto* cmd_sweep = app.add_subcommand("sweep", "run the config once per seed and aggregate");
    cmd_sweep->add_option("config", config_path, "run config (JSON)")->required();
    cmd_sweep->add_option("--seeds", seeds_arg, "comma-separated seed list")->required();
    cmd_sweep->add_option("--workers", workers, "concurrent runs (default: hardware)");

    auto* cmd_render = app.add_subcommand("render", "render a grid file as a BMP heatmap");
    cmd_render->add_option("grid", grid_path, "grid file")->required();
    cmd_render->add_option("output", image_path, "output image (.bmp)")->required();
    cmd_render->add_option("--particles", particles_path, "particle CSV to overlay");

    auto* cmd_validate = app.add_subcommand("validate", "parse a config and print it resolved");
    cmd_validate->add_option("config", config_path, "run config (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            const ebmflow::RunResult res = ebmflow::run(load_config(config_path));
            std::cout << "run dir: " << res.run_dir << "\n"
                      << "iterations: " << res.completed_iterations << "\n"
                      << "mode coverage: " << res.final_coverage << "\n";
            if (res.diverged) {
                std::cerr << "diverged: " << res.error << "\n";
                return kExitDivergence;
            }
        } else if (cmd_sweep->parsed()) {
            std::vector<std::uint64_t> seeds;
            std::stringstream ss(seeds_arg);
            for (std::string tok; std::getline(ss, tok, ',');)
                if (!tok.empty()) seeds.push_back(std::stoull(tok));
            const auto summary = ebmflow::run_sweep(load_config(config_path), seeds, workers);
            bool any_failed = false;
            for (const auto& r : summary.runs) {
                std::cout << "seed " << r.seed << ": " << (r.ok ? "ok" : "failed")
                          << (r.ok ? " (" + r.run_dir + ")" : " (" + r.error + ")") << "\n";
                any_failed |= !r.ok;
            }
            std::cout << "aggregate: " << summary.aggregate_csv << "\n";
            if (any_failed) return kExitDivergence;
        } else if (cmd_render->parsed()) {
            ebmflow::render_heatmap(grid_path, image_path, particles_path);
            std::cout << "wrote " << image_path << "\n";
        } else if (cmd_validate->parsed()) {
            std::cout << ebmflow::resolved_config_json(ebmflow::parse_config(config_path));
        }
    } catch (const ebmflow::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const ebmflow::DivergenceError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const ebmflow::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
