#include "ebmflow/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace ebmflow {

using nlohmann::json;

std::string method_name(Method m) {
    switch (m) {
        case Method::Alpha: return "alpha";
        case Method::Beta: return "beta";
        case Method::Gamma: return "gamma";
        case Method::Pcd: return "pcd";
        case Method::AnnealRb: return "anneal-rb";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "alpha") return Method::Alpha;
    if (name == "beta") return Method::Beta;
    if (name == "gamma") return Method::Gamma;
    if (name == "pcd") return Method::Pcd;
    if (name == "anneal-rb") return Method::AnnealRb;
    throw ConfigError("field 'method': unknown method name '" + name + "'");
}

TargetDistribution TargetSpec::build() const {
    if (kind == "gaussian-ring-mixture") return TargetDistribution::ring_mixture(count, radius, sigma);
    if (kind == "grid-mixture") return TargetDistribution::grid_mixture(rows, cols, spacing, sigma);
    if (kind == "single-gaussian") return TargetDistribution::single_gaussian(mean, cov);
    if (kind == "mixture") return TargetDistribution(components);
    throw ConfigError("field 'target.kind': unknown target kind '" + kind + "'");
}

EnergyModel ModelSpec::build() const {
    if (kind == "mlp") return EnergyModel::mlp(input_dim, hidden, hidden_layers);
    if (kind == "analytic-gaussian") return EnergyModel::analytic_gaussian(input_dim);
    if (kind == "analytic-scaled-quadratic")
        return EnergyModel::analytic_scaled_quadratic(input_dim);
    throw ConfigError("field 'model.kind': unknown model kind '" + kind + "'");
}

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("section '" + section + "': expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("section '" + section + "': unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const json& j, const std::string& section, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + section + "." + key + "': type mismatch");
    }
}

Eigen::Vector2d parse_vec2(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError("field '" + field + "': expected an array of 2 numbers");
    return {j[0].get<double>(), j[1].get<double>()};
}

Eigen::Matrix2d parse_mat2(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError("field '" + field + "': expected a 2x2 array");
    Eigen::Matrix2d m;
    for (int r = 0; r < 2; ++r) {
        if (!j[r].is_array() || j[r].size() != 2)
            throw ConfigError("field '" + field + "': expected a 2x2 array");
        for (int c = 0; c < 2; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

TargetSpec parse_target(const json& j) {
    TargetSpec t;
    if (j.is_string()) {
        const std::string name = j.get<std::string>();
        if (name == "ring8") return t;  // default ring mixture
        throw ConfigError("field 'target': unknown target shorthand '" + name + "'");
    }
    if (!j.contains("kind")) throw ConfigError("section 'target': missing required key 'kind'");
    t.kind = j.at("kind").get<std::string>();
    if (t.kind == "gaussian-ring-mixture") {
        check_keys(j, "target", {"kind", "count", "radius", "sigma"});
        t.count = get_or(j, "target", "count", t.count);
        t.radius = get_or(j, "target", "radius", t.radius);
        t.sigma = get_or(j, "target", "sigma", t.sigma);
    } else if (t.kind == "grid-mixture") {
        check_keys(j, "target", {"kind", "rows", "cols", "spacing", "sigma"});
        t.rows = get_or(j, "target", "rows", t.rows);
        t.cols = get_or(j, "target", "cols", t.cols);
        t.spacing = get_or(j, "target", "spacing", t.spacing);
        t.sigma = get_or(j, "target", "sigma", t.sigma);
    } else if (t.kind == "single-gaussian") {
        check_keys(j, "target", {"kind", "mean", "cov"});
        if (j.contains("mean")) t.mean = parse_vec2(j.at("mean"), "target.mean");
        if (j.contains("cov")) t.cov = parse_mat2(j.at("cov"), "target.cov");
    } else if (t.kind == "mixture") {
        check_keys(j, "target", {"kind", "components"});
        if (!j.contains("components") || !j.at("components").is_array())
            throw ConfigError("field 'target.components': expected an array");
        for (const auto& c : j.at("components")) {
            check_keys(c, "target.components[]", {"mean", "cov", "weight"});
            TargetDistribution::Component comp;
            comp.mean = parse_vec2(c.at("mean"), "target.components[].mean");
            comp.cov = parse_mat2(c.at("cov"), "target.components[].cov");
            comp.weight = c.at("weight").get<double>();
            t.components.push_back(comp);
        }
    } else {
        throw ConfigError("field 'target.kind': unknown target kind '" + t.kind + "'");
    }
    return t;
}

json target_json(const TargetSpec& t) {
    json j;
    j["kind"] = t.kind;
    if (t.kind == "gaussian-ring-mixture") {
        j["count"] = t.count;
        j["radius"] = t.radius;
        j["sigma"] = t.sigma;
    } else if (t.kind == "grid-mixture") {
        j["rows"] = t.rows;
        j["cols"] = t.cols;
        j["spacing"] = t.spacing;
        j["sigma"] = t.sigma;
    } else if (t.kind == "single-gaussian") {
        j["mean"] = {t.mean[0], t.mean[1]};
        j["cov"] = {{t.cov(0, 0), t.cov(0, 1)}, {t.cov(1, 0), t.cov(1, 1)}};
    } else if (t.kind == "mixture") {
        json comps = json::array();
        for (const auto& c : t.components)
            comps.push_back({{"mean", {c.mean[0], c.mean[1]}},
                             {"cov", {{c.cov(0, 0), c.cov(0, 1)}, {c.cov(1, 0), c.cov(1, 1)}}},
                             {"weight", c.weight}});
        j["components"] = comps;
    }
    return j;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    check_keys(j, "<root>",
               {"method", "seed", "target", "model", "kernel", "particles", "particle_lr",
                "optimizer", "iterations", "correction", "gamma_correction", "langevin_step",
                "langevin_steps", "replay_buffer", "logging", "stop_when_covered",
                "box_half_width", "output_dir"});
    if (!j.contains("method")) throw ConfigError("missing required key 'method'");

    RunConfig cfg;
    cfg.method = method_from_name(j.at("method").get<std::string>());
    cfg.seed = get_or<std::uint64_t>(j, "<root>", "seed", cfg.seed);
    if (j.contains("target")) cfg.target = parse_target(j.at("target"));

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model", {"kind", "input_dim", "hidden", "hidden_layers"});
        cfg.model.kind = get_or<std::string>(m, "model", "kind", cfg.model.kind);
        cfg.model.input_dim = get_or(m, "model", "input_dim", cfg.model.input_dim);
        cfg.model.hidden = get_or(m, "model", "hidden", cfg.model.hidden);
        cfg.model.hidden_layers = get_or(m, "model", "hidden_layers", cfg.model.hidden_layers);
    }
    if (j.contains("kernel")) {
        cfg.kernel_present = true;
        const json& k = j.at("kernel");
        check_keys(k, "kernel", {"kind", "bandwidth", "ensemble_size"});
        cfg.kernel.kind = get_or<std::string>(k, "kernel", "kind", cfg.kernel.kind);
        cfg.kernel.bandwidth = get_or(k, "kernel", "bandwidth", cfg.kernel.bandwidth);
        cfg.kernel.ensemble_size = get_or(k, "kernel", "ensemble_size", cfg.kernel.ensemble_size);
    }
    if (j.contains("particles")) {
        const json& p = j.at("particles");
        check_keys(p, "particles", {"count", "batch_size", "burnin_steps"});
        cfg.particle_count = get_or(p, "particles", "count", cfg.particle_count);
        cfg.batch_size = get_or(p, "particles", "batch_size", cfg.batch_size);
        cfg.burnin_steps = get_or(p, "particles", "burnin_steps", cfg.burnin_steps);
    }
    cfg.particle_lr = get_or(j, "<root>", "particle_lr", cfg.particle_lr);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_keys(o, "optimizer", {"kind", "lr", "beta1", "beta2", "epsilon"});
        cfg.optimizer.kind = get_or<std::string>(o, "optimizer", "kind", cfg.optimizer.kind);
        cfg.optimizer.lr = get_or(o, "optimizer", "lr", cfg.optimizer.lr);
        cfg.optimizer.beta1 = get_or(o, "optimizer", "beta1", cfg.optimizer.beta1);
        cfg.optimizer.beta2 = get_or(o, "optimizer", "beta2", cfg.optimizer.beta2);
        cfg.optimizer.epsilon = get_or(o, "optimizer", "epsilon", cfg.optimizer.epsilon);
    }
    cfg.iterations = get_or<long>(j, "<root>", "iterations", cfg.iterations);
    if (j.contains("correction")) {
        const json& c = j.at("correction");
        check_keys(c, "correction", {"steps", "noise_scale", "step"});
        cfg.correction.steps = get_or(c, "correction", "steps", cfg.correction.steps);
        cfg.correction.noise_scale =
            get_or(c, "correction", "noise_scale", cfg.correction.noise_scale);
        cfg.correction.step = get_or(c, "correction", "step", cfg.correction.step);
    }
    cfg.gamma_correction = get_or(j, "<root>", "gamma_correction", cfg.gamma_correction);
    cfg.langevin_step = get_or(j, "<root>", "langevin_step", cfg.langevin_step);
    cfg.langevin_steps = get_or(j, "<root>", "langevin_steps", cfg.langevin_steps);
    if (j.contains("replay_buffer")) {
        const json& r = j.at("replay_buffer");
        check_keys(r, "replay_buffer", {"capacity_multiplier", "reinit_prob", "noise_scale"});
        cfg.replay.capacity_multiplier =
            get_or(r, "replay_buffer", "capacity_multiplier", cfg.replay.capacity_multiplier);
        cfg.replay.reinit_prob = get_or(r, "replay_buffer", "reinit_prob", cfg.replay.reinit_prob);
        cfg.replay.noise_scale = get_or(r, "replay_buffer", "noise_scale", cfg.replay.noise_scale);
    }
    if (j.contains("logging")) {
        const json& l = j.at("logging");
        check_keys(l, "logging",
                   {"interval", "track_loglik", "particle_dumps", "record_timing", "grid"});
        cfg.logging.interval = get_or(l, "logging", "interval", cfg.logging.interval);
        cfg.logging.track_loglik = get_or(l, "logging", "track_loglik", cfg.logging.track_loglik);
        cfg.logging.particle_dumps =
            get_or(l, "logging", "particle_dumps", cfg.logging.particle_dumps);
        cfg.logging.record_timing =
            get_or(l, "logging", "record_timing", cfg.logging.record_timing);
        if (l.contains("grid")) {
            const json& g = l.at("grid");
            check_keys(g, "logging.grid", {"xmin", "xmax", "ymin", "ymax", "nx", "ny"});
            cfg.logging.grid.xmin = get_or(g, "logging.grid", "xmin", cfg.logging.grid.xmin);
            cfg.logging.grid.xmax = get_or(g, "logging.grid", "xmax", cfg.logging.grid.xmax);
            cfg.logging.grid.ymin = get_or(g, "logging.grid", "ymin", cfg.logging.grid.ymin);
            cfg.logging.grid.ymax = get_or(g, "logging.grid", "ymax", cfg.logging.grid.ymax);
            cfg.logging.grid.nx = get_or(g, "logging.grid", "nx", cfg.logging.grid.nx);
            cfg.logging.grid.ny = get_or(g, "logging.grid", "ny", cfg.logging.grid.ny);
        }
    }
    cfg.stop_when_covered = get_or(j, "<root>", "stop_when_covered", cfg.stop_when_covered);
    cfg.box_half_width = get_or(j, "<root>", "box_half_width", cfg.box_half_width);
    cfg.output_dir = get_or<std::string>(j, "<root>", "output_dir", cfg.output_dir);

    // Validation.
    if (cfg.method == Method::Gamma && !cfg.kernel_present)
        throw ConfigError("method 'gamma' requires a 'kernel' section");
    if (cfg.particle_count < 1) throw ConfigError("field 'particles.count': must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("field 'particles.batch_size': must be >= 1");
    if (cfg.iterations < 0) throw ConfigError("field 'iterations': must be >= 0");
    if (cfg.optimizer.lr < 0.0) throw ConfigError("field 'optimizer.lr': must be >= 0");
    if (cfg.particle_lr < 0.0) throw ConfigError("field 'particle_lr': must be >= 0");
    if (cfg.langevin_step <= 0.0) throw ConfigError("field 'langevin_step': must be > 0");
    if (cfg.correction.step <= 0.0) throw ConfigError("field 'correction.step': must be > 0");
    if (cfg.logging.interval < 1) throw ConfigError("field 'logging.interval': must be >= 1");
    (void)cfg.model.build();
    (void)cfg.target.build();
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

std::string resolved_config_json(const RunConfig& cfg) {
    json j;
    j["method"] = method_name(cfg.method);
    j["seed"] = cfg.seed;
    j["target"] = target_json(cfg.target);
    j["model"] = {{"kind", cfg.model.kind},
                  {"input_dim", cfg.model.input_dim},
                  {"hidden", cfg.model.hidden},
                  {"hidden_layers", cfg.model.hidden_layers}};
    j["kernel"] = {{"kind", cfg.kernel.kind},
                   {"bandwidth", cfg.kernel.bandwidth},
                   {"ensemble_size", cfg.kernel.ensemble_size}};
    j["particles"] = {{"count", cfg.particle_count},
                      {"batch_size", cfg.batch_size},
                      {"burnin_steps", cfg.burnin_steps}};
    j["particle_lr"] = cfg.resolved_particle_lr();
    j["optimizer"] = {{"kind", cfg.optimizer.kind},
                      {"lr", cfg.optimizer.lr},
                      {"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"epsilon", cfg.optimizer.epsilon}};
    j["iterations"] = cfg.iterations;
    j["correction"] = {{"steps", cfg.correction.steps},
                       {"noise_scale", cfg.correction.noise_scale},
                       {"step", cfg.correction.step}};
    j["gamma_correction"] = cfg.gamma_correction;
    j["langevin_step"] = cfg.langevin_step;
    j["langevin_steps"] = cfg.langevin_steps;
    j["replay_buffer"] = {{"capacity_multiplier", cfg.replay.capacity_multiplier},
                          {"reinit_prob", cfg.replay.reinit_prob},
                          {"noise_scale", cfg.replay.noise_scale}};
    j["logging"] = {{"interval", cfg.logging.interval},
                    {"track_loglik", cfg.logging.track_loglik},
                    {"particle_dumps", cfg.logging.particle_dumps},
                    {"record_timing", cfg.logging.record_timing},
                    {"grid",
                     {{"xmin", cfg.logging.grid.xmin},
                      {"xmax", cfg.logging.grid.xmax},
                      {"ymin", cfg.logging.grid.ymin},
                      {"ymax", cfg.logging.grid.ymax},
                      {"nx", cfg.logging.grid.nx},
                      {"ny", cfg.logging.grid.ny}}}};
    j["stop_when_covered"] = cfg.stop_when_covered;
    j["box_half_width"] = cfg.box_half_width;
    j["output_dir"] = cfg.output_dir;
    return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
    RunConfig masked = cfg;
    masked.seed = 0;
    masked.output_dir = "";
    const std::string text = resolved_config_json(masked);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%012llx", static_cast<unsigned long long>(h & 0xffffffffffffULL));
    return buf;
}

}  // namespace ebmflow
