// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <sstream>

#include "pointfield/common.hpp"

namespace pointfield {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
    throw ParseError(cat(source, ":", line, ": ", what));
}

double parse_double(const std::string& text, const std::string& source, std::size_t line) {
    const char* begin = text.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        fail(source, line, cat("expected a number, got '", text, "'"));
    return v;
}

std::size_t parse_size(const std::string& text, const std::string& source, std::size_t line) {
    double v = parse_double(text, source, line);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e18)
        fail(source, line, cat("expected a nonnegative integer, got '", text, "'"));
    return static_cast<std::size_t>(v);
}

// One mutable view per key keeps parsing and saving in lockstep: a key added
// here is automatically read, written, and covered by the unknown-key check.
struct KeyTable {
    std::map<std::string, std::function<void(const std::string&, const std::string&, std::size_t)>> set;
    std::vector<std::pair<std::string, std::function<std::string()>>> get;

    void number(const std::string& key, double* slot) {
        set[key] = [slot](const std::string& text, const std::string& src, std::size_t line) {
            *slot = parse_double(text, src, line);
        };
        get.emplace_back(key, [slot] {
            std::ostringstream os;
            os << std::setprecision(17) << *slot;
            return os.str();
        });
    }

    void count(const std::string& key, std::size_t* slot) {
        set[key] = [slot](const std::string& text, const std::string& src, std::size_t line) {
            *slot = parse_size(text, src, line);
        };
        get.emplace_back(key, [slot] { return cat(*slot); });
    }
};

KeyTable key_table(RunConfig& c) {
    KeyTable t;
    t.count("schedule_steps", &c.schedule_steps);
    t.number("beta0", &c.beta0);
    t.number("beta_final", &c.beta_final);
    t.count("diffusion_steps", &c.diffusion_steps);
    t.number("diffusion_lr", &c.diffusion_lr);
    t.count("upsample_factor", &c.upsample_factor);
    t.count("chunk_size", &c.chunk_size);
    t.number("pair_r_min", &c.pair_r_min);
    t.number("pair_r_max", &c.pair_r_max);
    t.count("point_hidden", &c.denoiser.point_hidden);
    t.count("head_hidden", &c.denoiser.head_hidden);
    t.count("time_dim", &c.denoiser.time_dim);
    t.count("renderer_steps", &c.renderer_steps);
    t.number("renderer_lr", &c.renderer_lr);
    t.count("batch_rays", &c.batch_rays);
    t.number("radius", &c.radius);
    t.number("radius_scale", &c.radius_scale);
    t.count("neighbors", &c.neighbors);
    t.count("n_fg_samples", &c.n_fg_samples);
    t.count("n_bg_samples", &c.n_bg_samples);
    t.number("near", &c.near);
    t.number("far", &c.far);
    t.count("geo_hidden", &c.field.geo_hidden);
    t.count("fg_hidden", &c.field.fg_hidden);
    t.count("bg_hidden", &c.field.bg_hidden);
    t.count("fuse_hidden", &c.field.fuse_hidden);
    t.count("bg_posenc_levels", &c.field.bg_posenc_levels);
    t.count("scene_views", &c.scene_views);
    t.count("scene_width", &c.scene_width);
    t.count("scene_height", &c.scene_height);
    t.count("scene_surface_points", &c.scene_surface_points);
    t.number("scene_subsample", &c.scene_subsample);
    t.number("scene_jitter", &c.scene_jitter);
    t.count("seed", &c.seed);
    t.count("log_every", &c.log_every);
    return t;
}

}  // namespace

void check_run_config(const RunConfig& c) {
    require(c.schedule_steps >= 1, "schedule_steps must be at least 1");
    require(c.beta0 > 0.0 && c.beta_final >= c.beta0 && c.beta_final < 1.0,
            "betas must satisfy 0 < beta0 <= beta_final < 1");
    require(c.diffusion_steps >= 1, "diffusion_steps must be at least 1");
    require(c.diffusion_lr > 0.0, "diffusion_lr must be positive");
    require(c.upsample_factor >= 2, "upsample_factor must be at least 2");
    require(c.pair_r_min > 0.0 && c.pair_r_min < c.pair_r_max && c.pair_r_max <= 1.0,
            "pair retention range must satisfy 0 < pair_r_min < pair_r_max <= 1");
    require(c.renderer_steps >= 1, "renderer_steps must be at least 1");
    require(c.renderer_lr > 0.0, "renderer_lr must be positive");
    require(c.batch_rays >= 1, "batch_rays must be at least 1");
    require(c.radius >= 0.0, "radius must be nonnegative (0 = automatic)");
    require(c.radius_scale > 0.0, "radius_scale must be positive");
    require(c.neighbors >= 1, "neighbors must be at least 1");
    require(c.n_fg_samples >= 1 && c.n_bg_samples >= 1, "sample counts must be at least 1");
    require(c.near > 0.0 && c.far > c.near, "need 0 < near < far");
    require(c.scene_views >= 2, "scene_views must be at least 2");
    require(c.scene_width >= 16 && c.scene_height >= 16,
            "scene resolution must be at least 16x16");
    require(c.scene_surface_points >= 10, "scene_surface_points must be at least 10");
    require(c.scene_subsample > 0.0 && c.scene_subsample <= 1.0,
            "scene_subsample must lie in (0, 1]");
    require(c.scene_jitter >= 0.0 && std::isfinite(c.scene_jitter),
            "scene_jitter must be finite and nonnegative");
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
    RunConfig config;
    KeyTable table = key_table(config);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(source, line_no, cat("expected 'key = value', got '", line, "'"));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = table.set.find(key);
        if (it == table.set.end()) fail(source, line_no, cat("unknown key '", key, "'"));
        if (value.empty()) fail(source, line_no, cat("key '", key, "' has no value"));
        it->second(value, source, line_no);
    }
    try {
        check_run_config(config);
    } catch (const ContractViolation& e) {
        throw ParseError(cat(source, ": ", e.what()));
    }
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(cat("cannot open config file '", path, "'"));
    return parse_run_config(in, path);
}

void save_run_config(const RunConfig& config, const std::string& path) {
    check_run_config(config);
    // key_table mutates through pointers, so it needs a non-const copy.
    RunConfig copy = config;
    KeyTable table = key_table(copy);
    std::ofstream out(path);
    if (!out) throw IoError(cat("cannot write config file '", path, "'"));
    for (const auto& [key, value] : table.get) out << key << " = " << value() << "\n";
    out.flush();
    if (!out) throw IoError(cat("failed writing config file '", path, "'"));
}

render::RenderConfig render_config(const RunConfig& c) {
    render::RenderConfig r;
    r.radius = c.radius;  // callers resolve 0 against the active point cloud
    r.neighbors = c.neighbors;
    r.n_fg_samples = c.n_fg_samples;
    r.n_bg_samples = c.n_bg_samples;
    r.near = c.near;
    r.far = c.far;
    return r;
}

}  // namespace pointfield
