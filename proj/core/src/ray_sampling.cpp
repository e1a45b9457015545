// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/ray_sampling.hpp"

#include <algorithm>
#include <cmath>

#include "pointfield/common.hpp"
#include "pointfield/rng.hpp"

namespace pointfield::render {

void check_render_config(const RenderConfig& config) {
    require(std::isfinite(config.radius) && config.radius > 0.0,
            "render radius must be positive and finite, got ", config.radius);
    require(config.neighbors >= 1, "neighbor count must be at least 1");
    require(config.n_fg_samples >= 1, "need at least one foreground sample");
    require(config.n_bg_samples >= 1, "need at least one background interval");
    require(std::isfinite(config.near) && std::isfinite(config.far),
            "near/far must be finite");
    require(config.near > 0.0 && config.near < config.far,
            "need 0 < near < far, got near=", config.near,
            " far=", config.far);
}

geo::Vec3 contract(const geo::Vec3& x) {
    require(finite(x), "cannot contract a non-finite position");
    double n = norm(x);
    if (n <= 1.0) return x;
    return x * ((2.0 - 1.0 / n) / n);
}

std::vector<double> background_boundaries(const RenderConfig& config) {
    check_render_config(config);
    std::size_t n = config.n_bg_samples;
    std::vector<double> b(n + 1);
    // Disparity spacing: boundary j sits at near / (1 - j/n), which walks
    // 1/t linearly from 1/near toward zero.
    for (std::size_t j = 0; j < n; ++j)
        b[j] = config.near / (1.0 - static_cast<double>(j) / static_cast<double>(n));
    b[n] = std::max(4.0 * config.far, 2.0 * b[n - 1]);
    return b;
}

RaySamples sample_ray(const Ray& ray, const RenderConfig& config,
                      const spatial::SpatialIndex& index, std::uint64_t seed) {
    check_render_config(config);
    require(finite(ray.direction) && finite(ray.origin),
            "ray must be finite");
    require(std::abs(norm(ray.direction) - 1.0) <= 1e-9,
            "ray direction must be unit length");

    Rng rng(seed);
    RaySamples out;

    // Stratified foreground samples: one uniform draw per equal stratum.
    std::size_t n_fg = config.n_fg_samples;
    double span = (config.far - config.near) / static_cast<double>(n_fg);
    out.foreground.reserve(n_fg);
    for (std::size_t i = 0; i < n_fg; ++i) {
        double t = config.near + (static_cast<double>(i) + rng.uniform()) * span;
        SamplePoint s;
        s.position = ray.origin + ray.direction * t;
        s.t_along_ray = t;
        if (index.any_within(s.position, config.radius)) {
            s.cls = SampleClass::retained_foreground;
            s.neighbors = index.radius_neighbors(s.position, config.radius,
                                                 config.neighbors);
            out.retained.push_back(i);
        }
        out.foreground.push_back(std::move(s));
    }

    // Compositing widths over the retained subsequence; the last sample gets
    // the mean of the preceding gaps, and a lone sample gets one stratum.
    std::size_t m = out.retained.size();
    if (m == 1) {
        out.retained_deltas.push_back(span);
    } else if (m > 1) {
        double gap_sum = 0.0;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            double gap = out.foreground[out.retained[i + 1]].t_along_ray -
                         out.foreground[out.retained[i]].t_along_ray;
            out.retained_deltas.push_back(gap);
            gap_sum += gap;
        }
        out.retained_deltas.push_back(gap_sum / static_cast<double>(m - 1));
    }

    // Background intervals: contracted midpoints, contracted lengths.
    std::vector<double> b = background_boundaries(config);
    out.background.reserve(config.n_bg_samples);
    geo::Vec3 prev = contract(ray.origin + ray.direction * b[0]);
    for (std::size_t j = 0; j < config.n_bg_samples; ++j) {
        geo::Vec3 next = contract(ray.origin + ray.direction * b[j + 1]);
        SamplePoint s;
        s.position = (prev + next) * 0.5;
        s.t_along_ray = 0.5 * (b[j] + b[j + 1]);
        s.cls = SampleClass::background;
        out.background.push_back(std::move(s));
        out.background_deltas.push_back(norm(next - prev));
        prev = next;
    }
    return out;
}

}  // namespace pointfield::render
