// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pointfield/camera.hpp"
#include "pointfield/kdtree.hpp"
#include "pointfield/point_cloud.hpp"

namespace pointfield::render {

// Per-ray sampling parameters. `radius` doubles as the retention test and the
// neighbor-aggregation radius; `use_background` switches the background branch
// off for ablation runs.
struct RenderConfig {
    double radius = 0.0;            // scene units; must be set by the caller
    std::size_t neighbors = 8;      // K nearest per retained sample
    std::size_t n_fg_samples = 64;  // stratified samples in [near, far]
    std::size_t n_bg_samples = 64;  // disparity-spaced intervals from near
    double near = 0.0;
    double far = 0.0;
    bool use_background = true;
};

void check_render_config(const RenderConfig& config);

enum class SampleClass { retained_foreground, background };

// One sampling location on a ray. Foreground samples live on the ray at
// parameter t; background samples are contracted interval midpoints.
// neighbors is non-empty exactly when cls == retained_foreground.
struct SamplePoint {
    geo::Vec3 position;
    double t_along_ray = 0.0;
    SampleClass cls = SampleClass::background;
    spatial::NeighborSet neighbors;
};

// Everything the field evaluation needs for one ray. `foreground` holds all
// stratified samples in ascending t with their classification; `retained`
// indexes the retained-foreground subset, and `retained_deltas` are the
// compositing widths for exactly those samples. `background` holds one sample
// per disparity interval with the contracted interval length as its width.
struct RaySamples {
    std::vector<SamplePoint> foreground;
    std::vector<std::size_t> retained;
    std::vector<double> retained_deltas;
    std::vector<SamplePoint> background;
    std::vector<double> background_deltas;
};

// Scene contraction onto the open ball of radius 2: identity inside the unit
// ball, (2 - 1/|x|) * x/|x| outside.
geo::Vec3 contract(const geo::Vec3& x);

// Boundaries of the n_bg background intervals along a ray: disparity-spaced
// from near, with the final boundary capped at max(4*far, 2*previous) so the
// far plane only stretches the tail interval. Returns n_bg + 1 values.
std::vector<double> background_boundaries(const RenderConfig& config);

// Stratified foreground sampling classified against the prior cloud plus the
// background interval midpoints. A ray that misses the cloud entirely yields
// zero retained samples and is rendered from the background branch alone.
RaySamples sample_ray(const Ray& ray, const RenderConfig& config,
                      const spatial::SpatialIndex& index, std::uint64_t seed);

}  // namespace pointfield::render
