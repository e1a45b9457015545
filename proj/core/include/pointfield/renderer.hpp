// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pointfield/camera.hpp"
#include "pointfield/field.hpp"
#include "pointfield/image.hpp"
#include "pointfield/kdtree.hpp"
#include "pointfield/ray_sampling.hpp"

namespace pointfield::render {

// Value-only forward pass: one rgb row per ray, evaluated on a scratch tape.
Tensor predict_rgb(const ParamSet& params, const FieldConfig& arch,
                   const RenderConfig& config, const std::vector<Ray>& rays,
                   const std::vector<RaySamples>& samples,
                   const spatial::SpatialIndex& index);

// Renders a full image, sampling every pixel center. Per-pixel sampling seeds
// derive from `seed` and the pixel index, so the result is independent of
// `chunk_rays` (which only bounds the per-tape batch size).
Image render_image(const ParamSet& params, const FieldConfig& arch,
                   const RenderConfig& config, const Camera& camera,
                   const spatial::SpatialIndex& index, std::uint64_t seed,
                   std::size_t chunk_rays = 256);

// One training view: camera plus its ground-truth image.
struct TrainView {
    Camera camera;
    Image image;
};

struct TrainRendererConfig {
    std::size_t steps = 2000;
    double lr = 5e-4;
    std::size_t batch_rays = 64;
    std::uint64_t seed = 0;
    FieldConfig arch;
    RenderConfig render;          // radius, sample counts, near/far
    std::string checkpoint_path;  // empty = keep weights in memory only
    std::size_t log_every = 0;    // 0 = silent
};

struct TrainRendererReport {
    std::vector<double> losses;
    double first_window_avg = 0.0;  // mean loss over the first 10% of steps
    double last_window_avg = 0.0;   // mean loss over the last 10% of steps
};

// Adam training over random pixel batches drawn from the views. Architecture
// and sampling geometry are stamped into the checkpoint metadata. A numeric
// blow-up saves the last finite weights and raises TrainingDiverged.
ParamSet train_renderer(const std::vector<TrainView>& views,
                        const spatial::SpatialIndex& index,
                        const TrainRendererConfig& cfg,
                        TrainRendererReport* report = nullptr);

}  // namespace pointfield::render
