// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "pointfield/denoiser.hpp"
#include "pointfield/field.hpp"
#include "pointfield/ray_sampling.hpp"

namespace pointfield {

// Every knob a full run needs, with defaults that reproduce the reference
// setup: 1000-step linear beta schedule from 1e-4 to 0.01, 8 neighbors,
// Adam at 2e-4 for the diffusion model and 5e-4 for the renderer, and a 4x
// upsampling factor. A config file only needs to list what it changes.
struct RunConfig {
    // Noise schedule shared by diffusion training and sampling.
    std::size_t schedule_steps = 1000;
    double beta0 = 1e-4;
    double beta_final = 0.01;

    // Point-cloud diffusion.
    std::size_t diffusion_steps = 5000;  // optimizer steps
    double diffusion_lr = 2e-4;
    std::size_t upsample_factor = 4;  // |output| = |prior| * factor
    std::size_t chunk_size = 0;       // points generated per trajectory; 0 = all at once
    double pair_r_min = 0.2;          // retention range for nested pair draws
    double pair_r_max = 1.0;
    diffusion::DenoiserConfig denoiser;

    // Renderer.
    std::size_t renderer_steps = 2000;  // optimizer steps
    double renderer_lr = 5e-4;
    std::size_t batch_rays = 64;
    double radius = 0.0;         // 0 = radius_scale * mean nearest-neighbor spacing
    double radius_scale = 2.0;   // used only when radius == 0
    std::size_t neighbors = 8;   // K nearest per retained sample
    std::size_t n_fg_samples = 64;
    std::size_t n_bg_samples = 64;
    double near = 0.5;
    double far = 8.0;
    render::FieldConfig field;

    // Synthetic scene generation.
    std::size_t scene_views = 10;
    std::size_t scene_width = 64;
    std::size_t scene_height = 64;
    std::size_t scene_surface_points = 4096;
    double scene_subsample = 0.25;   // fraction of surface points kept as prior
    double scene_jitter = 0.01;      // per-axis sigma of the prior corruption

    std::size_t seed = 0;       // default seed; a CLI --seed overrides it
    std::size_t log_every = 0;  // training progress cadence; 0 = silent
};

// Rejects values that cannot work: zero schedule/steps, nonpositive learning
// rates, an empty retention range, near/far out of order, zero resolution.
void check_run_config(const RunConfig& config);

// Plain key = value text. '#' starts a comment, blank lines are skipped, and
// every key is optional; unknown keys and malformed values raise ParseError
// with the offending line number. `source` names the stream in errors.
RunConfig parse_run_config(std::istream& in, const std::string& source);
RunConfig load_run_config(const std::string& path);

// Writes every key with its current value, one per line, parseable by
// load_run_config.
void save_run_config(const RunConfig& config, const std::string& path);

// Convenience views of the grouped settings.
render::RenderConfig render_config(const RunConfig& config);

}  // namespace pointfield
