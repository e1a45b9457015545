// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pointfield/autodiff.hpp"
#include "pointfield/kdtree.hpp"
#include "pointfield/params.hpp"
#include "pointfield/ray_sampling.hpp"

namespace pointfield::render {

using ad::BoundParams;
using ad::ParamSet;
using ad::Tape;
using ad::Tensor;
using ad::Var;

// Feature widths fixed by the architecture: 8-d neighborhood geometry codes,
// 128-d foreground/background features fused into color.
inline constexpr std::size_t kGeoFeatureDim = 8;
inline constexpr std::size_t kFeatureDim = 128;

// Hidden widths of the individual MLPs; the public feature dimensions above
// are not configurable.
struct FieldConfig {
    std::size_t geo_hidden = 16;
    std::size_t fg_hidden = 64;
    std::size_t bg_hidden = 64;
    std::size_t fuse_hidden = 64;
    std::size_t bg_posenc_levels = 4;
};

// Positional-encoding width for background samples: xyz plus sin/cos pairs
// per coordinate per frequency level.
std::size_t background_input_dim(const FieldConfig& cfg);

// Fresh parameter set for the full field: geometry encoder, attention scorer,
// foreground head, background head, and the 4-layer fusion MLP.
ParamSet make_field_params(const FieldConfig& cfg, std::uint64_t seed);

// Architecture metadata for checkpoints, and its inverse.
void stamp_field_meta(ParamSet& params, const FieldConfig& cfg);
FieldConfig field_config_from_meta(const ParamSet& params);

// Sampling-geometry metadata stored at training time so rendering from a
// checkpoint reproduces the training setup.
void stamp_render_meta(ParamSet& params, const RenderConfig& config);
RenderConfig render_config_from_meta(const ParamSet& params);

// The 10-d encoder input c_i ⊕ c_j ⊕ (c_i - c_j) ⊕ |c_i - c_j|, one row per
// (sample, neighbor) pair, built from [n x 3] position rows.
Var neighbor_geometry_input(Var ci, Var cj);

// kg = MLP over neighbor_geometry_input; output is [n x 8].
Var encode_neighbor_geometry(Tape& tape, const BoundParams& p, Var ci, Var cj);

// Per-dimension softmax attention over each sample's neighbor codes:
// f = sum_j softmax_d(MLP(kg_j)) ⊙ kg_j. `offsets` (S+1 entries) delimits
// each sample's rows in kg; every segment must be non-empty.
Var aggregate_features(Tape& tape, const BoundParams& p, Var kg,
                       std::vector<std::size_t> offsets);

struct FieldOutput {
    Var sigma;    // rank-1 [n], softplus-activated
    Var feature;  // [n x 128]
};

// Foreground field: (position, view direction, aggregated geometry feature)
// -> (density, 128-d feature).
FieldOutput foreground_field(Tape& tape, const BoundParams& p, Var positions,
                             Var directions, Var features);

// Background field over encoded interval midpoints -> (density, feature).
FieldOutput background_field(Tape& tape, const BoundParams& p, Var encoded);

// Length-attenuated positional encoding of one contracted interval midpoint:
// [x, y, z] then per level l and coordinate, a_l*sin(2^l*pi*x) and
// a_l*cos(2^l*pi*x) with a_l = exp(-0.5*(2^l*length)^2), so wide intervals
// suppress the frequencies they cannot resolve.
std::vector<double> encode_background_sample(const geo::Vec3& contracted_mid,
                                             double contracted_length,
                                             std::size_t levels);

// Background branch for a single ray: encode every interval midpoint, run
// the background field, and composite into one 128-d feature plus the
// accumulated alpha.
struct BackgroundResult {
    Var feature;  // [1 x 128]
    Var alpha;    // rank-1 [1]
};
BackgroundResult background_features(Tape& tape, const BoundParams& p,
                                     const FieldConfig& cfg,
                                     const RaySamples& samples);

// Fusion head: concatenated 128+128 features through 4 MLP layers into
// sigmoid-bounded rgb rows.
Var fuse_features(Tape& tape, const BoundParams& p, Var fg_feature,
                  Var bg_feature);

// Mean squared error between predicted and ground-truth rgb rows.
Var render_loss(Tape& tape, Var pred, const Tensor& gt);

// Full differentiable pipeline for a batch of sampled rays: neighborhood
// encoding and aggregation, both field branches, per-ray compositing of
// 128-d features, and fusion into one rgb row per ray. Rays with no retained
// samples contribute a zero foreground feature; with use_background off the
// background feature is zero instead.
Var render_rays(Tape& tape, const BoundParams& p, const FieldConfig& cfg,
                const std::vector<Ray>& rays,
                const std::vector<RaySamples>& samples,
                const spatial::SpatialIndex& index, bool use_background);

}  // namespace pointfield::render
