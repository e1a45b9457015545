// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "pointfield/autodiff.hpp"
#include "pointfield/params.hpp"
#include "pointfield/rng.hpp"
#include "pointfield/schedule.hpp"
#include "pointfield/tensor.hpp"

namespace pointfield::diffusion {

using ad::ParamSet;
using ad::Tensor;

// Network widths for the per-point noise predictor. The condition cloud and
// the noisy cloud each pass through their own shared per-point encoder and are
// max-pooled into global codes; every point is then decoded by a head that
// sees [its coordinates, both global codes, the step embedding].
struct DenoiserConfig {
    std::size_t point_hidden = 64;  // encoder width == global code size
    std::size_t head_hidden = 128;  // width of the 4-layer prediction head
    std::size_t time_dim = 32;      // sinusoidal step embedding size (even)
};

// Fresh He-initialized weights for the given widths.
ParamSet make_denoiser_params(const DenoiserConfig& cfg, std::uint64_t seed);

// Sinusoidal embedding of the step index, one row of `dim` values.
Tensor time_embedding(std::size_t t, std::size_t dim);

// Predict per-point noise for the whole state x_t = (condition, noisy). The
// result has one row per input row: first the condition rows, then the noisy
// rows, in their input order. Permuting noisy rows permutes the matching
// output rows; permuting condition rows changes nothing (max-pooled code).
ad::Var denoiser_forward_all(ad::Tape& tape, const ad::BoundParams& params,
                             const DenoiserConfig& cfg, ad::Var condition,
                             ad::Var noisy, std::size_t t,
                             const NoiseSchedule& schedule);

// Value-only forward pass: noise predictions for the noisy rows alone, as an
// n-by-3 tensor. Used by the reverse sampler, which needs no gradients.
Tensor denoiser_predict(const ParamSet& params, const DenoiserConfig& cfg,
                        const Tensor& condition, const Tensor& noisy,
                        std::size_t t, const NoiseSchedule& schedule);

// Checkpoint metadata: widths plus the schedule travel with the weights so a
// saved model can be reloaded without a side channel.
void stamp_denoiser_meta(ParamSet& params, const DenoiserConfig& cfg,
                         std::size_t schedule_steps, double beta0,
                         double beta_final);
DenoiserConfig denoiser_config_from_meta(const ParamSet& params);
NoiseSchedule schedule_from_meta(const ParamSet& params);

}  // namespace pointfield::diffusion
