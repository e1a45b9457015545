// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pointfield/cloud_pairs.hpp"
#include "pointfield/denoiser.hpp"
#include "pointfield/optim.hpp"
#include "pointfield/point_cloud.hpp"
#include "pointfield/schedule.hpp"

namespace pointfield::diffusion {

// One step of a reverse trajectory: the condition cloud stays pinned while
// only the generated part carries noise.
struct DiffusionState {
    Tensor condition;   // pinned positions, n_cond x 3
    Tensor noisy_part;  // generated positions at step t, n_gen x 3
    std::size_t t = 0;  // 0 means fully denoised
};

// Closed-form forward marginal: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
Tensor q_sample(const Tensor& x0_part, std::size_t t, const Tensor& eps,
                const NoiseSchedule& schedule);

// One draw from the single-step forward kernel; iterating it t times from x0
// matches q_sample in distribution.
Tensor q_step(const Tensor& x_prev, std::size_t t, const Tensor& eps,
              const NoiseSchedule& schedule);

// Standard-normal tensor, one draw per entry, row-major order.
Tensor gaussian_tensor(std::size_t rows, std::size_t cols, Rng& rng);

// Mean squared noise residual over the generated rows only. `eps_hat_all` is
// the denoiser output for condition-then-generated rows; the first
// `n_condition` rows are masked out and contribute exactly zero, in value and
// in gradient.
ad::Var masked_eps_loss(ad::Tape& tape, ad::Var eps_hat_all, const Tensor& eps,
                        std::size_t n_condition);

// Full training objective for one pair at one step: noise the generated part,
// run the denoiser on (condition, noised), and score the masked residual.
ad::Var diffusion_loss(ad::Tape& tape, const ad::BoundParams& params,
                       const DenoiserConfig& cfg, const geo::CloudPair& pair,
                       std::size_t t, const Tensor& eps,
                       const NoiseSchedule& schedule);

// Posterior mean under the noise parameterization:
// (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t).
Tensor reverse_mean(const Tensor& x_t, const Tensor& eps_hat, std::size_t t,
                    const NoiseSchedule& schedule);

// One reverse transition t -> t-1. Noise scaled by sqrt(beta_t) is added for
// t > 1; the final step is deterministic. The condition tensor is carried
// through untouched.
DiffusionState reverse_step(const ParamSet& params, const DenoiserConfig& cfg,
                            const DiffusionState& state,
                            const NoiseSchedule& schedule, const Tensor& noise);

// Called once per completed reverse step, outermost step first.
using TrajectoryObserver = std::function<void(const DiffusionState&)>;

// Run full reverse trajectories to generate `n_generate` new points around a
// normalized condition cloud. Generation is chunked (chunk_size 0 = one
// chunk); chunks run independent trajectories and their outputs are
// concatenated after the condition points. Deterministic given the seed.
geo::PointCloud sample_superresolution(const ParamSet& params,
                                       const DenoiserConfig& cfg,
                                       const geo::PointCloud& condition,
                                       std::size_t n_generate,
                                       const NoiseSchedule& schedule,
                                       std::uint64_t seed,
                                       std::size_t chunk_size = 0,
                                       const TrajectoryObserver& observer = {});

// Draws training pairs; receives a fresh deterministic generator per step.
using PairSource = std::function<geo::CloudPair(Rng&)>;

// Pair source over a fixed cloud: random retention levels in
// [r_min, r_max) each draw, resampling internally when a draw degenerates.
PairSource cloud_pair_source(geo::PointCloud source, double r_min = 0.2,
                             double r_max = 1.0);

struct TrainDiffusionConfig {
    std::size_t steps = 5000;
    double lr = 2e-4;
    std::uint64_t seed = 0;
    DenoiserConfig arch;
    std::size_t schedule_steps = 1000;
    double beta0 = 1e-4;
    double beta_final = 0.01;
    std::string checkpoint_path;  // empty = keep weights in memory only
    std::size_t log_every = 0;    // 0 = silent
};

struct TrainDiffusionReport {
    std::vector<double> losses;
    double first_window_avg = 0.0;  // mean loss over the first 10% of steps
    double last_window_avg = 0.0;   // mean loss over the last 10% of steps
};

// Adam training loop over pairs drawn from `source`. Writes the checkpoint
// (with embedded widths and schedule) when a path is configured. A non-finite
// loss or gradient aborts with the last good weights saved first.
ParamSet train_diffusion(const PairSource& source, const TrainDiffusionConfig& cfg,
                         TrainDiffusionReport* report = nullptr);

// Normalize a pair by its condition cloud's transform (the only cloud that
// exists at test time), applying it to all three members.
geo::NormalizeTransform normalize_pair(geo::CloudPair& pair);

}  // namespace pointfield::diffusion
