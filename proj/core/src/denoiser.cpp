// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/denoiser.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <string>

namespace pointfield::diffusion {

namespace {

using ad::Tape;
using ad::Var;

void add_encoder(ParamSet& params, const std::string& prefix, std::size_t hidden,
                 Rng& rng) {
    params.add_linear(prefix + ".w1", 3, hidden, rng);
    params.add_bias(prefix + ".b1", hidden);
    params.add_linear(prefix + ".w2", hidden, hidden, rng);
    params.add_bias(prefix + ".b2", hidden);
}

Var linear(const ad::BoundParams& p, Var x, const std::string& w,
           const std::string& b) {
    return ad::add_rowvec(ad::matmul(x, p[w]), p[b]);
}

// Shared per-point encoder followed by max-pooling into one global row.
Var encode_pooled(const ad::BoundParams& p, Var points, const std::string& prefix) {
    Var h = ad::relu(linear(p, points, prefix + ".w1", prefix + ".b1"));
    h = ad::relu(linear(p, h, prefix + ".w2", prefix + ".b2"));
    return ad::maxpool_rows(h);
}

}  // namespace

ParamSet make_denoiser_params(const DenoiserConfig& cfg, std::uint64_t seed) {
    require(cfg.point_hidden >= 1 && cfg.head_hidden >= 1,
            "denoiser widths must be positive");
    require(cfg.time_dim >= 2 && cfg.time_dim % 2 == 0,
            "time embedding size must be even and >= 2, got ", cfg.time_dim);
    Rng rng(Rng::derive(seed, 0x9e11));
    ParamSet params;
    add_encoder(params, "noisy_enc", cfg.point_hidden, rng);
    add_encoder(params, "cond_enc", cfg.point_hidden, rng);
    const std::size_t head_in = 3 + 2 * cfg.point_hidden + cfg.time_dim;
    params.add_linear("head.w1", head_in, cfg.head_hidden, rng);
    params.add_bias("head.b1", cfg.head_hidden);
    params.add_linear("head.w2", cfg.head_hidden, cfg.head_hidden, rng);
    params.add_bias("head.b2", cfg.head_hidden);
    params.add_linear("head.w3", cfg.head_hidden, cfg.head_hidden, rng);
    params.add_bias("head.b3", cfg.head_hidden);
    params.add_linear("head.w4", cfg.head_hidden, 3, rng);
    params.add_bias("head.b4", 3);
    return params;
}

Tensor time_embedding(std::size_t t, std::size_t dim) {
    require(dim >= 2 && dim % 2 == 0, "time embedding size must be even, got ", dim);
    const std::size_t half = dim / 2;
    Tensor out = Tensor::zeros({1, dim});
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        const double angle = static_cast<double>(t) * freq;
        out.at(0, 2 * i) = std::sin(angle);
        out.at(0, 2 * i + 1) = std::cos(angle);
    }
    return out;
}

Var denoiser_forward_all(Tape& tape, const ad::BoundParams& params,
                         const DenoiserConfig& cfg, Var condition, Var noisy,
                         std::size_t t, const NoiseSchedule& schedule) {
    require(t >= 1 && t <= schedule.steps(), "denoiser step ", t, " outside [1, ",
            schedule.steps(), "]");
    require(condition.value().cols() == 3 && noisy.value().cols() == 3,
            "denoiser inputs must be n-by-3 position tensors");
    const std::size_t n_cond = condition.value().rows();
    const std::size_t n_noisy = noisy.value().rows();
    require(n_cond >= 1 && n_noisy >= 1, "denoiser needs non-empty inputs");

    const Var noisy_code = encode_pooled(params, noisy, "noisy_enc");
    const Var cond_code = encode_pooled(params, condition, "cond_enc");
    const Var step_code = tape.constant(time_embedding(t, cfg.time_dim));

    const std::size_t n = n_cond + n_noisy;
    const std::array<Var, 2> rows{condition, noisy};
    const Var all_points = ad::concat_rows(rows);
    const std::array<Var, 4> features{all_points, ad::repeat_row(noisy_code, n),
                                      ad::repeat_row(cond_code, n),
                                      ad::repeat_row(step_code, n)};
    Var h = ad::concat_cols(features);
    h = ad::relu(linear(params, h, "head.w1", "head.b1"));
    h = ad::relu(linear(params, h, "head.w2", "head.b2"));
    h = ad::relu(linear(params, h, "head.w3", "head.b3"));
    return linear(params, h, "head.w4", "head.b4");
}

Tensor denoiser_predict(const ParamSet& params, const DenoiserConfig& cfg,
                        const Tensor& condition, const Tensor& noisy,
                        std::size_t t, const NoiseSchedule& schedule) {
    Tape tape;
    const ad::BoundParams bound(tape, params);
    const Var eps_all =
        denoiser_forward_all(tape, bound, cfg, tape.constant(condition),
                             tape.constant(noisy), t, schedule);
    const Tensor& all = eps_all.value();
    const std::size_t n_cond = condition.rows();
    Tensor out = Tensor::zeros({noisy.rows(), 3});
    for (std::size_t i = 0; i < noisy.rows(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            out.at(i, c) = all.at(n_cond + i, c);
        }
    }
    return out;
}

void stamp_denoiser_meta(ParamSet& params, const DenoiserConfig& cfg,
                         std::size_t schedule_steps, double beta0,
                         double beta_final) {
    auto& meta = params.meta();
    meta["model"] = "point-denoiser";
    meta["point_hidden"] = cat(cfg.point_hidden);
    meta["head_hidden"] = cat(cfg.head_hidden);
    meta["time_dim"] = cat(cfg.time_dim);
    meta["schedule_steps"] = cat(schedule_steps);
    meta["schedule_beta0"] = cat(beta0);
    meta["schedule_beta_final"] = cat(beta_final);
}

DenoiserConfig denoiser_config_from_meta(const ParamSet& params) {
    DenoiserConfig cfg;
    cfg.point_hidden = static_cast<std::size_t>(params.meta_number("point_hidden"));
    cfg.head_hidden = static_cast<std::size_t>(params.meta_number("head_hidden"));
    cfg.time_dim = static_cast<std::size_t>(params.meta_number("time_dim"));
    return cfg;
}

NoiseSchedule schedule_from_meta(const ParamSet& params) {
    const auto steps = static_cast<std::size_t>(params.meta_number("schedule_steps"));
    return linear_schedule(steps, params.meta_number("schedule_beta0"),
                           params.meta_number("schedule_beta_final"));
}

}  // namespace pointfield::diffusion
