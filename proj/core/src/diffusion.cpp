// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace pointfield::diffusion {

namespace {

using ad::AdamConfig;
using ad::AdamState;
using ad::Tape;
using ad::Var;

void check_part(const Tensor& part, const char* what) {
    require(part.rank() == 2 && part.cols() == 3, what,
            " must be n-by-3, got ", part.shape_str());
    require(part.rows() >= 1, what, " must be non-empty");
}

}  // namespace

Tensor q_sample(const Tensor& x0_part, std::size_t t, const Tensor& eps,
                const NoiseSchedule& schedule) {
    check_part(x0_part, "x0");
    require(x0_part.same_shape(eps), "noise shape ", eps.shape_str(),
            " does not match x0 shape ", x0_part.shape_str());
    const double abar = schedule.alpha_bar(t);  // validates t
    const double keep = std::sqrt(abar);
    const double mix = std::sqrt(1.0 - abar);
    Tensor out = Tensor::zeros_like(x0_part);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.raw()[i] = keep * x0_part.values()[i] + mix * eps.values()[i];
    }
    return out;
}

Tensor q_step(const Tensor& x_prev, std::size_t t, const Tensor& eps,
              const NoiseSchedule& schedule) {
    check_part(x_prev, "x_prev");
    require(x_prev.same_shape(eps), "noise shape mismatch in forward step");
    const double beta = schedule.beta(t);
    const double keep = std::sqrt(1.0 - beta);
    const double mix = std::sqrt(beta);
    Tensor out = Tensor::zeros_like(x_prev);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.raw()[i] = keep * x_prev.values()[i] + mix * eps.values()[i];
    }
    return out;
}

Tensor gaussian_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor out = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.raw()[i] = rng.normal();
    }
    return out;
}

Var masked_eps_loss(Tape& tape, Var eps_hat_all, const Tensor& eps,
                    std::size_t n_condition) {
    const Tensor& all = eps_hat_all.value();
    require(all.rank() == 2 && all.cols() == 3,
            "noise predictions must be n-by-3, got ", all.shape_str());
    require(n_condition < all.rows(),
            "no generated rows to score: n_condition=", n_condition,
            " of ", all.rows(), " rows");
    const std::size_t n_gen = all.rows() - n_condition;
    require(eps.rank() == 2 && eps.cols() == 3 && eps.rows() == n_gen,
            "target noise must cover exactly the generated rows");

    // Zero-one mask: multiplying the residual by it makes condition rows
    // exactly inert, so their predictions receive literally zero gradient.
    Tensor mask = Tensor::zeros_like(all);
    Tensor target = Tensor::zeros_like(all);
    for (std::size_t i = 0; i < n_gen; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            mask.at(n_condition + i, c) = 1.0;
            target.at(n_condition + i, c) = eps.at(i, c);
        }
    }
    const Var residual = ad::sub(eps_hat_all, tape.constant(target));
    const Var masked = ad::mul(residual, tape.constant(mask));
    return ad::scale(ad::sum(ad::square(masked)),
                     1.0 / (3.0 * static_cast<double>(n_gen)));
}

Var diffusion_loss(Tape& tape, const ad::BoundParams& params,
                   const DenoiserConfig& cfg, const geo::CloudPair& pair,
                   std::size_t t, const Tensor& eps,
                   const NoiseSchedule& schedule) {
    require(!pair.condition.empty() && !pair.target_extra.empty(),
            "training pair must have condition and generated points");
    const Tensor x0 = geo::to_tensor(pair.target_extra);
    const Tensor x_t = q_sample(x0, t, eps, schedule);
    const Var eps_hat = denoiser_forward_all(
        tape, params, cfg, tape.constant(geo::to_tensor(pair.condition)),
        tape.constant(x_t), t, schedule);
    return masked_eps_loss(tape, eps_hat, eps, pair.condition.size());
}

Tensor reverse_mean(const Tensor& x_t, const Tensor& eps_hat, std::size_t t,
                    const NoiseSchedule& schedule) {
    check_part(x_t, "x_t");
    require(x_t.same_shape(eps_hat), "noise prediction shape mismatch");
    const double beta = schedule.beta(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
    const double eps_coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
    Tensor out = Tensor::zeros_like(x_t);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.raw()[i] =
            inv_sqrt_alpha * (x_t.values()[i] - eps_coef * eps_hat.values()[i]);
    }
    return out;
}

DiffusionState reverse_step(const ParamSet& params, const DenoiserConfig& cfg,
                            const DiffusionState& state,
                            const NoiseSchedule& schedule, const Tensor& noise) {
    require(state.t >= 1, "reverse step from t=0 has nothing to do");
    check_part(state.condition, "condition");
    check_part(state.noisy_part, "noisy part");
    const Tensor eps_hat = denoiser_predict(params, cfg, state.condition,
                                            state.noisy_part, state.t, schedule);
    Tensor next = reverse_mean(state.noisy_part, eps_hat, state.t, schedule);
    if (state.t > 1) {
        require(noise.same_shape(state.noisy_part),
                "transition noise shape mismatch");
        const double sigma = std::sqrt(schedule.beta(state.t));
        for (std::size_t i = 0; i < next.size(); ++i) {
            next.raw()[i] += sigma * noise.values()[i];
        }
    }
    return {state.condition, std::move(next), state.t - 1};
}

geo::PointCloud sample_superresolution(const ParamSet& params,
                                       const DenoiserConfig& cfg,
                                       const geo::PointCloud& condition,
                                       std::size_t n_generate,
                                       const NoiseSchedule& schedule,
                                       std::uint64_t seed,
                                       std::size_t chunk_size,
                                       const TrajectoryObserver& observer) {
    require(!condition.empty(), "condition cloud is empty");
    require(n_generate >= 1, "nothing to generate");
    for (const geo::Vec3& p : condition.points) {
        require(geo::norm(p) <= 1.0 + 1e-9,
                "condition must be normalized into the unit ball");
    }
    if (chunk_size == 0) {
        chunk_size = n_generate;
    }

    const Tensor cond = geo::to_tensor(condition);
    geo::PointCloud out = condition;
    out.points.reserve(condition.size() + n_generate);
    std::size_t produced = 0;
    for (std::size_t chunk = 0; produced < n_generate; ++chunk) {
        const std::size_t n = std::min(chunk_size, n_generate - produced);
        Rng rng(Rng::derive(seed, 0xd1f, chunk));
        DiffusionState state{cond, gaussian_tensor(n, 3, rng), schedule.steps()};
        while (state.t > 0) {
            const Tensor noise = state.t > 1 ? gaussian_tensor(n, 3, rng)
                                             : Tensor::zeros({n, 3});
            state = reverse_step(params, cfg, state, schedule, noise);
            if (observer) {
                observer(state);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.points.push_back({state.noisy_part.at(i, 0),
                                  state.noisy_part.at(i, 1),
                                  state.noisy_part.at(i, 2)});
        }
        produced += n;
    }
    return out;
}

geo::NormalizeTransform normalize_pair(geo::CloudPair& pair) {
    const auto [unused, transform] = geo::normalize(pair.condition);
    (void)unused;
    pair.condition = transform.apply(pair.condition);
    pair.target_extra = transform.apply(pair.target_extra);
    pair.full_target = transform.apply(pair.full_target);
    return transform;
}

PairSource cloud_pair_source(geo::PointCloud source, double r_min, double r_max) {
    require(r_min >= 0.2 && r_min < r_max && r_max <= 1.0,
            "retention range must satisfy 0.2 <= r_min < r_max <= 1, got [",
            r_min, ", ", r_max, ")");
    require(source.size() >= 10, "pair source needs >= 10 points, got ",
            source.size());
    return [source = std::move(source), r_min, r_max](Rng& rng) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double r1 = rng.uniform(r_min, r_max);
            const double r2 = rng.uniform(r_min, r_max);
            const std::uint64_t pair_seed = rng.next_u64();
            try {
                return geo::make_training_pair(source, r1, r2, pair_seed);
            } catch (const geo::DegeneratePairError&) {
                continue;  // resample retentions and seed
            }
        }
        throw ContractViolation(
            "pair source failed to draw a non-degenerate pair in 1000 tries");
    };
}

ParamSet train_diffusion(const PairSource& source, const TrainDiffusionConfig& cfg,
                         TrainDiffusionReport* report) {
    require(cfg.steps >= 1, "training needs at least one step");
    require(cfg.lr > 0.0, "learning rate must be positive");
    const NoiseSchedule schedule =
        linear_schedule(cfg.schedule_steps, cfg.beta0, cfg.beta_final);
    ParamSet params = make_denoiser_params(cfg.arch, Rng::derive(cfg.seed, 1));
    stamp_denoiser_meta(params, cfg.arch, cfg.schedule_steps, cfg.beta0,
                        cfg.beta_final);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    AdamState adam(params);

    std::vector<double> losses;
    losses.reserve(cfg.steps);
    // Most recent weights that produced a finite loss; what gets saved if the
    // run blows up.
    ParamSet last_good = params;
    auto abort_diverged = [&](std::size_t step, const std::string& what) {
        std::string saved;
        if (!cfg.checkpoint_path.empty()) {
            last_good.save(cfg.checkpoint_path);
            saved = cfg.checkpoint_path;
        }
        throw TrainingDiverged(
            cat("diffusion training hit a ", what, " at step ", step), saved);
    };

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Rng rng(Rng::derive(cfg.seed, 2, step));
        geo::CloudPair pair = source(rng);
        normalize_pair(pair);
        const std::size_t t = 1 + rng.below(schedule.steps());
        const Tensor eps = gaussian_tensor(pair.target_extra.size(), 3, rng);

        double loss_value = 0.0;
        // Fail-fast numerics raise contract violations on overflow or NaN;
        // inside the update they mean the run diverged, not that the caller
        // misused the interface.
        try {
            Tape tape;
            const ad::BoundParams bound(tape, params);
            const Var loss = diffusion_loss(tape, bound, cfg.arch, pair, t, eps,
                                            schedule);
            loss_value = loss.value().scalar_value();
            last_good = params;
            tape.backward(loss);
            adam.step(params, bound.grads(params), adam_cfg);
        } catch (const ContractViolation& e) {
            abort_diverged(step, e.what());
        }
        losses.push_back(loss_value);
        if (cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) {
            std::cerr << "train-diffusion step " << step + 1 << "/" << cfg.steps
                      << " loss " << loss_value << "\n";
        }
    }

    if (report != nullptr) {
        const std::size_t window = std::max<std::size_t>(1, cfg.steps / 10);
        auto window_avg = [&](std::size_t begin) {
            double sum = 0.0;
            for (std::size_t i = begin; i < begin + window; ++i) {
                sum += losses[i];
            }
            return sum / static_cast<double>(window);
        };
        report->first_window_avg = window_avg(0);
        report->last_window_avg = window_avg(losses.size() - window);
        report->losses = std::move(losses);
    }
    if (!cfg.checkpoint_path.empty()) {
        params.save(cfg.checkpoint_path);
    }
    return params;
}

}  // namespace pointfield::diffusion
