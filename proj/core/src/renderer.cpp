// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "pointfield/optim.hpp"
#include "pointfield/rng.hpp"

namespace pointfield::render {

namespace {

using ad::AdamConfig;
using ad::AdamState;

}  // namespace

Tensor predict_rgb(const ParamSet& params, const FieldConfig& arch,
                   const RenderConfig& config, const std::vector<Ray>& rays,
                   const std::vector<RaySamples>& samples,
                   const spatial::SpatialIndex& index) {
    Tape tape;
    const BoundParams bound(tape, params);
    const Var rgb = render_rays(tape, bound, arch, rays, samples, index,
                                config.use_background);
    return rgb.value();
}

Image render_image(const ParamSet& params, const FieldConfig& arch,
                   const RenderConfig& config, const Camera& camera,
                   const spatial::SpatialIndex& index, std::uint64_t seed,
                   std::size_t chunk_rays) {
    check_camera(camera);
    check_render_config(config);
    require(chunk_rays >= 1, "chunk size must be positive");

    Image out = Image::filled(camera.width, camera.height, 0.0, 0.0, 0.0);
    const std::size_t n_pixels = camera.width * camera.height;
    std::vector<Ray> rays;
    std::vector<RaySamples> samples;
    std::vector<std::size_t> pixels;
    rays.reserve(chunk_rays);
    samples.reserve(chunk_rays);
    pixels.reserve(chunk_rays);

    auto flush = [&]() {
        if (rays.empty()) return;
        const Tensor rgb =
            predict_rgb(params, arch, config, rays, samples, index);
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            const std::size_t x = pixels[i] % camera.width;
            const std::size_t y = pixels[i] / camera.width;
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = rgb.at(i, c);
        }
        rays.clear();
        samples.clear();
        pixels.clear();
    };

    for (std::size_t pix = 0; pix < n_pixels; ++pix) {
        const std::size_t x = pix % camera.width;
        const std::size_t y = pix / camera.width;
        const Ray ray = generate_ray(camera, static_cast<double>(x) + 0.5,
                                     static_cast<double>(y) + 0.5);
        rays.push_back(ray);
        samples.push_back(
            sample_ray(ray, config, index, Rng::derive(seed, 3, pix)));
        pixels.push_back(pix);
        if (rays.size() == chunk_rays) flush();
    }
    flush();
    return out;
}

ParamSet train_renderer(const std::vector<TrainView>& views,
                        const spatial::SpatialIndex& index,
                        const TrainRendererConfig& cfg,
                        TrainRendererReport* report) {
    require(cfg.steps >= 1, "training needs at least one step");
    require(cfg.lr > 0.0, "learning rate must be positive");
    require(cfg.batch_rays >= 1, "batch must contain at least one ray");
    require(!views.empty(), "training needs at least one view");
    check_render_config(cfg.render);
    for (const TrainView& view : views) {
        check_camera(view.camera);
        require(view.image.width == view.camera.width &&
                    view.image.height == view.camera.height,
                "image size does not match its camera");
    }

    ParamSet params = make_field_params(cfg.arch, Rng::derive(cfg.seed, 1));
    stamp_field_meta(params, cfg.arch);
    stamp_render_meta(params, cfg.render);
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
            cat("renderer training hit a ", what, " at step ", step), saved);
    };

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Rng rng(Rng::derive(cfg.seed, 2, step));
        std::vector<Ray> rays;
        std::vector<RaySamples> samples;
        Tensor gt = Tensor::zeros({cfg.batch_rays, 3});
        rays.reserve(cfg.batch_rays);
        samples.reserve(cfg.batch_rays);
        for (std::size_t b = 0; b < cfg.batch_rays; ++b) {
            const TrainView& view = views[rng.below(views.size())];
            const std::size_t x = rng.below(view.camera.width);
            const std::size_t y = rng.below(view.camera.height);
            const Ray ray =
                generate_ray(view.camera, static_cast<double>(x) + 0.5,
                             static_cast<double>(y) + 0.5);
            rays.push_back(ray);
            samples.push_back(
                sample_ray(ray, cfg.render, index, rng.next_u64()));
            for (std::size_t c = 0; c < 3; ++c) gt.at(b, c) = view.image.at(x, y, c);
        }

        double loss_value = 0.0;
        // Fail-fast numerics raise contract violations on overflow or NaN;
        // inside the update they mean the run diverged, not that the caller
        // misused the interface.
        try {
            Tape tape;
            const BoundParams bound(tape, params);
            const Var rgb = render_rays(tape, bound, cfg.arch, rays, samples,
                                        index, cfg.render.use_background);
            const Var loss = render_loss(tape, rgb, gt);
            loss_value = loss.value().scalar_value();
            last_good = params;
            tape.backward(loss);
            adam.step(params, bound.grads(params), adam_cfg);
        } catch (const ContractViolation& e) {
            abort_diverged(step, e.what());
        }
        losses.push_back(loss_value);
        if (cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) {
            std::cerr << "train-renderer step " << step + 1 << "/" << cfg.steps
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

}  // namespace pointfield::render
