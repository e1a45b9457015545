// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver for the full pipeline: synthetic scene generation,
// diffusion upsampling of the prior cloud, renderer training, evaluation,
// and benchmarking. Every subcommand operates on one run directory (--out)
// using the canonical file layout, so the stages compose:
//
//   pointfield gen-scene      --out run
//   pointfield train-diffusion --out run
//   pointfield upsample        --out run
//   pointfield train-renderer  --out run --ablation none
//   pointfield eval            --out run
//
// Success exits 0. Any failure prints a single `error: ...` line to stderr
// and exits nonzero.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <list>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pointfield/pipeline.hpp"
#include "pointfield/synthetic.hpp"

namespace {

using namespace pointfield;

struct Common {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

Common& add_common(CLI::App* sub, std::list<Common>& store) {
    store.emplace_back();
    Common& c = store.back();
    sub->add_option("--config", c.config,
                    "key = value config file; omitted keys keep their defaults")
        ->check(CLI::ExistingFile);
    c.seed_opt = sub->add_option("--seed", c.seed,
                                 "random seed (overrides the config's seed)");
    sub->add_option("--out", c.out, "run directory all inputs and outputs live in")
        ->required();
    return c;
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig() : load_run_config(c.config);
    check_run_config(cfg);
    return cfg;
}

std::uint64_t resolve_seed(const Common& c, const RunConfig& cfg) {
    return c.seed_opt->count() > 0 ? c.seed : cfg.seed;
}

std::string one_line(std::string text) {
    std::replace(text.begin(), text.end(), '\n', ';');
    return text;
}

void cmd_gen_scene(const Common& c) {
    RunConfig cfg = resolve_config(c);
    synthetic::SyntheticSceneSpec spec = synthetic::toy_scene_spec();
    spec.n_views = cfg.scene_views;
    spec.width = cfg.scene_width;
    spec.height = cfg.scene_height;
    spec.surface_points = cfg.scene_surface_points;
    spec.subsample = cfg.scene_subsample;
    spec.jitter_sigma = cfg.scene_jitter;
    synthetic::gen_scene(spec, resolve_seed(c, cfg), c.out);
    Scene scene = load_scene(c.out);
    std::cout << "gen-scene: " << scene.views.size() << " views ("
              << test_view_indices(scene.views.size()).size() << " held out), "
              << scene.surface.size() << " surface points, " << scene.prior.size()
              << " prior points -> " << c.out << "\n";
}

void cmd_prepare_pairs(const Common& c, const std::size_t& count) {
    RunConfig cfg = resolve_config(c);
    pipeline::PreparePairsReport report =
        pipeline::prepare_pairs(c.out, cfg, resolve_seed(c, cfg), count);
    std::cout << "prepare-pairs: wrote " << report.count << " pairs, manifest at "
              << report.manifest_csv << "\n";
}

void cmd_train_diffusion(const Common& c) {
    RunConfig cfg = resolve_config(c);
    diffusion::TrainDiffusionReport report;
    pipeline::train_diffusion_stage(c.out, cfg, resolve_seed(c, cfg), &report);
    std::cout << "train-diffusion: " << report.losses.size() << " steps, loss "
              << report.first_window_avg << " -> " << report.last_window_avg << "\n";
}

void cmd_upsample(const Common& c) {
    RunConfig cfg = resolve_config(c);
    pipeline::UpsampleReport report =
        pipeline::upsample_stage(c.out, cfg, resolve_seed(c, cfg));
    std::cout << "upsample: " << report.prior_points << " -> " << report.dense_points
              << " points\n";
    if (report.has_oracle)
        std::cout << "upsample: chamfer vs surface, prior " << report.chamfer_prior
                  << ", dense " << report.chamfer_dense << "\n";
}

void cmd_train_renderer(const Common& c, const std::string& mode_name) {
    RunConfig cfg = resolve_config(c);
    pipeline::Ablation mode = pipeline::parse_ablation(mode_name);
    pipeline::Stage2Report report =
        pipeline::run_stage2(c.out, cfg, resolve_seed(c, cfg), mode);
    std::cout << "train-renderer[" << mode_name << "]: "
              << report.training.losses.size() << " steps, loss "
              << report.training.first_window_avg << " -> "
              << report.training.last_window_avg << ", radius " << report.radius
              << ", checkpoint " << report.checkpoint << "\n";
}

void cmd_render(const Common& c, const std::string& mode_name) {
    RunConfig cfg = resolve_config(c);
    pipeline::Ablation mode = pipeline::parse_ablation(mode_name);
    std::vector<std::string> files =
        pipeline::render_test_views(c.out, cfg, resolve_seed(c, cfg), mode);
    std::cout << "render[" << mode_name << "]: wrote " << files.size()
              << " test views\n";
    for (const std::string& f : files) std::cout << "  " << f << "\n";
}

void cmd_eval(const Common& c, const std::vector<std::string>& mode_names) {
    RunConfig cfg = resolve_config(c);
    std::vector<pipeline::Ablation> modes;
    if (mode_names.empty())
        modes.assign(pipeline::all_ablations().begin(), pipeline::all_ablations().end());
    else
        for (const std::string& name : mode_names)
            modes.push_back(pipeline::parse_ablation(name));
    pipeline::EvalReport report = pipeline::run_eval(c.out, cfg, resolve_seed(c, cfg), modes);
    for (const pipeline::ModeMeans& m : report.means)
        std::cout << "eval[" << m.mode << "]: mean psnr " << m.mean_psnr
                  << " dB, mean ssim " << m.mean_ssim << "\n";
    std::cout << "eval: " << report.rows.size() << " rows -> "
              << ScenePaths(c.out).metrics_csv << "\n";
}

void cmd_bench(const Common& c) {
    RunConfig cfg = resolve_config(c);
    pipeline::BenchReport report = pipeline::run_bench(c.out, cfg, resolve_seed(c, cfg));
    std::cout << "bench: retained fraction " << report.retained_fraction << " over "
              << report.n_rays << " rays\n";
    std::cout << "bench: " << report.queries_per_s << " neighbor queries/s\n";
    std::cout << "bench: " << report.rays_per_s_pruned << " rays/s pruned vs "
              << report.rays_per_s_unpruned << " rays/s unpruned ("
              << report.rays_per_s_pruned / report.rays_per_s_unpruned << "x)\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-cloud upsampling and point-based neural rendering"};
    app.require_subcommand(1);
    std::list<Common> store;

    Common& gen = add_common(
        app.add_subcommand("gen-scene", "generate a synthetic scene with ground truth"),
        store);
    app.get_subcommand("gen-scene")->callback([&] { cmd_gen_scene(gen); });

    CLI::App* pairs_cmd =
        app.add_subcommand("prepare-pairs", "write sample training pairs for inspection");
    Common& pairs = add_common(pairs_cmd, store);
    auto pair_count = std::make_shared<std::size_t>(16);
    pairs_cmd->add_option("--count", *pair_count, "number of pairs to draw");
    pairs_cmd->callback([&, pair_count] { cmd_prepare_pairs(pairs, *pair_count); });

    Common& traind = add_common(
        app.add_subcommand("train-diffusion", "fit the point denoiser to the prior cloud"),
        store);
    app.get_subcommand("train-diffusion")->callback([&] { cmd_train_diffusion(traind); });

    Common& upsample = add_common(
        app.add_subcommand("upsample", "grow the prior cloud from the trained denoiser"),
        store);
    app.get_subcommand("upsample")->callback([&] { cmd_upsample(upsample); });

    CLI::App* trainr_cmd =
        app.add_subcommand("train-renderer", "fit the point-based renderer to the training views");
    Common& trainr = add_common(trainr_cmd, store);
    auto trainr_mode = std::make_shared<std::string>("none");
    trainr_cmd->add_option("--ablation", *trainr_mode,
                           "none, no-diffusion, no-background, or neither");
    trainr_cmd->callback([&, trainr_mode] { cmd_train_renderer(trainr, *trainr_mode); });

    CLI::App* render_cmd = app.add_subcommand("render", "render the held-out test views");
    Common& render_args = add_common(render_cmd, store);
    auto render_mode = std::make_shared<std::string>("none");
    render_cmd->add_option("--ablation", *render_mode,
                           "none, no-diffusion, no-background, or neither");
    render_cmd->callback([&, render_mode] { cmd_render(render_args, *render_mode); });

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "score test-view renders against ground truth");
    Common& eval_args = add_common(eval_cmd, store);
    auto eval_modes = std::make_shared<std::vector<std::string>>();
    eval_cmd->add_option("--ablation", *eval_modes,
                         "mode(s) to score; repeatable; default all four");
    eval_cmd->callback([&, eval_modes] { cmd_eval(eval_args, *eval_modes); });

    Common& bench = add_common(
        app.add_subcommand("bench", "measure sample pruning and rendering throughput"),
        store);
    app.get_subcommand("bench")->callback([&] { cmd_bench(bench); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << one_line(e.what()) << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << one_line(e.what()) << std::endl;
        return 1;
    }
    return 0;
}
