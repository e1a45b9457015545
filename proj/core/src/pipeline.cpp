// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <utility>

#include "pointfield/chamfer.hpp"
#include "pointfield/cloud_pairs.hpp"
#include "pointfield/common.hpp"
#include "pointfield/kdtree.hpp"
#include "pointfield/ply.hpp"

namespace pointfield::pipeline {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::ofstream open_csv(const std::string& path) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw IoError(cat("cannot write '", path, "'"));
    return out;
}

void finish_csv(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError(cat("failed writing '", path, "'"));
}

geo::PointCloud load_prior(const ScenePaths& paths) {
    if (!fs::exists(paths.prior))
        throw IoError(cat("no prior cloud at '", paths.prior, "' (run gen-scene first)"));
    return geo::load_ply(paths.prior);
}

double resolve_radius(const RunConfig& config, const spatial::SpatialIndex& index) {
    if (config.radius > 0.0) return config.radius;
    return config.radius_scale * spatial::mean_nn_spacing(index);
}

// Everything needed to render one mode: its trained weights, the sampling
// geometry they were trained with, and the point cloud the mode works from.
struct ModeContext {
    ad::ParamSet params;
    render::FieldConfig arch;
    render::RenderConfig render;
    spatial::SpatialIndex index;
};

ModeContext make_mode_context(const ScenePaths& paths, const Scene& scene, Ablation mode) {
    std::string name = ablation_name(mode);
    std::string checkpoint = paths.renderer_checkpoint(name);
    if (!fs::exists(checkpoint))
        throw IoError(cat("missing checkpoint for mode '", name, "' at '", checkpoint,
                          "' (run train-renderer first)"));
    ad::ParamSet params = ad::ParamSet::load(checkpoint);
    render::FieldConfig arch = render::field_config_from_meta(params);
    render::RenderConfig rc = render::render_config_from_meta(params);
    const geo::PointCloud& cloud = ablation_uses_dense(mode) ? scene.dense : scene.prior;
    if (ablation_uses_dense(mode))
        require(!scene.dense.empty(), "mode '", name,
                "' needs the upsampled cloud; run the diffusion stage first");
    return ModeContext{std::move(params), arch, rc, spatial::build_index(cloud)};
}

std::uint64_t view_render_seed(std::uint64_t seed, Ablation mode, std::size_t view) {
    return Rng::derive(seed, 31, static_cast<std::uint64_t>(mode), view);
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    return std::max(d.count(), 1e-9);
}

// The same stratified samples with pruning undone: every foreground sample
// kept, each given its K nearest neighbors regardless of distance. This is
// the cost baseline a dense field evaluation would pay.
render::RaySamples without_pruning(const render::RaySamples& samples,
                                   const spatial::SpatialIndex& index, std::size_t k) {
    render::RaySamples out = samples;
    out.retained.clear();
    out.retained_deltas.clear();
    for (std::size_t i = 0; i < out.foreground.size(); ++i) {
        out.foreground[i].neighbors = index.nearest(out.foreground[i].position, k);
        out.retained.push_back(i);
    }
    std::size_t n = out.foreground.size();
    double gap_sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        double gap = out.foreground[i + 1].t_along_ray - out.foreground[i].t_along_ray;
        out.retained_deltas.push_back(gap);
        gap_sum += gap;
    }
    out.retained_deltas.push_back(n > 1 ? gap_sum / static_cast<double>(n - 1) : 1.0);
    return out;
}

}  // namespace

const std::array<Ablation, 4>& all_ablations() {
    static const std::array<Ablation, 4> kModes = {
        Ablation::none, Ablation::no_diffusion, Ablation::no_background,
        Ablation::neither};
    return kModes;
}

std::string ablation_name(Ablation mode) {
    switch (mode) {
        case Ablation::none: return "none";
        case Ablation::no_diffusion: return "no-diffusion";
        case Ablation::no_background: return "no-background";
        case Ablation::neither: return "neither";
    }
    throw ContractViolation("unknown ablation mode");
}

Ablation parse_ablation(const std::string& name) {
    for (Ablation mode : all_ablations())
        if (ablation_name(mode) == name) return mode;
    throw ParseError(cat("unknown ablation '", name,
                         "'; expected none, no-diffusion, no-background, or neither"));
}

bool ablation_uses_dense(Ablation mode) {
    return mode == Ablation::none || mode == Ablation::no_background;
}

bool ablation_uses_background(Ablation mode) {
    return mode == Ablation::none || mode == Ablation::no_diffusion;
}

PreparePairsReport prepare_pairs(const std::string& scene_dir, const RunConfig& config,
                                 std::uint64_t seed, std::size_t count) {
    check_run_config(config);
    require(count >= 1, "need at least one pair");
    ScenePaths paths(scene_dir);
    geo::PointCloud prior = load_prior(paths);
    auto [normalized, transform] = geo::normalize(prior);
    (void)transform;

    fs::create_directories(paths.pairs_dir());
    std::string manifest_path = (fs::path(paths.pairs_dir()) / "manifest.csv").string();
    std::ofstream manifest = open_csv(manifest_path);
    manifest << "pair,stem,r1,r2,condition_points,extra_points\n";
    for (std::size_t k = 0; k < count; ++k) {
        geo::CloudPair pair;
        geo::PairMeta meta;
        bool drawn = false;
        for (std::size_t attempt = 0; attempt < 100 && !drawn; ++attempt) {
            Rng rng(Rng::derive(seed, 51, k, attempt));
            meta.r1 = rng.uniform(config.pair_r_min, config.pair_r_max);
            meta.r2 = rng.uniform(config.pair_r_min, config.pair_r_max);
            meta.seed = rng.next_u64();
            try {
                pair = geo::make_training_pair(normalized, meta.r1, meta.r2, meta.seed);
                drawn = true;
            } catch (const geo::DegeneratePairError&) {
            }
        }
        require(drawn, "could not draw a non-degenerate pair after 100 attempts");
        std::string stem_name = "pair_" + view_stem(k).substr(5);  // reuse the 3-digit pad
        std::string stem = (fs::path(paths.pairs_dir()) / stem_name).string();
        geo::save_pair(pair, meta, stem);
        manifest << k << "," << stem_name << "," << fmt(meta.r1) << "," << fmt(meta.r2)
                 << "," << pair.condition.size() << "," << pair.target_extra.size() << "\n";
    }
    finish_csv(manifest, manifest_path);
    return PreparePairsReport{count, manifest_path};
}

void train_diffusion_stage(const std::string& scene_dir, const RunConfig& config,
                           std::uint64_t seed, diffusion::TrainDiffusionReport* report) {
    check_run_config(config);
    ScenePaths paths(scene_dir);
    geo::PointCloud prior = load_prior(paths);
    require(prior.size() >= 10, "prior cloud has ", prior.size(),
            " points; need at least 10 to draw training pairs");
    auto [normalized, transform] = geo::normalize(prior);
    (void)transform;

    diffusion::TrainDiffusionConfig tc;
    tc.steps = config.diffusion_steps;
    tc.lr = config.diffusion_lr;
    tc.seed = Rng::derive(seed, 21);
    tc.arch = config.denoiser;
    tc.schedule_steps = config.schedule_steps;
    tc.beta0 = config.beta0;
    tc.beta_final = config.beta_final;
    tc.checkpoint_path = paths.diffusion_checkpoint;
    tc.log_every = config.log_every;
    diffusion::PairSource source =
        diffusion::cloud_pair_source(std::move(normalized), config.pair_r_min,
                                     config.pair_r_max);
    diffusion::train_diffusion(source, tc, report);
}

UpsampleReport upsample_stage(const std::string& scene_dir, const RunConfig& config,
                              std::uint64_t seed) {
    check_run_config(config);
    ScenePaths paths(scene_dir);
    if (!fs::exists(paths.diffusion_checkpoint))
        throw IoError(cat("missing diffusion checkpoint at '", paths.diffusion_checkpoint,
                          "' (run train-diffusion first)"));
    ad::ParamSet params = ad::ParamSet::load(paths.diffusion_checkpoint);
    diffusion::DenoiserConfig arch = diffusion::denoiser_config_from_meta(params);
    diffusion::NoiseSchedule schedule = diffusion::schedule_from_meta(params);

    geo::PointCloud prior = load_prior(paths);
    auto [normalized, transform] = geo::normalize(prior);
    std::size_t n_generate = prior.size() * (config.upsample_factor - 1);
    geo::PointCloud grown = diffusion::sample_superresolution(
        params, arch, normalized, n_generate, schedule, Rng::derive(seed, 22),
        config.chunk_size);
    geo::PointCloud dense = transform.invert(grown);
    geo::save_ply(dense, paths.dense);

    UpsampleReport report;
    report.prior_points = prior.size();
    report.dense_points = dense.size();
    if (fs::exists(paths.surface)) {
        geo::PointCloud surface = geo::load_ply(paths.surface);
        report.chamfer_prior = geo::chamfer(prior, surface);
        report.chamfer_dense = geo::chamfer(dense, surface);
        report.has_oracle = true;
    } else {
        report.chamfer_prior = std::numeric_limits<double>::quiet_NaN();
        report.chamfer_dense = std::numeric_limits<double>::quiet_NaN();
    }
    return report;
}

Stage1Report run_stage1(const std::string& scene_dir, const RunConfig& config,
                        std::uint64_t seed) {
    Stage1Report report;
    train_diffusion_stage(scene_dir, config, seed, &report.training);
    report.upsample = upsample_stage(scene_dir, config, seed);
    return report;
}

Stage2Report run_stage2(const std::string& scene_dir, const RunConfig& config,
                        std::uint64_t seed, Ablation mode) {
    check_run_config(config);
    ScenePaths paths(scene_dir);
    Scene scene = load_scene(scene_dir);
    std::string name = ablation_name(mode);
    const geo::PointCloud& cloud = ablation_uses_dense(mode) ? scene.dense : scene.prior;
    if (ablation_uses_dense(mode) && scene.dense.empty())
        throw IoError(cat("mode '", name, "' needs '", paths.dense,
                          "' (run the diffusion stage first)"));

    spatial::SpatialIndex index = spatial::build_index(cloud);
    render::TrainRendererConfig tc;
    tc.steps = config.renderer_steps;
    tc.lr = config.renderer_lr;
    tc.batch_rays = config.batch_rays;
    tc.seed = Rng::derive(seed, 23, static_cast<std::uint64_t>(mode));
    tc.arch = config.field;
    tc.render = render_config(config);
    tc.render.radius = resolve_radius(config, index);
    tc.render.use_background = ablation_uses_background(mode);
    tc.checkpoint_path = paths.renderer_checkpoint(name);
    tc.log_every = config.log_every;

    std::vector<render::TrainView> views;
    for (std::size_t i : train_view_indices(scene.views.size()))
        views.push_back({scene.views[i].camera, scene.images[i]});

    Stage2Report report;
    report.checkpoint = tc.checkpoint_path;
    report.loss_csv = paths.renderer_loss_csv(name);
    report.radius = tc.render.radius;
    render::train_renderer(views, index, tc, &report.training);

    std::ofstream csv = open_csv(report.loss_csv);
    csv << "step,loss\n";
    for (std::size_t i = 0; i < report.training.losses.size(); ++i)
        csv << (i + 1) << "," << fmt(report.training.losses[i]) << "\n";
    finish_csv(csv, report.loss_csv);
    return report;
}

std::vector<std::string> render_test_views(const std::string& scene_dir,
                                           const RunConfig& config, std::uint64_t seed,
                                           Ablation mode) {
    check_run_config(config);
    ScenePaths paths(scene_dir);
    Scene scene = load_scene(scene_dir);
    ModeContext ctx = make_mode_context(paths, scene, mode);
    std::string dir = paths.renders_dir(ablation_name(mode));
    fs::create_directories(dir);
    std::vector<std::string> written;
    for (std::size_t view : test_view_indices(scene.views.size())) {
        render::Image image = render::render_image(ctx.params, ctx.arch, ctx.render,
                                           scene.views[view].camera, ctx.index,
                                           view_render_seed(seed, mode, view));
        std::string path = (fs::path(dir) / (view_stem(view) + ".png")).string();
        render::save_png(image, path);
        written.push_back(path);
    }
    return written;
}

EvalReport run_eval(const std::string& scene_dir, const RunConfig& config,
                    std::uint64_t seed, const std::vector<Ablation>& modes) {
    check_run_config(config);
    require(!modes.empty(), "eval needs at least one mode");
    ScenePaths paths(scene_dir);
    Scene scene = load_scene(scene_dir);
    std::vector<std::size_t> test_views = test_view_indices(scene.views.size());
    require(!test_views.empty(), "scene has no held-out test views");

    EvalReport report;
    for (Ablation mode : modes) {
        ModeContext ctx = make_mode_context(paths, scene, mode);
        std::string name = ablation_name(mode);
        double psnr_sum = 0.0;
        double ssim_sum = 0.0;
        for (std::size_t view : test_views) {
            render::Image rendered = render::render_image(ctx.params, ctx.arch, ctx.render,
                                                  scene.views[view].camera, ctx.index,
                                                  view_render_seed(seed, mode, view));
            EvalRow row;
            row.mode = name;
            row.view = view;
            row.psnr = render::psnr(scene.images[view], rendered);
            row.ssim = render::ssim(scene.images[view], rendered);
            psnr_sum += row.psnr;
            ssim_sum += row.ssim;
            report.rows.push_back(row);
        }
        double n = static_cast<double>(test_views.size());
        report.means.push_back({name, psnr_sum / n, ssim_sum / n});
    }

    std::ofstream metrics = open_csv(paths.metrics_csv);
    metrics << "mode,view,psnr,ssim\n";
    for (const EvalRow& row : report.rows)
        metrics << row.mode << "," << row.view << "," << fmt(row.psnr) << ","
                << fmt(row.ssim) << "\n";
    finish_csv(metrics, paths.metrics_csv);

    std::ofstream means = open_csv(paths.means_csv);
    means << "mode,mean_psnr,mean_ssim\n";
    for (const ModeMeans& m : report.means)
        means << m.mode << "," << fmt(m.mean_psnr) << "," << fmt(m.mean_ssim) << "\n";
    finish_csv(means, paths.means_csv);
    return report;
}

BenchReport run_bench(const std::string& scene_dir, const RunConfig& config,
                      std::uint64_t seed) {
    check_run_config(config);
    ScenePaths paths(scene_dir);
    Scene scene = load_scene(scene_dir);
    const geo::PointCloud& cloud = scene.dense.empty() ? scene.prior : scene.dense;
    spatial::SpatialIndex index = spatial::build_index(cloud);

    render::RenderConfig rc = render_config(config);
    rc.radius = resolve_radius(config, index);
    rc.use_background = false;  // isolate the foreground path both ways

    BenchReport report;
    report.n_rays = 128;
    report.n_queries = 2000;

    // Rays through random training-view pixels, sampled once and reused by
    // every measurement below.
    std::vector<std::size_t> train_views = train_view_indices(scene.views.size());
    require(!train_views.empty(), "scene has no training views");
    Rng ray_rng(Rng::derive(seed, 41));
    std::vector<render::Ray> rays;
    std::vector<render::RaySamples> pruned;
    std::vector<render::RaySamples> unpruned;
    std::size_t retained_total = 0;
    for (std::size_t k = 0; k < report.n_rays; ++k) {
        const render::Camera& camera =
            scene.views[train_views[k % train_views.size()]].camera;
        double px = static_cast<double>(ray_rng.below(camera.width)) + 0.5;
        double py = static_cast<double>(ray_rng.below(camera.height)) + 0.5;
        render::Ray ray = render::generate_ray(camera, px, py);
        render::RaySamples samples = render::sample_ray(ray, rc, index, ray_rng.next_u64());
        retained_total += samples.retained.size();
        unpruned.push_back(without_pruning(samples, index, rc.neighbors));
        pruned.push_back(std::move(samples));
        rays.push_back(ray);
    }
    report.retained_fraction =
        static_cast<double>(retained_total) /
        static_cast<double>(report.n_rays * rc.n_fg_samples);

    // Raw neighbor-query throughput at perturbed cloud points.
    Rng query_rng(Rng::derive(seed, 43));
    std::vector<geo::Vec3> queries;
    for (std::size_t k = 0; k < report.n_queries; ++k) {
        geo::Vec3 base = cloud[query_rng.below(cloud.size())];
        queries.push_back(base + geo::Vec3{query_rng.normal(), query_rng.normal(),
                                           query_rng.normal()} *
                                     rc.radius);
    }
    std::size_t found = 0;
    auto query_start = std::chrono::steady_clock::now();
    for (const geo::Vec3& q : queries)
        found += index.radius_neighbors(q, rc.radius, rc.neighbors).indices.size();
    report.queries_per_s = static_cast<double>(report.n_queries) /
                           elapsed_seconds(query_start);
    require(found != static_cast<std::size_t>(-1), "impossible");  // keep `found` live

    // Foreground rendering throughput, identical rays, with and without the
    // retained-sample reduction. Untrained weights cost the same as trained.
    ad::ParamSet params = render::make_field_params(config.field, Rng::derive(seed, 42));
    const std::size_t chunk = 32;
    auto run_pass = [&](const std::vector<render::RaySamples>& samples) {
        for (std::size_t begin = 0; begin < rays.size(); begin += chunk) {
            std::size_t end = std::min(begin + chunk, rays.size());
            std::vector<render::Ray> ray_chunk(rays.begin() + begin, rays.begin() + end);
            std::vector<render::RaySamples> sample_chunk(samples.begin() + begin,
                                                         samples.begin() + end);
            render::predict_rgb(params, config.field, rc, ray_chunk, sample_chunk, index);
        }
    };
    run_pass(pruned);  // warm-up: touches every allocation path once
    auto pruned_start = std::chrono::steady_clock::now();
    run_pass(pruned);
    report.rays_per_s_pruned =
        static_cast<double>(rays.size()) / elapsed_seconds(pruned_start);
    auto unpruned_start = std::chrono::steady_clock::now();
    run_pass(unpruned);
    report.rays_per_s_unpruned =
        static_cast<double>(rays.size()) / elapsed_seconds(unpruned_start);

    std::ofstream csv = open_csv(paths.bench_csv);
    csv << "retained_fraction,queries_per_s,rays_per_s_pruned,rays_per_s_unpruned,"
           "n_rays,n_queries\n";
    csv << fmt(report.retained_fraction) << "," << fmt(report.queries_per_s) << ","
        << fmt(report.rays_per_s_pruned) << "," << fmt(report.rays_per_s_unpruned) << ","
        << report.n_rays << "," << report.n_queries << "\n";
    finish_csv(csv, paths.bench_csv);
    return report;
}

}  // namespace pointfield::pipeline
