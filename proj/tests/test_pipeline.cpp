// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pointfield/pipeline.hpp"
#include "pointfield/synthetic.hpp"
#include "test_support.hpp"

using namespace pointfield;
using namespace pointfield::pipeline;
using namespace pointfield::synthetic;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& leaf) {
    fs::path dir = fs::temp_directory_path() / "pointfield_pipeline_test" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

// Small scene + small networks sized so every stage runs in well under a
// second; shared by the stage and evaluation tests below.
SyntheticSceneSpec tiny_spec() {
    SyntheticSceneSpec spec = toy_scene_spec();
    spec.n_views = 5;
    spec.width = 16;
    spec.height = 16;
    spec.surface_points = 200;
    spec.subsample = 0.25;
    spec.jitter_sigma = 0.01;
    return spec;
}

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.schedule_steps = 30;
    cfg.diffusion_steps = 25;
    cfg.denoiser.point_hidden = 16;
    cfg.denoiser.head_hidden = 32;
    cfg.denoiser.time_dim = 8;
    cfg.renderer_steps = 12;
    cfg.batch_rays = 4;
    cfg.n_fg_samples = 8;
    cfg.n_bg_samples = 4;
    cfg.field.geo_hidden = 8;
    cfg.field.fg_hidden = 16;
    cfg.field.bg_hidden = 16;
    cfg.field.fuse_hidden = 16;
    cfg.field.bg_posenc_levels = 2;
    cfg.scene_views = 5;
    cfg.scene_width = 16;
    cfg.scene_height = 16;
    cfg.scene_surface_points = 200;
    return cfg;
}

// One fully processed scene: generated, stage 1 run, stage 2 run for all four
// modes. Built once on first use.
struct ProcessedScene {
    std::string dir;
    RunConfig cfg;
    Stage1Report stage1;
};

const ProcessedScene& processed_scene() {
    static ProcessedScene scene = [] {
        ProcessedScene s;
        s.dir = scratch_dir("processed");
        s.cfg = tiny_config();
        gen_scene(tiny_spec(), 7, s.dir);
        s.stage1 = run_stage1(s.dir, s.cfg, 7);
        for (Ablation mode : all_ablations()) run_stage2(s.dir, s.cfg, 7, mode);
        return s;
    }();
    return scene;
}

double nearest_surface_distance(const SyntheticSceneSpec& spec, const geo::Vec3& p) {
    double best = std::numeric_limits<double>::infinity();
    for (const SpherePrimitive& s : spec.spheres)
        best = std::min(best, std::abs(norm(p - s.center) - s.radius));
    if (spec.has_ground && std::abs(p.x) <= spec.ground_half_extent &&
        std::abs(p.z) <= spec.ground_half_extent)
        best = std::min(best, std::abs(p.y - spec.ground_height));
    return best;
}

}  // namespace

TEST_CASE("run config defaults match the reference setup") {
    RunConfig cfg;
    CHECK(cfg.schedule_steps == 1000);
    CHECK(cfg.beta0 == 1e-4);
    CHECK(cfg.beta_final == 0.01);
    CHECK(cfg.neighbors == 8);
    CHECK(cfg.diffusion_lr == 2e-4);
    CHECK(cfg.renderer_lr == 5e-4);
    CHECK(cfg.upsample_factor == 4);
    CHECK_NOTHROW(check_run_config(cfg));
}

TEST_CASE("config files default everything and reject unknown keys") {
    std::string dir = scratch_dir("config");
    std::string path = dir + "/run.cfg";
    {
        std::ofstream out(path);
        out << "# overrides only\n\n";
        out << "schedule_steps = 50\n";
        out << "renderer_lr = 0.001   # inline comment\n";
        out << "scene_width = 32\n";
    }
    RunConfig cfg = load_run_config(path);
    CHECK(cfg.schedule_steps == 50);
    CHECK(cfg.renderer_lr == doctest::Approx(1e-3));
    CHECK(cfg.scene_width == 32);
    CHECK(cfg.beta0 == 1e-4);       // untouched keys keep their defaults
    CHECK(cfg.neighbors == 8);

    auto parse_text = [](const std::string& text) {
        std::istringstream in(text);
        return parse_run_config(in, "inline");
    };
    CHECK_THROWS_AS(parse_text("no_such_key = 3\n"), ParseError);
    CHECK_THROWS_AS(parse_text("beta0 = fast\n"), ParseError);
    CHECK_THROWS_AS(parse_text("beta0\n"), ParseError);
    CHECK_THROWS_AS(parse_text("beta0 =\n"), ParseError);
    CHECK_THROWS_AS(parse_text("near = 5\nfar = 1\n"), ParseError);
    CHECK_THROWS_WITH_AS(parse_text("seed = 1\nbogus = 2\n"),
                         doctest::Contains("inline:2"), ParseError);
}

TEST_CASE("config save and load round-trip") {
    std::string dir = scratch_dir("config_rt");
    RunConfig cfg = tiny_config();
    cfg.radius = 0.125;
    cfg.scene_jitter = 0.002;
    std::string path = dir + "/round.cfg";
    save_run_config(cfg, path);
    RunConfig back = load_run_config(path);
    CHECK(back.schedule_steps == cfg.schedule_steps);
    CHECK(back.radius == cfg.radius);
    CHECK(back.scene_jitter == cfg.scene_jitter);
    CHECK(back.field.bg_posenc_levels == cfg.field.bg_posenc_levels);
    std::string again = dir + "/round2.cfg";
    save_run_config(back, again);
    CHECK(slurp(path) == slurp(again));
}

TEST_CASE("ablation names round-trip and map to the right switches") {
    for (Ablation mode : all_ablations()) CHECK(parse_ablation(ablation_name(mode)) == mode);
    CHECK_THROWS_AS(parse_ablation("full"), ParseError);
    CHECK(ablation_uses_dense(Ablation::none));
    CHECK(ablation_uses_background(Ablation::none));
    CHECK_FALSE(ablation_uses_dense(Ablation::no_diffusion));
    CHECK(ablation_uses_background(Ablation::no_diffusion));
    CHECK(ablation_uses_dense(Ablation::no_background));
    CHECK_FALSE(ablation_uses_background(Ablation::no_background));
    CHECK_FALSE(ablation_uses_dense(Ablation::neither));
    CHECK_FALSE(ablation_uses_background(Ablation::neither));
}

TEST_CASE("every 8th view is held out and the split partitions the views") {
    std::vector<std::size_t> test = test_view_indices(10);
    REQUIRE(test.size() == 2);
    CHECK(test[0] == 0);
    CHECK(test[1] == 8);
    CHECK(train_view_indices(10).size() == 8);

    std::vector<bool> seen(17, false);
    for (std::size_t i : train_view_indices(17)) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
        CHECK_FALSE(is_test_view(i));
    }
    for (std::size_t i : test_view_indices(17)) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
        CHECK(is_test_view(i));
    }
    for (bool b : seen) CHECK(b);
}

TEST_CASE("scene specs outside their declared bounds are rejected") {
    SyntheticSceneSpec spec = tiny_spec();
    CHECK_NOTHROW(check_scene_spec(spec));

    SyntheticSceneSpec far_sphere = spec;
    far_sphere.spheres[0].center = Vec3{far_sphere.bounds_radius, 0.0, 0.0};
    CHECK_THROWS_AS(check_scene_spec(far_sphere), ContractViolation);

    SyntheticSceneSpec bad_box = spec;
    bad_box.boxes.push_back({Vec3{0, 0, 0}, Vec3{1, 0, 1}, Vec3{0.5, 0.5, 0.5}});
    CHECK_THROWS_AS(check_scene_spec(bad_box), ContractViolation);

    SyntheticSceneSpec low_res = spec;
    low_res.width = 8;
    CHECK_THROWS_AS(check_scene_spec(low_res), ContractViolation);

    SyntheticSceneSpec empty = spec;
    empty.spheres.clear();
    empty.has_ground = false;
    CHECK_THROWS_AS(check_scene_spec(empty), ContractViolation);
}

TEST_CASE("analytic tracer reports hits, normals, and shading exactly") {
    SyntheticSceneSpec spec;
    spec.spheres.push_back({Vec3{0.0, 1.0, 0.0}, 1.0, Vec3{0.6, 0.2, 0.2}});
    spec.boxes.push_back({Vec3{2.0, 0.0, -0.5}, Vec3{3.0, 1.0, 0.5}, Vec3{0.2, 0.6, 0.2}});
    spec.ground_half_extent = 2.0;
    spec.bounds_radius = 4.0;
    spec.light_direction = Vec3{0.0, 1.0, 0.0};  // straight overhead

    SurfaceHit hit;
    render::Ray to_sphere{Vec3{0.0, 1.0, -3.0}, Vec3{0.0, 0.0, 1.0}};
    REQUIRE(trace_scene(spec, to_sphere, &hit));
    CHECK(hit.t == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(norm(hit.normal - Vec3{0.0, 0.0, -1.0}) < 1e-12);

    render::Ray to_box{Vec3{5.0, 0.5, 0.0}, Vec3{-1.0, 0.0, 0.0}};
    REQUIRE(trace_scene(spec, to_box, &hit));
    CHECK(hit.t == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(norm(hit.normal - Vec3{1.0, 0.0, 0.0}) < 1e-12);
    CHECK(hit.albedo.y == doctest::Approx(0.6));

    render::Ray to_ground{Vec3{1.5, 2.0, 0.0}, Vec3{0.0, -1.0, 0.0}};
    REQUIRE(trace_scene(spec, to_ground, &hit));
    CHECK(hit.normal.y == 1.0);
    // Ground lit from straight above: full diffuse term.
    Vec3 shaded = shade_ray(spec, to_ground);
    CHECK(shaded.x == doctest::Approx(spec.ground_albedo.x).epsilon(1e-12));

    render::Ray past_edge{Vec3{2.5, 2.0, 3.0}, Vec3{0.0, -1.0, 0.0}};
    CHECK_FALSE(trace_scene(spec, past_edge, nullptr));  // beyond the slab extent

    render::Ray upward{Vec3{0.0, 3.0, 0.0}, Vec3{0.0, 1.0, 0.0}};
    CHECK_FALSE(trace_scene(spec, upward, nullptr));
    Vec3 sky = shade_ray(spec, upward);   // zenith end of the gradient
    CHECK(sky.z == doctest::Approx(0.70));
}

TEST_CASE("orbit cameras circle the target and look straight at it") {
    SyntheticSceneSpec spec = tiny_spec();
    for (std::size_t i = 0; i < spec.n_views; ++i) {
        render::Camera cam = orbit_camera(spec, i);
        CHECK_NOTHROW(render::check_camera(cam));
        Vec3 to_target = normalized(spec.orbit_target - cam.position);
        CHECK(dot(to_target, cam.axis(2)) == doctest::Approx(1.0).epsilon(1e-12));
        // Image rows must grow toward world-down, never away from it.
        CHECK(dot(Vec3{0.0, -1.0, 0.0}, cam.axis(1)) > 0.1);
        double planar = std::hypot(cam.position.x - spec.orbit_target.x,
                                   cam.position.z - spec.orbit_target.z);
        CHECK(planar == doctest::Approx(spec.orbit_radius).epsilon(1e-12));
    }
    CHECK_THROWS_AS(orbit_camera(spec, spec.n_views), ContractViolation);
}

TEST_CASE("surface samples land on primitive surfaces in area proportion") {
    SyntheticSceneSpec spec = tiny_spec();
    Rng rng(99);
    PointCloud cloud = sample_surface(spec, 4000, rng);
    REQUIRE(cloud.size() == 4000);
    std::size_t on_sphere = 0;
    for (const Vec3& p : cloud.points) {
        CHECK(nearest_surface_distance(spec, p) < 1e-9);
        if (std::abs(norm(p - spec.spheres[0].center) - spec.spheres[0].radius) < 1e-9)
            ++on_sphere;
    }
    double sphere_area = 4.0 * 3.14159265358979323846 * 0.36;
    double ground_area = 4.0 * spec.ground_half_extent * spec.ground_half_extent;
    double expected = sphere_area / (sphere_area + ground_area);
    double got = static_cast<double>(on_sphere) / 4000.0;
    CHECK(std::abs(got - expected) < 0.05);
}

TEST_CASE("corruption keeps every point near the clean surface") {
    SyntheticSceneSpec spec = tiny_spec();
    Rng rng(3);
    PointCloud clean = sample_surface(spec, 400, rng);

    PointCloud untouched = corrupt_cloud(clean, 1.0, 0.0, 5);
    REQUIRE(untouched.size() == clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i)
        CHECK(norm(untouched[i] - clean[i]) == 0.0);

    double sigma = 0.05;
    PointCloud noisy = corrupt_cloud(clean, 0.5, sigma, 5);
    CHECK(noisy.size() == 200);
    spatial::SpatialIndex index = spatial::build_index(clean);
    double worst = 0.0;
    for (const Vec3& p : noisy.points)
        worst = std::max(worst, index.nearest(p, 1).distances[0]);
    CHECK(worst <= 3.0 * sigma + 1e-12);
    CHECK(worst > 0.0);  // noise actually applied
}

TEST_CASE("generated scenes are complete, loadable, and byte-reproducible") {
    SyntheticSceneSpec spec = tiny_spec();
    std::string a = scratch_dir("gen_a");
    std::string b = scratch_dir("gen_b");
    gen_scene(spec, 11, a);
    gen_scene(spec, 11, b);

    ScenePaths paths(a);
    CHECK(fs::exists(paths.cameras));
    for (std::size_t i = 0; i < spec.n_views; ++i) CHECK(fs::exists(paths.image(i)));
    CHECK(fs::exists(paths.surface));
    CHECK(fs::exists(paths.prior));

    Scene scene = load_scene(a);
    REQUIRE(scene.views.size() == spec.n_views);
    REQUIRE(scene.images.size() == spec.n_views);
    CHECK(scene.images[0].width == spec.width);
    CHECK(scene.surface.size() == spec.surface_points);
    CHECK(scene.prior.size() == 50);  // 200 * 0.25
    CHECK(scene.dense.empty());

    ScenePaths other(b);
    CHECK(slurp(paths.cameras) == slurp(other.cameras));
    CHECK(slurp(paths.surface) == slurp(other.surface));
    CHECK(slurp(paths.prior) == slurp(other.prior));
    for (std::size_t i = 0; i < spec.n_views; ++i)
        CHECK(slurp(paths.image(i)) == slurp(other.image(i)));

    // A different seed moves the sampled clouds.
    std::string c = scratch_dir("gen_c");
    gen_scene(spec, 12, c);
    CHECK(slurp(paths.prior) != slurp(ScenePaths(c).prior));

    // Every corrupted prior point stays within three sigma of the surface.
    spatial::SpatialIndex surface_index = spatial::build_index(scene.surface);
    for (const Vec3& p : scene.prior.points)
        CHECK(surface_index.nearest(p, 1).distances[0] <= 3.0 * spec.jitter_sigma + 1e-12);
}

TEST_CASE("stored images match a direct render of the same cameras") {
    SyntheticSceneSpec spec = tiny_spec();
    std::string dir = scratch_dir("gen_pixels");
    gen_scene(spec, 4, dir);
    Scene scene = load_scene(dir);
    render::Image direct = render_view(spec, scene.views[2].camera);
    // PNG storage quantizes to 8 bits; nothing else may differ.
    double worst = 0.0;
    for (std::size_t i = 0; i < direct.data.size(); ++i)
        worst = std::max(worst, std::abs(direct.data[i] - scene.images[2].data[i]));
    CHECK(worst <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("loading a scene with a missing image names the broken view") {
    SyntheticSceneSpec spec = tiny_spec();
    std::string dir = scratch_dir("gen_broken");
    gen_scene(spec, 4, dir);
    fs::remove(ScenePaths(dir).image(3));
    CHECK_THROWS_WITH_AS(load_scene(dir), doctest::Contains("view 3"), IoError);

    std::string empty = scratch_dir("gen_empty");
    CHECK_THROWS_AS(load_scene(empty), IoError);
}

TEST_CASE("pair preparation writes loadable pairs and a manifest") {
    const ProcessedScene& s = processed_scene();
    PreparePairsReport report = prepare_pairs(s.dir, s.cfg, 3, 4);
    CHECK(report.count == 4);
    std::string manifest = slurp(report.manifest_csv);
    CHECK(line_count(manifest) == 5);  // header + one row per pair
    CHECK(manifest.rfind("pair,stem,r1,r2,condition_points,extra_points\n", 0) == 0);
    for (std::size_t k = 0; k < 4; ++k) {
        geo::PairMeta meta;
        geo::CloudPair pair = geo::load_pair(
            (fs::path(ScenePaths(s.dir).pairs_dir()) / ("pair_00" + cat(k))).string(),
            &meta);
        CHECK(pair.condition.size() >= 1);
        CHECK(pair.full_target.size() == pair.condition.size() + pair.target_extra.size());
        CHECK(meta.r1 >= s.cfg.pair_r_min);
    }
}

TEST_CASE("stage 1 grows the prior by the upsample factor") {
    const ProcessedScene& s = processed_scene();
    const UpsampleReport& up = s.stage1.upsample;
    CHECK(up.prior_points == 50);
    CHECK(up.dense_points == 200);  // quadrupled
    CHECK(up.has_oracle);
    CHECK(std::isfinite(up.chamfer_prior));
    CHECK(std::isfinite(up.chamfer_dense));

    Scene scene = load_scene(s.dir);
    REQUIRE(scene.dense.size() == 200);
    // The prior rides along unchanged at the front of the dense cloud.
    for (std::size_t i = 0; i < scene.prior.size(); ++i)
        CHECK(norm(scene.dense[i] - scene.prior[i]) < 1e-9);
}

TEST_CASE("re-running upsampling from the checkpoint reproduces dense.ply") {
    const ProcessedScene& s = processed_scene();
    std::string before = slurp(ScenePaths(s.dir).dense);
    UpsampleReport again = upsample_stage(s.dir, s.cfg, 7);
    CHECK(again.dense_points == 200);
    CHECK(slurp(ScenePaths(s.dir).dense) == before);
}

TEST_CASE("stage 2 writes one checkpoint per mode without touching stage 1") {
    const ProcessedScene& s = processed_scene();
    ScenePaths paths(s.dir);
    std::string dense_before = slurp(paths.dense);
    std::string diffusion_before = slurp(paths.diffusion_checkpoint);

    for (Ablation mode : all_ablations()) {
        std::string name = ablation_name(mode);
        CHECK(fs::exists(paths.renderer_checkpoint(name)));
        std::string csv = slurp(paths.renderer_loss_csv(name));
        CHECK(line_count(csv) == s.cfg.renderer_steps + 1);
        CHECK(csv.rfind("step,loss\n", 0) == 0);
        ad::ParamSet params = ad::ParamSet::load(paths.renderer_checkpoint(name));
        render::RenderConfig rc = render::render_config_from_meta(params);
        CHECK(rc.use_background == ablation_uses_background(mode));
        CHECK(rc.radius > 0.0);
    }
    CHECK(slurp(paths.dense) == dense_before);
    CHECK(slurp(paths.diffusion_checkpoint) == diffusion_before);
}

TEST_CASE("evaluation scores every test view under every requested mode") {
    const ProcessedScene& s = processed_scene();
    std::vector<Ablation> modes(all_ablations().begin(), all_ablations().end());
    EvalReport report = run_eval(s.dir, s.cfg, 7, modes);
    REQUIRE(report.rows.size() == 4);  // one test view x four modes
    REQUIRE(report.means.size() == 4);
    for (const EvalRow& row : report.rows) {
        CHECK(row.view == 0);
        CHECK(std::isfinite(row.psnr));
        CHECK(row.psnr > 0.0);
        CHECK(row.ssim >= -1.0);
        CHECK(row.ssim <= 1.0);
    }

    ScenePaths paths(s.dir);
    std::string metrics = slurp(paths.metrics_csv);
    CHECK(line_count(metrics) == 5);
    CHECK(metrics.rfind("mode,view,psnr,ssim\n", 0) == 0);
    std::string means = slurp(paths.means_csv);
    CHECK(line_count(means) == 5);

    // Same config and seed: byte-identical tables.
    run_eval(s.dir, s.cfg, 7, modes);
    CHECK(slurp(paths.metrics_csv) == metrics);
    CHECK(slurp(paths.means_csv) == means);
}

TEST_CASE("evaluation without a trained mode names the missing checkpoint") {
    SyntheticSceneSpec spec = tiny_spec();
    std::string dir = scratch_dir("eval_missing");
    gen_scene(spec, 2, dir);
    RunConfig cfg = tiny_config();
    CHECK_THROWS_WITH_AS(run_eval(dir, cfg, 2, {Ablation::no_diffusion}),
                         doctest::Contains("no-diffusion"), IoError);
}

TEST_CASE("rendered test views land in a per-mode directory deterministically") {
    const ProcessedScene& s = processed_scene();
    std::vector<std::string> files = render_test_views(s.dir, s.cfg, 7, Ablation::neither);
    REQUIRE(files.size() == 1);
    CHECK(fs::exists(files[0]));
    std::string first = slurp(files[0]);
    render_test_views(s.dir, s.cfg, 7, Ablation::neither);
    CHECK(slurp(files[0]) == first);
}

TEST_CASE("benchmark reports sane throughput and a bounded retained fraction") {
    const ProcessedScene& s = processed_scene();
    BenchReport report = run_bench(s.dir, s.cfg, 7);
    CHECK(report.retained_fraction >= 0.0);
    CHECK(report.retained_fraction <= 1.0);
    CHECK(report.queries_per_s > 0.0);
    CHECK(report.rays_per_s_pruned > 0.0);
    CHECK(report.rays_per_s_unpruned > 0.0);
    std::string csv = slurp(ScenePaths(s.dir).bench_csv);
    CHECK(line_count(csv) == 2);
    CHECK(csv.rfind("retained_fraction,", 0) == 0);
}

TEST_CASE("widening the radius can only retain more samples") {
    const ProcessedScene& s = processed_scene();
    RunConfig narrow = s.cfg;
    narrow.radius = 0.05;
    RunConfig wide = s.cfg;
    wide.radius = 0.3;
    double f_narrow = run_bench(s.dir, narrow, 9).retained_fraction;
    double f_wide = run_bench(s.dir, wide, 9).retained_fraction;
    CHECK(f_narrow <= f_wide);
    CHECK(f_wide > 0.0);
}
