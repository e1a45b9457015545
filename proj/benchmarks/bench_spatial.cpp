// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the spatial side of rendering: index construction,
// neighbor queries, stratified ray sampling, and the payoff of evaluating the
// field only at retained samples.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "pointfield/field.hpp"
#include "pointfield/kdtree.hpp"
#include "pointfield/renderer.hpp"
#include "pointfield/synthetic.hpp"

using namespace pointfield;

namespace {

geo::PointCloud surface_cloud(std::size_t n) {
    synthetic::SyntheticSceneSpec spec = synthetic::toy_scene_spec();
    Rng rng(29);
    return synthetic::sample_surface(spec, n, rng);
}

render::RenderConfig bench_render_config(const spatial::SpatialIndex& index) {
    render::RenderConfig rc;
    rc.radius = 2.0 * spatial::mean_nn_spacing(index);
    rc.near = 0.5;
    rc.far = 8.0;
    rc.use_background = false;
    return rc;
}

std::vector<render::Ray> camera_rays(std::size_t n, std::uint64_t seed) {
    synthetic::SyntheticSceneSpec spec = synthetic::toy_scene_spec();
    render::Camera camera = synthetic::orbit_camera(spec, 1);
    Rng rng(seed);
    std::vector<render::Ray> rays;
    rays.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        rays.push_back(render::generate_ray(
            camera, static_cast<double>(rng.below(camera.width)) + 0.5,
            static_cast<double>(rng.below(camera.height)) + 0.5));
    return rays;
}

// The cost baseline pruning avoids: every stratified sample kept, each with
// its K nearest neighbors.
render::RaySamples keep_all_samples(const render::RaySamples& samples,
                                    const spatial::SpatialIndex& index, std::size_t k) {
    render::RaySamples out = samples;
    out.retained.clear();
    out.retained_deltas.clear();
    double gap_sum = 0.0;
    for (std::size_t i = 0; i < out.foreground.size(); ++i) {
        out.foreground[i].neighbors = index.nearest(out.foreground[i].position, k);
        out.retained.push_back(i);
        if (i + 1 < out.foreground.size()) {
            double gap = out.foreground[i + 1].t_along_ray - out.foreground[i].t_along_ray;
            out.retained_deltas.push_back(gap);
            gap_sum += gap;
        }
    }
    std::size_t n = out.foreground.size();
    out.retained_deltas.push_back(n > 1 ? gap_sum / static_cast<double>(n - 1) : 1.0);
    return out;
}

void BM_IndexBuild(benchmark::State& state) {
    geo::PointCloud cloud = surface_cloud(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        spatial::SpatialIndex index = spatial::build_index(cloud);
        benchmark::DoNotOptimize(index.points().size());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IndexBuild)->Arg(1024)->Arg(8192)->Arg(32768);

void BM_RadiusQuery(benchmark::State& state) {
    geo::PointCloud cloud = surface_cloud(static_cast<std::size_t>(state.range(0)));
    spatial::SpatialIndex index = spatial::build_index(cloud);
    double radius = 2.0 * spatial::mean_nn_spacing(index);
    Rng rng(7);
    std::vector<geo::Vec3> queries;
    for (std::size_t i = 0; i < 1024; ++i)
        queries.push_back(cloud[rng.below(cloud.size())] +
                          geo::Vec3{rng.normal(), rng.normal(), rng.normal()} * radius);
    std::size_t cursor = 0;
    for (auto _ : state) {
        const geo::Vec3& q = queries[cursor++ & 1023];
        benchmark::DoNotOptimize(index.radius_neighbors(q, radius, 8).indices.size());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RadiusQuery)->Arg(1024)->Arg(8192)->Arg(32768);

void BM_SampleRay(benchmark::State& state) {
    geo::PointCloud cloud = surface_cloud(8192);
    spatial::SpatialIndex index = spatial::build_index(cloud);
    render::RenderConfig rc = bench_render_config(index);
    std::vector<render::Ray> rays = camera_rays(256, 11);
    std::size_t cursor = 0;
    for (auto _ : state) {
        render::RaySamples s = render::sample_ray(rays[cursor & 255], rc, index, cursor);
        ++cursor;
        benchmark::DoNotOptimize(s.retained.size());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SampleRay);

// Field evaluation over a 32-ray batch with pruning on (samples near the
// cloud only) and off (all stratified samples). The gap between the two is
// what the retained-sample reduction buys.
void foreground_eval(benchmark::State& state, bool pruned) {
    geo::PointCloud cloud = surface_cloud(8192);
    spatial::SpatialIndex index = spatial::build_index(cloud);
    render::RenderConfig rc = bench_render_config(index);
    render::FieldConfig arch;
    ad::ParamSet params = render::make_field_params(arch, 13);
    std::vector<render::Ray> rays = camera_rays(32, 17);
    std::vector<render::RaySamples> samples;
    for (std::size_t i = 0; i < rays.size(); ++i) {
        render::RaySamples s = render::sample_ray(rays[i], rc, index, 100 + i);
        samples.push_back(pruned ? s : keep_all_samples(s, index, rc.neighbors));
    }
    for (auto _ : state) {
        ad::Tensor rgb = render::predict_rgb(params, arch, rc, rays, samples, index);
        benchmark::DoNotOptimize(rgb.at(0, 0));
    }
    state.SetItemsProcessed(state.iterations() * rays.size());
}
void BM_ForegroundPruned(benchmark::State& state) { foreground_eval(state, true); }
void BM_ForegroundUnpruned(benchmark::State& state) { foreground_eval(state, false); }
BENCHMARK(BM_ForegroundPruned);
BENCHMARK(BM_ForegroundUnpruned);

}  // namespace

BENCHMARK_MAIN();
