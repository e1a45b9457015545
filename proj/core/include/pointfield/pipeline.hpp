// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pointfield/config.hpp"
#include "pointfield/diffusion.hpp"
#include "pointfield/renderer.hpp"
#include "pointfield/scene.hpp"

namespace pointfield::pipeline {

// Which model inputs an evaluation mode removes. The full model upsamples the
// prior and composites a learned background; each ablation switches one (or
// both) of those off.
enum class Ablation {
    none,           // full model: dense cloud + background field
    no_diffusion,   // renderer fed the raw prior cloud
    no_background,  // background feature forced to zero
    neither,        // both removals at once
};

const std::array<Ablation, 4>& all_ablations();
std::string ablation_name(Ablation mode);            // "none", "no-diffusion", ...
Ablation parse_ablation(const std::string& name);    // throws ParseError
bool ablation_uses_dense(Ablation mode);             // upsampled cloud vs raw prior
bool ablation_uses_background(Ablation mode);

// Writes drawn nested-downsample training pairs (plus a manifest CSV) under
// <scene>/pairs for inspection. Pairs are drawn exactly as training draws
// them: from the normalized prior at random retention levels.
struct PreparePairsReport {
    std::size_t count = 0;
    std::string manifest_csv;
};
PreparePairsReport prepare_pairs(const std::string& scene_dir, const RunConfig& config,
                                 std::uint64_t seed, std::size_t count);

// Stage-1 training half: fits the point denoiser to nested-downsample pairs
// of the scene's prior cloud and writes <scene>/diffusion.ckpt.
void train_diffusion_stage(const std::string& scene_dir, const RunConfig& config,
                           std::uint64_t seed,
                           diffusion::TrainDiffusionReport* report = nullptr);

// Stage-1 sampling half: loads the diffusion checkpoint and grows the prior
// by the configured factor, writing <scene>/dense.ply with the prior points
// first. Chamfer numbers are filled in when the analytic surface oracle is
// present (NaN otherwise).
struct UpsampleReport {
    std::size_t prior_points = 0;
    std::size_t dense_points = 0;
    double chamfer_prior = 0.0;  // prior vs surface oracle
    double chamfer_dense = 0.0;  // dense vs surface oracle
    bool has_oracle = false;
};
UpsampleReport upsample_stage(const std::string& scene_dir, const RunConfig& config,
                              std::uint64_t seed);

// Both stage-1 halves back to back.
struct Stage1Report {
    diffusion::TrainDiffusionReport training;
    UpsampleReport upsample;
};
Stage1Report run_stage1(const std::string& scene_dir, const RunConfig& config,
                        std::uint64_t seed);

// Stage 2: trains the renderer for one mode on the training views and writes
// <scene>/renderer-<mode>.ckpt plus a step,loss CSV. The point cloud and
// background switch follow the mode; everything the renderer needs at test
// time (widths, radius, sample counts) is embedded in the checkpoint.
struct Stage2Report {
    render::TrainRendererReport training;
    std::string checkpoint;
    std::string loss_csv;
    double radius = 0.0;  // resolved value actually used
};
Stage2Report run_stage2(const std::string& scene_dir, const RunConfig& config,
                        std::uint64_t seed, Ablation mode);

// Renders the held-out test views for one mode from its checkpoint into
// <scene>/renders/<mode>/. Returns the written image paths.
std::vector<std::string> render_test_views(const std::string& scene_dir,
                                           const RunConfig& config, std::uint64_t seed,
                                           Ablation mode);

// Renders every test view under every requested mode and scores it against
// ground truth. Writes per-view rows to <scene>/metrics.csv and per-mode
// means to <scene>/means.csv. A mode whose checkpoint is missing raises
// IoError naming the mode.
struct EvalRow {
    std::string mode;
    std::size_t view = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};
struct ModeMeans {
    std::string mode;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};
struct EvalReport {
    std::vector<EvalRow> rows;    // |test views| x |modes| entries
    std::vector<ModeMeans> means; // one entry per mode, in request order
};
EvalReport run_eval(const std::string& scene_dir, const RunConfig& config,
                    std::uint64_t seed, const std::vector<Ablation>& modes);

// Measures what sample pruning buys on this scene: the fraction of stratified
// foreground samples that survive the neighborhood test, raw neighbor-query
// throughput, and foreground rendering throughput with and without pruning
// (background disabled for both so the comparison isolates the foreground
// path). Writes a one-row CSV to <scene>/bench.csv.
struct BenchReport {
    double retained_fraction = 0.0;
    double queries_per_s = 0.0;
    double rays_per_s_pruned = 0.0;
    double rays_per_s_unpruned = 0.0;
    std::size_t n_rays = 0;
    std::size_t n_queries = 0;
};
BenchReport run_bench(const std::string& scene_dir, const RunConfig& config,
                      std::uint64_t seed);

}  // namespace pointfield::pipeline
