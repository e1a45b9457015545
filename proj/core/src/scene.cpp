// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/scene.hpp"

#include <filesystem>

#include "pointfield/common.hpp"
#include "pointfield/ply.hpp"

namespace pointfield {

namespace fs = std::filesystem;

ScenePaths::ScenePaths(const std::string& dir)
    : root(dir),
      cameras((fs::path(dir) / "cameras.json").string()),
      images_dir((fs::path(dir) / "images").string()),
      surface((fs::path(dir) / "surface.ply").string()),
      prior((fs::path(dir) / "prior.ply").string()),
      dense((fs::path(dir) / "dense.ply").string()),
      diffusion_checkpoint((fs::path(dir) / "diffusion.ckpt").string()),
      metrics_csv((fs::path(dir) / "metrics.csv").string()),
      means_csv((fs::path(dir) / "means.csv").string()),
      bench_csv((fs::path(dir) / "bench.csv").string()) {}

std::string ScenePaths::renderer_checkpoint(const std::string& mode) const {
    return (fs::path(root) / ("renderer-" + mode + ".ckpt")).string();
}

std::string ScenePaths::renderer_loss_csv(const std::string& mode) const {
    return (fs::path(root) / ("loss-" + mode + ".csv")).string();
}

std::string ScenePaths::renders_dir(const std::string& mode) const {
    return (fs::path(root) / "renders" / mode).string();
}

std::string ScenePaths::pairs_dir() const { return (fs::path(root) / "pairs").string(); }

std::string ScenePaths::image(std::size_t view_index) const {
    return (fs::path(images_dir) / (view_stem(view_index) + ".png")).string();
}

std::string view_stem(std::size_t view_index) {
    std::string digits = cat(view_index);
    while (digits.size() < 3) digits.insert(digits.begin(), '0');
    return "view_" + digits;
}

bool is_test_view(std::size_t view_index) { return view_index % 8 == 0; }

std::vector<std::size_t> train_view_indices(std::size_t n_views) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_views; ++i)
        if (!is_test_view(i)) out.push_back(i);
    return out;
}

std::vector<std::size_t> test_view_indices(std::size_t n_views) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_views; ++i)
        if (is_test_view(i)) out.push_back(i);
    return out;
}

Scene load_scene(const std::string& dir) {
    ScenePaths paths(dir);
    Scene scene;
    scene.views = render::load_cameras(paths.cameras);
    scene.images.reserve(scene.views.size());
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
        const render::CameraView& view = scene.views[i];
        fs::path image_path(view.image_path);
        if (image_path.is_relative()) image_path = fs::path(dir) / image_path;
        if (!fs::exists(image_path))
            throw IoError(cat("view ", i, " references missing image '",
                              image_path.string(), "'"));
        render::Image image = render::load_png(image_path.string());
        require(image.width == view.camera.width && image.height == view.camera.height,
                "view ", i, " image is ", image.width, "x", image.height,
                " but its camera expects ", view.camera.width, "x", view.camera.height);
        scene.images.push_back(std::move(image));
    }
    if (!fs::exists(paths.prior))
        throw IoError(cat("scene '", dir, "' has no prior cloud at '", paths.prior, "'"));
    scene.prior = geo::load_ply(paths.prior);
    if (fs::exists(paths.surface)) scene.surface = geo::load_ply(paths.surface);
    if (fs::exists(paths.dense)) scene.dense = geo::load_ply(paths.dense);
    return scene;
}

}  // namespace pointfield
