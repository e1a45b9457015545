// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pointfield/camera.hpp"
#include "pointfield/image.hpp"
#include "pointfield/point_cloud.hpp"

namespace pointfield {

// Canonical file layout inside a scene directory. Every stage reads and
// writes through these names, so directories produced by one command are
// directly consumable by the next.
struct ScenePaths {
    explicit ScenePaths(const std::string& dir);

    std::string root;
    std::string cameras;     // cameras.json
    std::string images_dir;  // images/
    std::string surface;     // surface.ply, analytic oracle cloud (optional)
    std::string prior;       // prior.ply, sparse input cloud
    std::string dense;       // dense.ply, upsampled cloud

    std::string diffusion_checkpoint;             // diffusion.ckpt
    std::string renderer_checkpoint(const std::string& mode) const;
    std::string renderer_loss_csv(const std::string& mode) const;
    std::string renders_dir(const std::string& mode) const;
    std::string pairs_dir() const;

    std::string metrics_csv;  // per-view evaluation rows
    std::string means_csv;    // per-mode aggregate rows
    std::string bench_csv;

    std::string image(std::size_t view_index) const;  // images/view_###.png
};

// A scene in memory: cameras with their ground-truth images, plus the point
// clouds the pipeline stages consume and produce. `images` is parallel to
// `views`. `surface` and `dense` stay empty when their files are absent.
struct Scene {
    std::vector<render::CameraView> views;
    std::vector<render::Image> images;
    geo::PointCloud prior;
    geo::PointCloud surface;
    geo::PointCloud dense;
};

// Held-out split: every 8th view (index % 8 == 0) is a test view, the rest
// train. The two index lists partition [0, n).
bool is_test_view(std::size_t view_index);
std::vector<std::size_t> train_view_indices(std::size_t n_views);
std::vector<std::size_t> test_view_indices(std::size_t n_views);

// Loads cameras, every referenced image (paths resolve relative to the scene
// directory), and whichever clouds exist. Throws IoError when the camera file
// or prior cloud is missing, or when a camera references a missing image, and
// ContractViolation when an image size disagrees with its camera.
Scene load_scene(const std::string& dir);

// Zero-padded "view_###" stem used for image and render filenames.
std::string view_stem(std::size_t view_index);

}  // namespace pointfield
