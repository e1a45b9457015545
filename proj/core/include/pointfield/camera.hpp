// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "pointfield/point_cloud.hpp"

namespace pointfield::render {

using geo::Vec3;

// Pinhole camera, OpenCV axis convention: x right, y down, z forward (the
// optical axis). The pose maps camera coordinates to world coordinates.
struct Camera {
    double fx = 0.0, fy = 0.0;  // focal lengths in pixels
    double cx = 0.0, cy = 0.0;  // principal point in pixels
    std::size_t width = 0, height = 0;
    std::array<Vec3, 3> rotation;  // camera-to-world, rows of the 3x3 matrix
    Vec3 position;                 // camera center in world coordinates

    // Column of the rotation matrix = image of a camera-frame axis.
    Vec3 axis(std::size_t col) const {
        return {rotation[0][col], rotation[1][col], rotation[2][col]};
    }
    Vec3 to_world_dir(const Vec3& v) const {
        return v.x * axis(0) + v.y * axis(1) + v.z * axis(2);
    }
    Vec3 to_camera(const Vec3& world) const {
        const Vec3 d = world - position;
        return {dot(axis(0), d), dot(axis(1), d), dot(axis(2), d)};
    }
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

// Validates intrinsics and rotation orthonormality (within 1e-6).
void check_camera(const Camera& camera);

// Ray through the continuous pixel position (px, py); integer pixel loops
// should pass the pixel center, e.g. x + 0.5.
Ray generate_ray(const Camera& camera, double px, double py);

// World point -> continuous pixel position; fails on points at or behind the
// camera plane.
struct PixelCoord {
    double x = 0.0;
    double y = 0.0;
};
PixelCoord project(const Camera& camera, const Vec3& world);

// One calibrated view: camera plus the path of its image file, as stored in
// the per-scene cameras JSON.
struct CameraView {
    Camera camera;
    std::string image_path;
};

std::vector<CameraView> load_cameras(const std::string& path);
void save_cameras(const std::vector<CameraView>& views, const std::string& path);

}  // namespace pointfield::render
