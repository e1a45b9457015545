// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/camera.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace pointfield::render {

void check_camera(const Camera& camera) {
    require(camera.fx > 0.0 && camera.fy > 0.0, "focal lengths must be positive");
    require(camera.width > 0 && camera.height > 0, "image size must be positive");
    // rows of a rotation matrix are orthonormal
    for (std::size_t i = 0; i < 3; ++i) {
        require(std::abs(norm(camera.rotation[i]) - 1.0) < 1e-6,
                "camera rotation row ", i, " is not unit length");
        for (std::size_t j = i + 1; j < 3; ++j) {
            require(std::abs(dot(camera.rotation[i], camera.rotation[j])) < 1e-6,
                    "camera rotation rows ", i, " and ", j, " not orthogonal");
        }
    }
}

Ray generate_ray(const Camera& camera, double px, double py) {
    require(px >= 0.0 && px < static_cast<double>(camera.width) &&
                py >= 0.0 && py < static_cast<double>(camera.height),
            "pixel (", px, ", ", py, ") outside a ", camera.width, "x",
            camera.height, " image");
    const Vec3 cam_dir{(px - camera.cx) / camera.fx, (py - camera.cy) / camera.fy,
                       1.0};
    return {camera.position, normalized(camera.to_world_dir(cam_dir))};
}

PixelCoord project(const Camera& camera, const Vec3& world) {
    const Vec3 cam = camera.to_camera(world);
    require(cam.z > 1e-12, "point is behind the camera");
    return {camera.fx * cam.x / cam.z + camera.cx,
            camera.fy * cam.y / cam.z + camera.cy};
}

std::vector<CameraView> load_cameras(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError(cat("cannot open cameras file ", path));
    }
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(cat(path, ": invalid JSON: ", e.what()));
    }
    if (!doc.is_array()) {
        throw ParseError(cat(path, ": expected a top-level array of views"));
    }
    std::vector<CameraView> views;
    views.reserve(doc.size());
    for (std::size_t v = 0; v < doc.size(); ++v) {
        const auto& entry = doc[v];
        try {
            CameraView view;
            Camera& c = view.camera;
            c.fx = entry.at("fx").get<double>();
            c.fy = entry.at("fy").get<double>();
            c.cx = entry.at("cx").get<double>();
            c.cy = entry.at("cy").get<double>();
            c.width = entry.at("width").get<std::size_t>();
            c.height = entry.at("height").get<std::size_t>();
            const auto& m = entry.at("camera_to_world");
            if (!m.is_array() || m.size() != 12) {
                throw ParseError(cat(path, ": view ", v,
                                     ": camera_to_world must hold 12 numbers "
                                     "(3x4, row-major)"));
            }
            for (std::size_t r = 0; r < 3; ++r) {
                for (std::size_t col = 0; col < 3; ++col) {
                    c.rotation[r][col] = m[r * 4 + col].get<double>();
                }
                c.position[r] = m[r * 4 + 3].get<double>();
            }
            view.image_path = entry.at("image").get<std::string>();
            check_camera(c);
            views.push_back(std::move(view));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(cat(path, ": view ", v, ": ", e.what()));
        }
    }
    return views;
}

void save_cameras(const std::vector<CameraView>& views, const std::string& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const CameraView& view : views) {
        const Camera& c = view.camera;
        nlohmann::json m = nlohmann::json::array();
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t col = 0; col < 3; ++col) {
                m.push_back(c.rotation[r][col]);
            }
            m.push_back(c.position[r]);
        }
        doc.push_back({{"fx", c.fx},
                       {"fy", c.fy},
                       {"cx", c.cx},
                       {"cy", c.cy},
                       {"width", c.width},
                       {"height", c.height},
                       {"camera_to_world", std::move(m)},
                       {"image", view.image_path}});
    }
    std::ofstream os(path);
    if (!os) {
        throw IoError(cat("cannot write cameras file ", path));
    }
    os << doc.dump(2) << "\n";
}

}  // namespace pointfield::render
