// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "pointfield/cloud_pairs.hpp"
#include "pointfield/common.hpp"
#include "pointfield/ply.hpp"
#include "pointfield/scene.hpp"

namespace pointfield::synthetic {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kAmbient = 0.25;
constexpr double kRayEpsilon = 1e-9;

const Vec3 kSkyHorizon{0.72, 0.78, 0.88};
const Vec3 kSkyZenith{0.28, 0.42, 0.70};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

Vec3 mix(const Vec3& a, const Vec3& b, double t) { return a * (1.0 - t) + b * t; }

double farthest_box_corner(const BoxPrimitive& box) {
    double worst = 0.0;
    for (int ix = 0; ix < 2; ++ix)
        for (int iy = 0; iy < 2; ++iy)
            for (int iz = 0; iz < 2; ++iz) {
                Vec3 corner{ix ? box.hi.x : box.lo.x, iy ? box.hi.y : box.lo.y,
                            iz ? box.hi.z : box.lo.z};
                worst = std::max(worst, norm(corner));
            }
    return worst;
}

void check_albedo(const Vec3& albedo, const char* what) {
    require(albedo.x >= 0.0 && albedo.x <= 1.0 && albedo.y >= 0.0 && albedo.y <= 1.0 &&
                albedo.z >= 0.0 && albedo.z <= 1.0,
            what, " albedo components must lie in [0, 1]");
}

bool hit_sphere(const SpherePrimitive& s, const render::Ray& ray, double* t_out,
                Vec3* normal_out) {
    Vec3 oc = ray.origin - s.center;
    // Direction is unit length, so a = 1.
    double b = 2.0 * dot(oc, ray.direction);
    double c = norm2(oc) - s.radius * s.radius;
    double disc = b * b - 4.0 * c;
    if (disc < 0.0) return false;
    double root = std::sqrt(disc);
    double t = (-b - root) / 2.0;
    if (t <= kRayEpsilon) t = (-b + root) / 2.0;
    if (t <= kRayEpsilon) return false;
    *t_out = t;
    Vec3 p = ray.origin + ray.direction * t;
    *normal_out = (p - s.center) / s.radius;
    return true;
}

bool hit_box(const BoxPrimitive& box, const render::Ray& ray, double* t_out,
             Vec3* normal_out) {
    // Slab test, remembering which axis admitted the entry point.
    double t_enter = -std::numeric_limits<double>::infinity();
    double t_exit = std::numeric_limits<double>::infinity();
    int enter_axis = -1;
    double enter_sign = 0.0;
    const double o[3] = {ray.origin.x, ray.origin.y, ray.origin.z};
    const double d[3] = {ray.direction.x, ray.direction.y, ray.direction.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int axis = 0; axis < 3; ++axis) {
        if (d[axis] == 0.0) {
            if (o[axis] < lo[axis] || o[axis] > hi[axis]) return false;
            continue;
        }
        double t0 = (lo[axis] - o[axis]) / d[axis];
        double t1 = (hi[axis] - o[axis]) / d[axis];
        double sign = -1.0;  // normal at the lo face points toward -axis
        if (t0 > t1) {
            std::swap(t0, t1);
            sign = 1.0;
        }
        if (t0 > t_enter) {
            t_enter = t0;
            enter_axis = axis;
            enter_sign = sign;
        }
        t_exit = std::min(t_exit, t1);
        if (t_enter > t_exit) return false;
    }
    if (t_enter <= kRayEpsilon || enter_axis < 0) return false;  // inside or behind
    *t_out = t_enter;
    Vec3 n{0.0, 0.0, 0.0};
    if (enter_axis == 0) n.x = enter_sign;
    if (enter_axis == 1) n.y = enter_sign;
    if (enter_axis == 2) n.z = enter_sign;
    *normal_out = n;
    return true;
}

bool hit_ground(const SyntheticSceneSpec& spec, const render::Ray& ray, double* t_out,
                Vec3* normal_out) {
    if (ray.direction.y == 0.0) return false;
    double t = (spec.ground_height - ray.origin.y) / ray.direction.y;
    if (t <= kRayEpsilon) return false;
    Vec3 p = ray.origin + ray.direction * t;
    double h = spec.ground_half_extent;
    if (std::abs(p.x) > h || std::abs(p.z) > h) return false;
    *t_out = t;
    *normal_out = Vec3{0.0, ray.origin.y >= spec.ground_height ? 1.0 : -1.0, 0.0};
    return true;
}

}  // namespace

void check_scene_spec(const SyntheticSceneSpec& spec) {
    require(!spec.spheres.empty() || !spec.boxes.empty() || spec.has_ground,
            "scene spec lists no primitives");
    require(spec.width >= 16 && spec.height >= 16, "resolution must be at least 16x16");
    require(spec.n_views >= 2, "need at least 2 views");
    require(spec.orbit_radius > 0.0, "orbit_radius must be positive");
    require(spec.focal > 0.0, "focal must be positive");
    require(norm(spec.light_direction) > 0.0, "light_direction must be nonzero");
    require(spec.bounds_radius > 0.0, "bounds_radius must be positive");
    require(spec.surface_points >= 10, "surface_points must be at least 10");
    require(spec.subsample > 0.0 && spec.subsample <= 1.0, "subsample must lie in (0, 1]");
    require(spec.jitter_sigma >= 0.0 && std::isfinite(spec.jitter_sigma),
            "jitter_sigma must be finite and nonnegative");
    for (std::size_t i = 0; i < spec.spheres.size(); ++i) {
        const SpherePrimitive& s = spec.spheres[i];
        require(s.radius > 0.0, "sphere ", i, " has nonpositive radius");
        check_albedo(s.albedo, "sphere");
        require(norm(s.center) + s.radius <= spec.bounds_radius, "sphere ", i,
                " extends outside the scene bounds");
    }
    for (std::size_t i = 0; i < spec.boxes.size(); ++i) {
        const BoxPrimitive& b = spec.boxes[i];
        require(b.lo.x < b.hi.x && b.lo.y < b.hi.y && b.lo.z < b.hi.z, "box ", i,
                " has a nonpositive extent");
        check_albedo(b.albedo, "box");
        require(farthest_box_corner(b) <= spec.bounds_radius, "box ", i,
                " extends outside the scene bounds");
    }
    if (spec.has_ground) {
        require(spec.ground_half_extent > 0.0, "ground_half_extent must be positive");
        check_albedo(spec.ground_albedo, "ground");
        double corner = std::hypot(spec.ground_half_extent, spec.ground_half_extent);
        require(std::hypot(corner, spec.ground_height) <= spec.bounds_radius,
                "ground plane extends outside the scene bounds");
    }
}

bool trace_scene(const SyntheticSceneSpec& spec, const render::Ray& ray, SurfaceHit* hit) {
    double best_t = std::numeric_limits<double>::infinity();
    Vec3 best_normal, best_albedo;
    double t;
    Vec3 n;
    for (const SpherePrimitive& s : spec.spheres)
        if (hit_sphere(s, ray, &t, &n) && t < best_t) {
            best_t = t;
            best_normal = n;
            best_albedo = s.albedo;
        }
    for (const BoxPrimitive& b : spec.boxes)
        if (hit_box(b, ray, &t, &n) && t < best_t) {
            best_t = t;
            best_normal = n;
            best_albedo = b.albedo;
        }
    if (spec.has_ground && hit_ground(spec, ray, &t, &n) && t < best_t) {
        best_t = t;
        best_normal = n;
        best_albedo = spec.ground_albedo;
    }
    if (!std::isfinite(best_t)) return false;
    if (hit != nullptr) {
        hit->t = best_t;
        hit->point = ray.origin + ray.direction * best_t;
        hit->normal = best_normal;
        hit->albedo = best_albedo;
    }
    return true;
}

Vec3 shade_ray(const SyntheticSceneSpec& spec, const render::Ray& ray) {
    SurfaceHit hit;
    if (!trace_scene(spec, ray, &hit)) {
        double t = clamp01(0.5 * (ray.direction.y + 1.0));
        return mix(kSkyHorizon, kSkyZenith, t);
    }
    Vec3 light = normalized(spec.light_direction);
    double diffuse = std::max(0.0, dot(hit.normal, light));
    return hit.albedo * (kAmbient + (1.0 - kAmbient) * diffuse);
}

render::Camera orbit_camera(const SyntheticSceneSpec& spec, std::size_t index) {
    require(index < spec.n_views, "orbit index ", index, " out of range for ",
            spec.n_views, " views");
    double angle = 2.0 * kPi * static_cast<double>(index) / static_cast<double>(spec.n_views);
    Vec3 eye = spec.orbit_target + Vec3{spec.orbit_radius * std::cos(angle),
                                        spec.orbit_height,
                                        spec.orbit_radius * std::sin(angle)};
    Vec3 forward = normalized(spec.orbit_target - eye);
    // Image rows grow downward, so the camera y axis is world-down projected
    // off the optical axis; x follows as down x forward to keep the frame
    // right-handed.
    Vec3 down{0.0, -1.0, 0.0};
    Vec3 cam_y = normalized(down - forward * dot(down, forward));
    Vec3 cam_x = cross(cam_y, forward);

    render::Camera cam;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.fx = cam.fy = spec.focal * static_cast<double>(spec.width);
    cam.cx = 0.5 * static_cast<double>(spec.width);
    cam.cy = 0.5 * static_cast<double>(spec.height);
    cam.position = eye;
    cam.rotation[0] = Vec3{cam_x.x, cam_y.x, forward.x};
    cam.rotation[1] = Vec3{cam_x.y, cam_y.y, forward.y};
    cam.rotation[2] = Vec3{cam_x.z, cam_y.z, forward.z};
    render::check_camera(cam);
    return cam;
}

Image render_view(const SyntheticSceneSpec& spec, const render::Camera& camera) {
    Image image = Image::filled(camera.width, camera.height, 0.0, 0.0, 0.0);
    for (std::size_t y = 0; y < camera.height; ++y)
        for (std::size_t x = 0; x < camera.width; ++x) {
            render::Ray ray = render::generate_ray(
                camera, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
            Vec3 color = shade_ray(spec, ray);
            image.at(x, y, 0) = color.x;
            image.at(x, y, 1) = color.y;
            image.at(x, y, 2) = color.z;
        }
    return image;
}

PointCloud sample_surface(const SyntheticSceneSpec& spec, std::size_t n, Rng& rng) {
    check_scene_spec(spec);
    // One entry per primitive: cumulative area first, then a sampler index.
    struct Patch {
        double cumulative;
        int kind;  // 0 sphere, 1 box, 2 ground
        std::size_t index;
    };
    std::vector<Patch> patches;
    double total = 0.0;
    for (std::size_t i = 0; i < spec.spheres.size(); ++i) {
        total += 4.0 * kPi * spec.spheres[i].radius * spec.spheres[i].radius;
        patches.push_back({total, 0, i});
    }
    for (std::size_t i = 0; i < spec.boxes.size(); ++i) {
        Vec3 e = spec.boxes[i].hi - spec.boxes[i].lo;
        total += 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
        patches.push_back({total, 1, i});
    }
    if (spec.has_ground) {
        double side = 2.0 * spec.ground_half_extent;
        total += side * side;
        patches.push_back({total, 2, 0});
    }
    require(total > 0.0, "scene has zero surface area");

    PointCloud cloud;
    cloud.points.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        double u = rng.uniform() * total;
        const Patch* chosen = &patches.back();
        for (const Patch& p : patches)
            if (u < p.cumulative) {
                chosen = &p;
                break;
            }
        if (chosen->kind == 0) {
            const SpherePrimitive& s = spec.spheres[chosen->index];
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            while (norm(dir) < 1e-12) dir = Vec3{rng.normal(), rng.normal(), rng.normal()};
            cloud.points.push_back(s.center + normalized(dir) * s.radius);
        } else if (chosen->kind == 1) {
            const BoxPrimitive& b = spec.boxes[chosen->index];
            Vec3 e = b.hi - b.lo;
            // Face picked by area: +-x, +-y, +-z in that order.
            double areas[3] = {e.y * e.z, e.z * e.x, e.x * e.y};
            double face_total = 2.0 * (areas[0] + areas[1] + areas[2]);
            double v = rng.uniform() * face_total;
            int axis = 0;
            double acc = 0.0;
            double side = 0.0;
            for (axis = 0; axis < 3; ++axis) {
                if (v < acc + 2.0 * areas[axis]) {
                    side = (v - acc < areas[axis]) ? 0.0 : 1.0;
                    break;
                }
                acc += 2.0 * areas[axis];
            }
            if (axis == 3) {
                axis = 2;
                side = 1.0;
            }
            double a = rng.uniform();
            double bcoord = rng.uniform();
            Vec3 p;
            if (axis == 0)
                p = Vec3{side ? b.hi.x : b.lo.x, b.lo.y + a * e.y, b.lo.z + bcoord * e.z};
            else if (axis == 1)
                p = Vec3{b.lo.x + a * e.x, side ? b.hi.y : b.lo.y, b.lo.z + bcoord * e.z};
            else
                p = Vec3{b.lo.x + a * e.x, b.lo.y + bcoord * e.y, side ? b.hi.z : b.lo.z};
            cloud.points.push_back(p);
        } else {
            double h = spec.ground_half_extent;
            cloud.points.push_back(Vec3{rng.uniform(-h, h), spec.ground_height,
                                        rng.uniform(-h, h)});
        }
    }
    return cloud;
}

PointCloud corrupt_cloud(const PointCloud& cloud, double subsample, double sigma,
                         std::uint64_t seed) {
    require(subsample > 0.0 && subsample <= 1.0, "subsample must lie in (0, 1]");
    require(sigma >= 0.0 && std::isfinite(sigma), "sigma must be finite and nonnegative");
    PointCloud prior = geo::random_downsample(cloud, subsample, Rng::derive(seed, 1));
    if (sigma > 0.0) {
        Rng rng(Rng::derive(seed, 2));
        for (Vec3& p : prior.points) {
            Vec3 noise;
            do {
                noise = Vec3{rng.normal(), rng.normal(), rng.normal()} * sigma;
            } while (norm(noise) > 3.0 * sigma);
            p = p + noise;
        }
    }
    return prior;
}

void gen_scene(const SyntheticSceneSpec& spec, std::uint64_t seed, const std::string& dir) {
    check_scene_spec(spec);
    ScenePaths paths(dir);
    fs::create_directories(paths.images_dir);

    std::vector<render::CameraView> views;
    views.reserve(spec.n_views);
    for (std::size_t i = 0; i < spec.n_views; ++i) {
        render::Camera camera = orbit_camera(spec, i);
        Image image = render_view(spec, camera);
        save_png(image, paths.image(i));
        // Stored relative so the scene directory can be moved wholesale.
        views.push_back({camera, "images/" + view_stem(i) + ".png"});
    }
    render::save_cameras(views, paths.cameras);

    Rng surface_rng(Rng::derive(seed, 10));
    PointCloud surface = sample_surface(spec, spec.surface_points, surface_rng);
    geo::save_ply(surface, paths.surface);

    PointCloud prior =
        corrupt_cloud(surface, spec.subsample, spec.jitter_sigma, Rng::derive(seed, 11));
    geo::save_ply(prior, paths.prior);
}

SyntheticSceneSpec toy_scene_spec() {
    SyntheticSceneSpec spec;
    spec.spheres.push_back({Vec3{0.0, 0.6, 0.0}, 0.6, Vec3{0.82, 0.33, 0.26}});
    spec.has_ground = true;
    return spec;
}

}  // namespace pointfield::synthetic
