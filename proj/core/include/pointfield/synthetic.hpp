// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pointfield/camera.hpp"
#include "pointfield/image.hpp"
#include "pointfield/point_cloud.hpp"
#include "pointfield/rng.hpp"

namespace pointfield::synthetic {

using geo::PointCloud;
using geo::Vec3;
using render::Image;

struct SpherePrimitive {
    Vec3 center;
    double radius = 1.0;
    Vec3 albedo{0.8, 0.8, 0.8};
};

struct BoxPrimitive {
    Vec3 lo;  // componentwise minimum corner
    Vec3 hi;
    Vec3 albedo{0.8, 0.8, 0.8};
};

// A fully analytic scene: Lambertian primitives lit by one directional light
// under a graded sky. Everything downstream needs — ground-truth images, an
// exact surface cloud, a corrupted prior — derives from this description.
struct SyntheticSceneSpec {
    std::vector<SpherePrimitive> spheres;
    std::vector<BoxPrimitive> boxes;

    bool has_ground = true;  // finite square slab at y = ground_height
    double ground_height = 0.0;
    double ground_half_extent = 2.2;
    Vec3 ground_albedo{0.46, 0.42, 0.36};

    Vec3 light_direction{-0.4, 1.0, -0.6};  // toward the light; normalized at use

    std::size_t n_views = 10;  // cameras on a circular orbit, all facing the target
    double orbit_radius = 3.0;
    double orbit_height = 1.4;
    Vec3 orbit_target{0.0, 0.4, 0.0};
    double focal = 1.0;  // fx = fy = focal * width

    std::size_t width = 64;
    std::size_t height = 64;

    std::size_t surface_points = 4096;  // dense analytic cloud size
    double subsample = 0.25;            // fraction of surface points kept as the prior
    double jitter_sigma = 0.01;         // per-axis corruption noise, clipped at 3 sigma

    double bounds_radius = 4.0;  // every primitive must fit in this ball
};

// Rejects empty scenes, resolutions below 16x16, nonpositive radii or
// degenerate boxes, and any primitive extending outside bounds_radius.
void check_scene_spec(const SyntheticSceneSpec& spec);

// Nearest intersection along a ray, if any.
struct SurfaceHit {
    double t = 0.0;
    Vec3 point;
    Vec3 normal;  // unit, facing the ray origin
    Vec3 albedo;
};
bool trace_scene(const SyntheticSceneSpec& spec, const render::Ray& ray, SurfaceHit* hit);

// Color seen along a ray: shaded primitive on a hit, sky gradient otherwise.
Vec3 shade_ray(const SyntheticSceneSpec& spec, const render::Ray& ray);

// Camera `index` on the orbit (angle 2 pi index / n_views), looking at the
// orbit target with the world +y axis up.
render::Camera orbit_camera(const SyntheticSceneSpec& spec, std::size_t index);

// Ray-traces one view at pixel centers.
Image render_view(const SyntheticSceneSpec& spec, const render::Camera& camera);

// `n` points distributed over the primitive surfaces in proportion to area.
PointCloud sample_surface(const SyntheticSceneSpec& spec, std::size_t n, Rng& rng);

// Keeps a `subsample` fraction of the cloud, then perturbs each survivor with
// isotropic Gaussian noise redrawn until its magnitude is within 3 sigma, so
// every output point stays within 3 sigma of a true surface point.
PointCloud corrupt_cloud(const PointCloud& cloud, double subsample, double sigma,
                         std::uint64_t seed);

// Writes a complete scene directory: ground-truth images, the camera file,
// surface.ply, and prior.ply. Deterministic: the same spec and seed produce
// byte-identical files.
void gen_scene(const SyntheticSceneSpec& spec, std::uint64_t seed, const std::string& dir);

// The default demonstration scene: one matte sphere resting on a finite
// ground slab. view/resolution/sampling knobs are left at spec defaults.
SyntheticSceneSpec toy_scene_spec();

}  // namespace pointfield::synthetic
