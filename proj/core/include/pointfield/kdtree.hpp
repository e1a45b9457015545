// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "pointfield/point_cloud.hpp"

namespace pointfield::spatial {

// Query result: up to K neighbor indices with their Euclidean distances,
// sorted ascending (ties broken by index). Distances never exceed the query
// radius when one was given.
struct NeighborSet {
    std::vector<std::size_t> indices;
    std::vector<double> distances;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
};

// Median-split axis-aligned tree over an immutable copy of a cloud. Queries
// return exactly the brute-force answer, including ties on the closed ball
// boundary; that exactness is what the renderer's correctness tests lean on.
class SpatialIndex {
public:
    explicit SpatialIndex(const geo::PointCloud& cloud, std::size_t leaf_size = 16);

    std::size_t size() const { return points_.size(); }
    const std::vector<geo::Vec3>& points() const { return points_; }

    // The ≤K closest points within the closed ball of the given radius.
    NeighborSet radius_neighbors(const geo::Vec3& query, double radius,
                                 std::size_t k) const;
    // The K closest points with no radius bound.
    NeighborSet nearest(const geo::Vec3& query, std::size_t k) const;
    // True iff any point lies within the closed ball.
    bool any_within(const geo::Vec3& query, double radius) const;

private:
    struct Node {
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
        std::uint32_t left = 0;   // 0 = leaf (node 0 is the root, never a child)
        std::uint32_t right = 0;
        int axis = -1;
        double split = 0.0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end);
    NeighborSet search(const geo::Vec3& query, double radius2, std::size_t k) const;

    std::vector<geo::Vec3> points_;
    std::vector<std::uint32_t> perm_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

SpatialIndex build_index(const geo::PointCloud& cloud, std::size_t leaf_size = 16);

struct PruneResult {
    std::vector<std::size_t> retained;
    std::vector<std::size_t> discarded;
};

// Splits sample indices by whether any cloud point lies within `radius`.
PruneResult prune_samples(const SpatialIndex& index, const std::vector<geo::Vec3>& samples,
                          double radius);

// Mean distance from each point to its nearest distinct-index neighbor;
// the reference length scale for choosing a query radius.
double mean_nn_spacing(const SpatialIndex& index);

}  // namespace pointfield::spatial
