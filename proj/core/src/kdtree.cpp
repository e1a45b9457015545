// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>

namespace pointfield::spatial {

namespace {

double dist2(const geo::Vec3& a, const geo::Vec3& b) { return geo::norm2(a - b); }

// candidate key: squared distance first, index second, so ordering (and the
// K-th worst bound) is total and deterministic
using Key = std::pair<double, std::uint32_t>;

}  // namespace

SpatialIndex::SpatialIndex(const geo::PointCloud& cloud, std::size_t leaf_size)
    : points_(cloud.points), leaf_size_(leaf_size) {
    require(!points_.empty(), "spatial index over an empty cloud");
    require(leaf_size_ >= 1, "leaf size must be at least 1");
    for (const geo::Vec3& p : points_) {
        require(geo::finite(p), "spatial index input has non-finite coordinates");
    }
    perm_.resize(points_.size());
    for (std::uint32_t i = 0; i < perm_.size(); ++i) {
        perm_[i] = i;
    }
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
}

std::uint32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end, 0, 0, -1, 0.0});
    if (end - begin <= leaf_size_) {
        return id;
    }
    geo::Vec3 lo = points_[perm_[begin]];
    geo::Vec3 hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
        const geo::Vec3& p = points_[perm_[i]];
        for (std::size_t a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    int axis = 0;
    double extent = hi[0] - lo[0];
    for (int a = 1; a < 3; ++a) {
        if (hi[a] - lo[a] > extent) {
            extent = hi[a] - lo[a];
            axis = a;
        }
    }
    if (extent <= 0.0) {
        return id;  // all coincident: splitting cannot separate anything
    }
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         return points_[a][static_cast<std::size_t>(axis)] <
                                points_[b][static_cast<std::size_t>(axis)];
                     });
    const double split = points_[perm_[mid]][static_cast<std::size_t>(axis)];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    return id;
}

NeighborSet SpatialIndex::search(const geo::Vec3& query, double radius2,
                                 std::size_t k) const {
    std::priority_queue<Key> heap;  // max-heap: top is the worst kept candidate

    auto bound = [&]() { return heap.size() == k ? heap.top().first : radius2; };

    auto visit = [&](auto&& self, std::uint32_t id) -> void {
        const Node& node = nodes_[id];
        if (node.left == 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t idx = perm_[i];
                const double d2 = dist2(query, points_[idx]);
                if (d2 > radius2) {
                    continue;
                }
                const Key key{d2, idx};
                if (heap.size() < k) {
                    heap.push(key);
                } else if (key < heap.top()) {
                    heap.pop();
                    heap.push(key);
                }
            }
            return;
        }
        const double dq = query[static_cast<std::size_t>(node.axis)] - node.split;
        const std::uint32_t near = dq < 0.0 ? node.left : node.right;
        const std::uint32_t far = dq < 0.0 ? node.right : node.left;
        self(self, near);
        if (dq * dq <= bound()) {
            self(self, far);
        }
    };
    visit(visit, 0);

    NeighborSet out;
    std::vector<Key> keys;
    keys.reserve(heap.size());
    while (!heap.empty()) {
        keys.push_back(heap.top());
        heap.pop();
    }
    std::sort(keys.begin(), keys.end());
    out.indices.reserve(keys.size());
    out.distances.reserve(keys.size());
    for (const Key& key : keys) {
        out.indices.push_back(key.second);
        out.distances.push_back(std::sqrt(key.first));
    }
    return out;
}

NeighborSet SpatialIndex::radius_neighbors(const geo::Vec3& query, double radius,
                                           std::size_t k) const {
    require(radius > 0.0, "query radius must be positive");
    require(k >= 1, "neighbor count must be at least 1");
    return search(query, radius * radius, k);
}

NeighborSet SpatialIndex::nearest(const geo::Vec3& query, std::size_t k) const {
    require(k >= 1, "neighbor count must be at least 1");
    return search(query, std::numeric_limits<double>::infinity(), k);
}

bool SpatialIndex::any_within(const geo::Vec3& query, double radius) const {
    require(radius > 0.0, "query radius must be positive");
    const double radius2 = radius * radius;
    auto visit = [&](auto&& self, std::uint32_t id) -> bool {
        const Node& node = nodes_[id];
        if (node.left == 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                if (dist2(query, points_[perm_[i]]) <= radius2) {
                    return true;
                }
            }
            return false;
        }
        const double dq = query[static_cast<std::size_t>(node.axis)] - node.split;
        const std::uint32_t near = dq < 0.0 ? node.left : node.right;
        const std::uint32_t far = dq < 0.0 ? node.right : node.left;
        if (self(self, near)) {
            return true;
        }
        return dq * dq <= radius2 && self(self, far);
    };
    return visit(visit, 0);
}

SpatialIndex build_index(const geo::PointCloud& cloud, std::size_t leaf_size) {
    return SpatialIndex(cloud, leaf_size);
}

PruneResult prune_samples(const SpatialIndex& index, const std::vector<geo::Vec3>& samples,
                          double radius) {
    require(radius > 0.0, "pruning radius must be positive");
    PruneResult out;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (index.any_within(samples[s], radius)) {
            out.retained.push_back(s);
        } else {
            out.discarded.push_back(s);
        }
    }
    return out;
}

double mean_nn_spacing(const SpatialIndex& index) {
    require(index.size() >= 2, "nearest-neighbor spacing needs at least two points");
    double acc = 0.0;
    for (std::size_t i = 0; i < index.size(); ++i) {
        const NeighborSet ns = index.nearest(index.points()[i], 2);
        double d = -1.0;
        for (std::size_t j = 0; j < ns.size(); ++j) {
            if (ns.indices[j] != i) {
                d = ns.distances[j];
                break;
            }
        }
        require(d >= 0.0, "nearest-neighbor query returned only the query point");
        acc += d;
    }
    return acc / static_cast<double>(index.size());
}

}  // namespace pointfield::spatial
