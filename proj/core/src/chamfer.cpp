// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/chamfer.hpp"

#include "pointfield/kdtree.hpp"

namespace pointfield::geo {

namespace {

double mean_sq_nn(const PointCloud& from, const spatial::SpatialIndex& to_index) {
    double acc = 0.0;
    for (const Vec3& p : from.points) {
        const spatial::NeighborSet ns = to_index.nearest(p, 1);
        acc += ns.distances[0] * ns.distances[0];
    }
    return acc / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
    require(!a.empty() && !b.empty(), "chamfer of an empty cloud");
    const spatial::SpatialIndex ia(a);
    const spatial::SpatialIndex ib(b);
    return mean_sq_nn(a, ib) + mean_sq_nn(b, ia);
}

}  // namespace pointfield::geo
