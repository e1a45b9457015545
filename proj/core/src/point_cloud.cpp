// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/point_cloud.hpp"

#include <algorithm>

namespace pointfield::geo {

using ad::Tensor;

PointCloud NormalizeTransform::apply(const PointCloud& cloud) const {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const Vec3& p : cloud.points) {
        out.points.push_back(apply(p));
    }
    return out;
}

PointCloud NormalizeTransform::invert(const PointCloud& cloud) const {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const Vec3& p : cloud.points) {
        out.points.push_back(invert(p));
    }
    return out;
}

std::pair<PointCloud, NormalizeTransform> normalize(const PointCloud& cloud) {
    require(!cloud.empty(), "normalize: empty cloud");
    Vec3 centroid;
    for (const Vec3& p : cloud.points) {
        require(finite(p), "normalize: non-finite coordinate");
        centroid += p;
    }
    centroid = centroid / static_cast<double>(cloud.size());
    double max_r = 0.0;
    for (const Vec3& p : cloud.points) {
        max_r = std::max(max_r, norm(p - centroid));
    }
    NormalizeTransform t;
    t.center = centroid;
    t.scale = max_r > 0.0 ? max_r : 1.0;
    return {t.apply(cloud), t};
}

ad::Tensor to_tensor(const PointCloud& cloud) {
    Tensor out = Tensor::zeros({cloud.size(), 3});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        out.at(i, 0) = cloud[i].x;
        out.at(i, 1) = cloud[i].y;
        out.at(i, 2) = cloud[i].z;
    }
    return out;
}

PointCloud to_cloud(const ad::Tensor& positions) {
    require(positions.rank() == 2 && positions.cols() == 3,
            "expected an n-by-3 position tensor, got ", positions.shape_str());
    PointCloud out;
    out.points.reserve(positions.rows());
    for (std::size_t i = 0; i < positions.rows(); ++i) {
        out.points.push_back(
            {positions.at(i, 0), positions.at(i, 1), positions.at(i, 2)});
    }
    return out;
}

}  // namespace pointfield::geo
