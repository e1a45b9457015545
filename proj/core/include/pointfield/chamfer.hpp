// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pointfield/point_cloud.hpp"

namespace pointfield::geo {

// Symmetric mean of squared nearest-neighbor distances:
// (1/|a|) Σ_a min‖a−b‖² + (1/|b|) Σ_b min‖b−a‖². Zero iff the clouds cover
// the same positions.
double chamfer(const PointCloud& a, const PointCloud& b);

}  // namespace pointfield::geo
