// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "pointfield/point_cloud.hpp"

namespace pointfield::geo {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

// Reads vertex x/y/z from an ASCII or binary-little-endian PLY. x/y/z must be
// float32 or float64; other fixed-size scalar properties are skipped. List
// properties ahead of the vertex data are unsupported and rejected with the
// offending header line.
PointCloud load_ply(const std::string& path);

// Writes x/y/z as float64; ASCII output carries 17 significant digits so
// either format round-trips doubles exactly.
void save_ply(const PointCloud& cloud, const std::string& path,
              PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace pointfield::geo
