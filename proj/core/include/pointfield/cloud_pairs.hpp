// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointfield/point_cloud.hpp"
#include "pointfield/rng.hpp"

namespace pointfield::geo {

// A nested downsampling draw came out empty on one side; the caller should
// redraw retentions rather than treat this as fatal.
class DegeneratePairError : public std::runtime_error {
public:
    explicit DegeneratePairError(const std::string& msg) : std::runtime_error(msg) {}
};

// condition ∪ target_extra = full_target, disjoint by construction; the
// condition rows always come first in full_target.
struct CloudPair {
    PointCloud condition;
    PointCloud target_extra;
    PointCloud full_target;
};

struct PairMeta {
    double r1 = 0.0;
    double r2 = 0.0;
    std::uint64_t seed = 0;
};

// k = round(retention * n) distinct indices into [0, n), ascending, drawn
// uniformly without replacement.
std::vector<std::size_t> downsample_indices(std::size_t n, double retention, Rng& rng);

// Uniform subset of round(retention * |cloud|) points, original order kept.
PointCloud random_downsample(const PointCloud& cloud, double retention, std::uint64_t seed);

// Two nested downsampling passes: mid = downsample(source, r1), then the
// condition = downsample(mid, r2); target_extra is the rest of mid. Throws
// DegeneratePairError when either side comes out empty.
CloudPair make_training_pair(const PointCloud& source, double r1, double r2,
                             std::uint64_t seed);

// A pair on disk is <stem>.condition.ply + <stem>.extra.ply + <stem>.meta.txt.
void save_pair(const CloudPair& pair, const PairMeta& meta, const std::string& stem);
CloudPair load_pair(const std::string& stem, PairMeta* meta_out = nullptr);

}  // namespace pointfield::geo
