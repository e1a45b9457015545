// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/cloud_pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pointfield/ply.hpp"

namespace pointfield::geo {

std::vector<std::size_t> downsample_indices(std::size_t n, double retention, Rng& rng) {
    require(retention > 0.0 && retention <= 1.0, "retention ", retention,
            " outside (0, 1]");
    const auto k = static_cast<std::size_t>(
        std::llround(retention * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates: the first k slots become the sample
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

PointCloud random_downsample(const PointCloud& cloud, double retention, std::uint64_t seed) {
    Rng rng(seed);
    const auto idx = downsample_indices(cloud.size(), retention, rng);
    PointCloud out;
    out.points.reserve(idx.size());
    for (const std::size_t i : idx) {
        out.points.push_back(cloud[i]);
    }
    return out;
}

CloudPair make_training_pair(const PointCloud& source, double r1, double r2,
                             std::uint64_t seed) {
    require(r1 >= 0.2 && r1 < 1.0, "first retention ", r1, " outside [0.2, 1)");
    require(r2 >= 0.2 && r2 < 1.0, "second retention ", r2, " outside [0.2, 1)");
    require(source.size() >= 10, "source cloud too small: ", source.size(), " points");

    Rng rng_mid(Rng::derive(seed, 1));
    Rng rng_cond(Rng::derive(seed, 2));
    const auto mid_idx = downsample_indices(source.size(), r1, rng_mid);
    const auto cond_sel = downsample_indices(mid_idx.size(), r2, rng_cond);

    std::vector<bool> in_condition(mid_idx.size(), false);
    for (const std::size_t s : cond_sel) {
        in_condition[s] = true;
    }

    CloudPair pair;
    for (std::size_t s = 0; s < mid_idx.size(); ++s) {
        const Vec3& p = source[mid_idx[s]];
        if (in_condition[s]) {
            pair.condition.points.push_back(p);
        } else {
            pair.target_extra.points.push_back(p);
        }
    }
    if (pair.condition.empty() || pair.target_extra.empty()) {
        throw DegeneratePairError(cat("degenerate pair: |condition|=",
                                      pair.condition.size(), " |target_extra|=",
                                      pair.target_extra.size(), " (r1=", r1, ", r2=", r2,
                                      ")"));
    }
    pair.full_target.points.reserve(pair.condition.size() + pair.target_extra.size());
    pair.full_target.points.insert(pair.full_target.points.end(),
                                   pair.condition.points.begin(),
                                   pair.condition.points.end());
    pair.full_target.points.insert(pair.full_target.points.end(),
                                   pair.target_extra.points.begin(),
                                   pair.target_extra.points.end());
    return pair;
}

void save_pair(const CloudPair& pair, const PairMeta& meta, const std::string& stem) {
    save_ply(pair.condition, stem + ".condition.ply");
    save_ply(pair.target_extra, stem + ".extra.ply");
    std::ofstream os(stem + ".meta.txt", std::ios::trunc);
    if (!os) {
        throw IoError(cat("cannot write pair metadata: ", stem, ".meta.txt"));
    }
    os.precision(17);
    os << "r1=" << meta.r1 << "\n";
    os << "r2=" << meta.r2 << "\n";
    os << "seed=" << meta.seed << "\n";
    if (!os) {
        throw IoError(cat("failed writing pair metadata: ", stem, ".meta.txt"));
    }
}

CloudPair load_pair(const std::string& stem, PairMeta* meta_out) {
    CloudPair pair;
    pair.condition = load_ply(stem + ".condition.ply");
    pair.target_extra = load_ply(stem + ".extra.ply");
    pair.full_target.points.reserve(pair.condition.size() + pair.target_extra.size());
    pair.full_target.points.insert(pair.full_target.points.end(),
                                   pair.condition.points.begin(),
                                   pair.condition.points.end());
    pair.full_target.points.insert(pair.full_target.points.end(),
                                   pair.target_extra.points.begin(),
                                   pair.target_extra.points.end());
    if (meta_out != nullptr) {
        const std::string meta_path = stem + ".meta.txt";
        std::ifstream is(meta_path);
        if (!is) {
            throw IoError(cat("cannot open pair metadata: ", meta_path));
        }
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ParseError(cat(meta_path, ": line ", line_no, ": expected key=value"));
            }
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            try {
                if (key == "r1") {
                    meta_out->r1 = std::stod(value);
                } else if (key == "r2") {
                    meta_out->r2 = std::stod(value);
                } else if (key == "seed") {
                    meta_out->seed = std::stoull(value);
                } else {
                    throw ParseError(cat(meta_path, ": line ", line_no, ": unknown key '",
                                         key, "'"));
                }
            } catch (const std::invalid_argument&) {
                throw ParseError(cat(meta_path, ": line ", line_no, ": bad value '", value,
                                     "'"));
            }
        }
    }
    return pair;
}

}  // namespace pointfield::geo
