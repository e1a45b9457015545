// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/field.hpp"

#include <array>
#include <cmath>
#include <string>

namespace pointfield::render {

namespace {

constexpr std::size_t kGeoInputDim = 10;   // c_i + c_j + (c_i-c_j) + distance
constexpr std::size_t kTrunkInputDim = 14; // position + direction + geometry
constexpr double kPi = 3.14159265358979323846;

Var linear(const BoundParams& p, Var x, const std::string& w,
           const std::string& b) {
    return ad::add_rowvec(ad::matmul(x, p[w]), p[b]);
}

// Two relu layers then separate density and feature heads; shared by the
// foreground and background branches.
FieldOutput field_trunk(const BoundParams& p, Var in, const std::string& prefix) {
    Var h = ad::relu(linear(p, in, prefix + ".w1", prefix + ".b1"));
    h = ad::relu(linear(p, h, prefix + ".w2", prefix + ".b2"));
    Var sigma = ad::as_vector(ad::softplus(
        linear(p, h, prefix + ".sigma_w", prefix + ".sigma_b")));
    Var feature = linear(p, h, prefix + ".feat_w", prefix + ".feat_b");
    return {sigma, feature};
}

void add_field_trunk(ParamSet& params, const std::string& prefix,
                     std::size_t in_dim, std::size_t hidden, Rng& rng) {
    params.add_linear(prefix + ".w1", in_dim, hidden, rng);
    params.add_bias(prefix + ".b1", hidden);
    params.add_linear(prefix + ".w2", hidden, hidden, rng);
    params.add_bias(prefix + ".b2", hidden);
    params.add_linear(prefix + ".sigma_w", hidden, 1, rng);
    params.add_bias(prefix + ".sigma_b", 1);
    params.add_linear(prefix + ".feat_w", hidden, kFeatureDim, rng);
    params.add_bias(prefix + ".feat_b", kFeatureDim);
}

void check_field_config(const FieldConfig& cfg) {
    require(cfg.geo_hidden >= 1 && cfg.fg_hidden >= 1 && cfg.bg_hidden >= 1 &&
                cfg.fuse_hidden >= 1,
            "field hidden widths must be positive");
}

}  // namespace

std::size_t background_input_dim(const FieldConfig& cfg) {
    return 3 + 6 * cfg.bg_posenc_levels;
}

ParamSet make_field_params(const FieldConfig& cfg, std::uint64_t seed) {
    check_field_config(cfg);
    Rng rng(Rng::derive(seed, 0xf1e1d));
    ParamSet params;

    params.add_linear("geo.w1", kGeoInputDim, cfg.geo_hidden, rng);
    params.add_bias("geo.b1", cfg.geo_hidden);
    params.add_linear("geo.w2", cfg.geo_hidden, kGeoFeatureDim, rng);
    params.add_bias("geo.b2", kGeoFeatureDim);

    params.add_linear("score.w1", kGeoFeatureDim, cfg.geo_hidden, rng);
    params.add_bias("score.b1", cfg.geo_hidden);
    params.add_linear("score.w2", cfg.geo_hidden, kGeoFeatureDim, rng);
    params.add_bias("score.b2", kGeoFeatureDim);

    add_field_trunk(params, "fg", kTrunkInputDim, cfg.fg_hidden, rng);
    add_field_trunk(params, "bg", background_input_dim(cfg), cfg.bg_hidden, rng);

    params.add_linear("fuse.w1", 2 * kFeatureDim, cfg.fuse_hidden, rng);
    params.add_bias("fuse.b1", cfg.fuse_hidden);
    params.add_linear("fuse.w2", cfg.fuse_hidden, cfg.fuse_hidden, rng);
    params.add_bias("fuse.b2", cfg.fuse_hidden);
    params.add_linear("fuse.w3", cfg.fuse_hidden, cfg.fuse_hidden, rng);
    params.add_bias("fuse.b3", cfg.fuse_hidden);
    params.add_linear("fuse.w4", cfg.fuse_hidden, 3, rng);
    params.add_bias("fuse.b4", 3);
    return params;
}

void stamp_field_meta(ParamSet& params, const FieldConfig& cfg) {
    auto& meta = params.meta();
    meta["model"] = "pointfield-renderer";
    meta["geo_hidden"] = std::to_string(cfg.geo_hidden);
    meta["fg_hidden"] = std::to_string(cfg.fg_hidden);
    meta["bg_hidden"] = std::to_string(cfg.bg_hidden);
    meta["fuse_hidden"] = std::to_string(cfg.fuse_hidden);
    meta["bg_posenc_levels"] = std::to_string(cfg.bg_posenc_levels);
}

FieldConfig field_config_from_meta(const ParamSet& params) {
    FieldConfig cfg;
    cfg.geo_hidden = static_cast<std::size_t>(params.meta_number("geo_hidden"));
    cfg.fg_hidden = static_cast<std::size_t>(params.meta_number("fg_hidden"));
    cfg.bg_hidden = static_cast<std::size_t>(params.meta_number("bg_hidden"));
    cfg.fuse_hidden = static_cast<std::size_t>(params.meta_number("fuse_hidden"));
    cfg.bg_posenc_levels =
        static_cast<std::size_t>(params.meta_number("bg_posenc_levels"));
    check_field_config(cfg);
    return cfg;
}

void stamp_render_meta(ParamSet& params, const RenderConfig& config) {
    check_render_config(config);
    auto& meta = params.meta();
    meta["render_radius"] = cat(config.radius);
    meta["render_neighbors"] = std::to_string(config.neighbors);
    meta["render_n_fg"] = std::to_string(config.n_fg_samples);
    meta["render_n_bg"] = std::to_string(config.n_bg_samples);
    meta["render_near"] = cat(config.near);
    meta["render_far"] = cat(config.far);
    meta["render_use_background"] = config.use_background ? "1" : "0";
}

RenderConfig render_config_from_meta(const ParamSet& params) {
    RenderConfig config;
    config.radius = params.meta_number("render_radius");
    config.neighbors =
        static_cast<std::size_t>(params.meta_number("render_neighbors"));
    config.n_fg_samples =
        static_cast<std::size_t>(params.meta_number("render_n_fg"));
    config.n_bg_samples =
        static_cast<std::size_t>(params.meta_number("render_n_bg"));
    config.near = params.meta_number("render_near");
    config.far = params.meta_number("render_far");
    config.use_background = params.meta_number("render_use_background") != 0.0;
    check_render_config(config);
    return config;
}

Var neighbor_geometry_input(Var ci, Var cj) {
    require(ci.value().rank() == 2 && ci.value().cols() == 3 &&
                cj.value().rank() == 2 && cj.value().cols() == 3,
            "neighbor positions must be [n x 3] rows");
    Var diff = ad::sub(ci, cj);
    Var dist = ad::sqrt_positive(ad::sum_cols(ad::square(diff)));
    const std::array<Var, 4> parts{ci, cj, diff, dist};
    return ad::concat_cols(parts);
}

Var encode_neighbor_geometry(Tape& tape, const BoundParams& p, Var ci, Var cj) {
    (void)tape;
    Var in = neighbor_geometry_input(ci, cj);
    Var h = ad::relu(linear(p, in, "geo.w1", "geo.b1"));
    return linear(p, h, "geo.w2", "geo.b2");
}

Var aggregate_features(Tape& tape, const BoundParams& p, Var kg,
                       std::vector<std::size_t> offsets) {
    (void)tape;
    Var h = ad::relu(linear(p, kg, "score.w1", "score.b1"));
    Var scores = linear(p, h, "score.w2", "score.b2");
    return ad::segment_softmax_aggregate(kg, scores, std::move(offsets));
}

FieldOutput foreground_field(Tape& tape, const BoundParams& p, Var positions,
                             Var directions, Var features) {
    (void)tape;
    const std::array<Var, 3> parts{positions, directions, features};
    return field_trunk(p, ad::concat_cols(parts), "fg");
}

FieldOutput background_field(Tape& tape, const BoundParams& p, Var encoded) {
    (void)tape;
    return field_trunk(p, encoded, "bg");
}

std::vector<double> encode_background_sample(const geo::Vec3& contracted_mid,
                                             double contracted_length,
                                             std::size_t levels) {
    require(finite(contracted_mid), "background midpoint must be finite");
    require(std::isfinite(contracted_length) && contracted_length >= 0.0,
            "interval length must be non-negative, got ", contracted_length);
    std::vector<double> out;
    out.reserve(3 + 6 * levels);
    out.push_back(contracted_mid.x);
    out.push_back(contracted_mid.y);
    out.push_back(contracted_mid.z);
    double freq = 1.0;
    for (std::size_t l = 0; l < levels; ++l, freq *= 2.0) {
        const double span = freq * contracted_length;
        const double atten = std::exp(-0.5 * span * span);
        for (std::size_t c = 0; c < 3; ++c) {
            const double phase = freq * kPi * contracted_mid[c];
            out.push_back(atten * std::sin(phase));
            out.push_back(atten * std::cos(phase));
        }
    }
    return out;
}

BackgroundResult background_features(Tape& tape, const BoundParams& p,
                                     const FieldConfig& cfg,
                                     const RaySamples& samples) {
    const std::size_t n = samples.background.size();
    require(n >= 1, "ray carries no background samples");
    require(samples.background_deltas.size() == n,
            "background widths out of sync with samples");
    const std::size_t dim = background_input_dim(cfg);
    Tensor enc = Tensor::zeros({n, dim});
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> row = encode_background_sample(
            samples.background[i].position, samples.background_deltas[i],
            cfg.bg_posenc_levels);
        for (std::size_t c = 0; c < dim; ++c) enc.at(i, c) = row[c];
    }
    FieldOutput out = background_field(tape, p, tape.constant(std::move(enc)));
    std::vector<std::size_t> offsets{0, n};
    BackgroundResult result;
    result.feature = ad::composite_segments(out.sigma, out.feature,
                                            samples.background_deltas, offsets);
    result.alpha =
        ad::alpha_segments(out.sigma, samples.background_deltas, offsets);
    return result;
}

Var fuse_features(Tape& tape, const BoundParams& p, Var fg_feature,
                  Var bg_feature) {
    (void)tape;
    require(fg_feature.value().rank() == 2 &&
                fg_feature.value().cols() == kFeatureDim &&
                bg_feature.value().rank() == 2 &&
                bg_feature.value().cols() == kFeatureDim,
            "fusion inputs must be [n x 128] feature rows");
    const std::array<Var, 2> parts{fg_feature, bg_feature};
    Var h = ad::relu(linear(p, ad::concat_cols(parts), "fuse.w1", "fuse.b1"));
    h = ad::relu(linear(p, h, "fuse.w2", "fuse.b2"));
    h = ad::relu(linear(p, h, "fuse.w3", "fuse.b3"));
    return ad::sigmoid(linear(p, h, "fuse.w4", "fuse.b4"));
}

Var render_loss(Tape& tape, Var pred, const Tensor& gt) {
    require(pred.value().same_shape(gt), "prediction shape ",
            pred.value().shape_str(), " does not match ground truth ",
            gt.shape_str());
    return ad::mean(ad::square(ad::sub(pred, tape.constant(gt))));
}

Var render_rays(Tape& tape, const BoundParams& p, const FieldConfig& cfg,
                const std::vector<Ray>& rays,
                const std::vector<RaySamples>& samples,
                const spatial::SpatialIndex& index, bool use_background) {
    require(rays.size() == samples.size(), "got ", rays.size(), " rays but ",
            samples.size(), " sample lists");
    require(!rays.empty(), "render_rays needs at least one ray");
    const std::size_t n_rays = rays.size();
    const std::vector<geo::Vec3>& cloud = index.points();

    std::size_t n_samples = 0;
    std::size_t n_pairs = 0;
    for (const RaySamples& rs : samples) {
        n_samples += rs.retained.size();
        for (std::size_t i : rs.retained)
            n_pairs += rs.foreground[i].neighbors.size();
    }

    Var fg_composite;
    if (n_samples > 0) {
        Tensor ci = Tensor::zeros({n_pairs, 3});
        Tensor cj = Tensor::zeros({n_pairs, 3});
        Tensor pos = Tensor::zeros({n_samples, 3});
        Tensor dir = Tensor::zeros({n_samples, 3});
        std::vector<std::size_t> pair_offsets{0};
        std::vector<std::size_t> ray_offsets{0};
        std::vector<double> deltas;
        deltas.reserve(n_samples);
        std::size_t s = 0;
        std::size_t q = 0;
        for (std::size_t r = 0; r < n_rays; ++r) {
            const RaySamples& rs = samples[r];
            require(rs.retained_deltas.size() == rs.retained.size(),
                    "retained widths out of sync with samples");
            for (std::size_t k = 0; k < rs.retained.size(); ++k) {
                const SamplePoint& sp = rs.foreground[rs.retained[k]];
                require(!sp.neighbors.empty(),
                        "retained sample has no neighbors");
                for (std::size_t c = 0; c < 3; ++c) {
                    pos.at(s, c) = sp.position[c];
                    dir.at(s, c) = rays[r].direction[c];
                }
                for (std::size_t idx : sp.neighbors.indices) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        ci.at(q, c) = sp.position[c];
                        cj.at(q, c) = cloud[idx][c];
                    }
                    ++q;
                }
                deltas.push_back(rs.retained_deltas[k]);
                pair_offsets.push_back(q);
                ++s;
            }
            ray_offsets.push_back(s);
        }
        Var kg = encode_neighbor_geometry(tape, p, tape.constant(std::move(ci)),
                                          tape.constant(std::move(cj)));
        Var f = aggregate_features(tape, p, kg, std::move(pair_offsets));
        FieldOutput fo = foreground_field(tape, p, tape.constant(std::move(pos)),
                                          tape.constant(std::move(dir)), f);
        fg_composite = ad::composite_segments(fo.sigma, fo.feature, deltas,
                                              std::move(ray_offsets));
    } else {
        // No ray in the batch hit the prior surface; fusion sees zeros.
        fg_composite = tape.constant(Tensor::zeros({n_rays, kFeatureDim}));
    }

    Var bg_composite;
    if (use_background) {
        std::size_t n_bg = 0;
        for (const RaySamples& rs : samples) n_bg += rs.background.size();
        require(n_bg > 0, "background branch enabled but no background samples");
        const std::size_t dim = background_input_dim(cfg);
        Tensor enc = Tensor::zeros({n_bg, dim});
        std::vector<double> deltas;
        deltas.reserve(n_bg);
        std::vector<std::size_t> ray_offsets{0};
        std::size_t s = 0;
        for (const RaySamples& rs : samples) {
            require(rs.background_deltas.size() == rs.background.size(),
                    "background widths out of sync with samples");
            for (std::size_t i = 0; i < rs.background.size(); ++i) {
                const std::vector<double> row = encode_background_sample(
                    rs.background[i].position, rs.background_deltas[i],
                    cfg.bg_posenc_levels);
                for (std::size_t c = 0; c < dim; ++c) enc.at(s, c) = row[c];
                deltas.push_back(rs.background_deltas[i]);
                ++s;
            }
            ray_offsets.push_back(s);
        }
        FieldOutput bo = background_field(tape, p, tape.constant(std::move(enc)));
        bg_composite = ad::composite_segments(bo.sigma, bo.feature, deltas,
                                              std::move(ray_offsets));
    } else {
        bg_composite = tape.constant(Tensor::zeros({n_rays, kFeatureDim}));
    }

    return fuse_features(tape, p, fg_composite, bg_composite);
}

}  // namespace pointfield::render
