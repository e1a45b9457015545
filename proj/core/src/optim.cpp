// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/optim.hpp"

#include <cmath>

namespace pointfield::ad {

AdamState::AdamState(const ParamSet& params) {
    m_.reserve(params.count());
    v_.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        m_.push_back(Tensor::zeros_like(params.tensor_at(i)));
        v_.push_back(Tensor::zeros_like(params.tensor_at(i)));
    }
}

void AdamState::step(ParamSet& params, const std::vector<Tensor>& grads,
                     const AdamConfig& cfg) {
    require(params.count() == m_.size(), "optimizer state built for ", m_.size(),
            " parameters, got ", params.count());
    require(grads.size() == m_.size(), "expected ", m_.size(), " gradients, got ",
            grads.size());
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < m_.size(); ++p) {
        Tensor& w = params.tensor_at(p);
        const Tensor& g = grads[p];
        require(g.same_shape(w), "gradient shape ", g.shape_str(), " vs parameter ",
                params.name_at(p), " shape ", w.shape_str());
        require(g.all_finite(), "non-finite gradient for parameter ", params.name_at(p));
        Tensor& m = m_[p];
        Tensor& v = v_[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace pointfield::ad
