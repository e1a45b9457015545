// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "pointfield/params.hpp"
#include "pointfield/tensor.hpp"

namespace pointfield::ad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers for one ParamSet. The state is positional:
// it matches parameters by index, so it must only ever be used with the set
// (or an identically shaped set) it was created for.
class AdamState {
public:
    explicit AdamState(const ParamSet& params);

    // One bias-corrected update. `grads` must be in ParamSet order with
    // matching shapes; non-finite gradient entries abort with the parameter
    // name rather than silently corrupting the weights.
    void step(ParamSet& params, const std::vector<Tensor>& grads, const AdamConfig& cfg);

    std::uint64_t steps_taken() const { return t_; }

private:
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t t_ = 0;
};

}  // namespace pointfield::ad
