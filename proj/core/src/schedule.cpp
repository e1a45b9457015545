// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/schedule.hpp"

namespace pointfield::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    require(betas_.size() >= 2, "schedule needs at least 2 steps, got ",
            betas_.size());
    double prev = 0.0;
    double bar = 1.0;
    alphas_.reserve(betas_.size());
    alpha_bars_.reserve(betas_.size());
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        const double b = betas_[i];
        require(b > 0.0 && b < 1.0, "beta out of (0,1) at step ", i + 1, ": ", b);
        require(b > prev, "betas must be strictly increasing, step ", i + 1);
        prev = b;
        alphas_.push_back(1.0 - b);
        bar *= 1.0 - b;
        require(bar > 0.0, "alpha_bar underflowed to zero at step ", i + 1);
        alpha_bars_.push_back(bar);
    }
}

NoiseSchedule linear_schedule(std::size_t steps, double beta0, double beta_final) {
    require(steps >= 2, "linear schedule needs steps >= 2, got ", steps);
    require(beta0 > 0.0 && beta0 < beta_final && beta_final < 1.0,
            "need 0 < beta0 < beta_final < 1, got ", beta0, " and ", beta_final);
    std::vector<double> betas(steps);
    for (std::size_t t = 1; t <= steps; ++t) {
        betas[t - 1] = beta0 + static_cast<double>(t - 1) /
                                   static_cast<double>(steps - 1) *
                                   (beta_final - beta0);
    }
    return NoiseSchedule(std::move(betas));
}

}  // namespace pointfield::diffusion
