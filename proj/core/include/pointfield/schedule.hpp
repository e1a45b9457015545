// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "pointfield/common.hpp"

namespace pointfield::diffusion {

// Variance schedule for the forward noising process. All accessors are
// 1-indexed in the step number t, matching the usual notation: beta(1) is the
// first (smallest) noise level and beta(steps()) the last.
class NoiseSchedule {
  public:
    NoiseSchedule(std::vector<double> betas);

    std::size_t steps() const { return betas_.size(); }
    double beta(std::size_t t) const { return at_(betas_, t); }
    double alpha(std::size_t t) const { return at_(alphas_, t); }
    // Cumulative product of alphas up to and including step t.
    double alpha_bar(std::size_t t) const { return at_(alpha_bars_, t); }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  private:
    double at_(const std::vector<double>& v, std::size_t t) const {
        require(t >= 1 && t <= v.size(), "schedule step ", t, " outside [1, ",
                v.size(), "]");
        return v[t - 1];
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

// Linearly interpolated betas from beta0 (step 1) to beta_final (step
// `steps`). Requires 0 < beta0 < beta_final < 1 and steps >= 2.
NoiseSchedule linear_schedule(std::size_t steps, double beta0, double beta_final);

}  // namespace pointfield::diffusion
