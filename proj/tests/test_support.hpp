// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "pointfield/params.hpp"
#include "pointfield/tensor.hpp"

namespace pointfield::testing {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct FdReport {
    double max_rel = 0.0;
    std::string where;
};

// Central finite differences over every entry of every parameter tensor.
// `loss_of` must evaluate the scalar loss for the current contents of
// `params`; `analytic` holds gradients in ParamSet order.
template <class LossFn>
FdReport fd_check_params(ad::ParamSet& params, LossFn loss_of,
                         const std::vector<ad::Tensor>& analytic, double h = 1e-5) {
    FdReport rep;
    for (std::size_t p = 0; p < params.count(); ++p) {
        ad::Tensor& w = params.tensor_at(p);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + h;
            const double up = loss_of(params);
            w[i] = orig - h;
            const double dn = loss_of(params);
            w[i] = orig;
            const double fd = (up - dn) / (2.0 * h);
            const double e = rel_err(fd, analytic[p][i]);
            if (e > rep.max_rel) {
                rep.max_rel = e;
                rep.where = cat(params.name_at(p), "[", i, "] fd=", fd,
                                " analytic=", analytic[p][i]);
            }
        }
    }
    return rep;
}

// Same check against a single free tensor (an input rather than a weight).
template <class LossFn>
FdReport fd_check_tensor(ad::Tensor& x, LossFn loss_of, const ad::Tensor& analytic,
                         double h = 1e-5) {
    FdReport rep;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double up = loss_of(x);
        x[i] = orig - h;
        const double dn = loss_of(x);
        x[i] = orig;
        const double fd = (up - dn) / (2.0 * h);
        const double e = rel_err(fd, analytic[i]);
        if (e > rep.max_rel) {
            rep.max_rel = e;
            rep.where = cat("x[", i, "] fd=", fd, " analytic=", analytic[i]);
        }
    }
    return rep;
}

}  // namespace pointfield::testing
