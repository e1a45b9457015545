// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/tensor.hpp"

#include <cmath>

namespace pointfield::ad {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_product(shape_), "tensor data length ", data_.size(),
            " does not match shape ", shape_str());
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) {
        x = v;
    }
    return t;
}

std::size_t Tensor::rows() const {
    require(rank() == 2, "rows() requires a rank-2 tensor, got shape ", shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    require(rank() == 2, "cols() requires a rank-2 tensor, got shape ", shape_str());
    return shape_[1];
}

double Tensor::scalar_value() const {
    require(data_.size() == 1, "scalar_value() on tensor of shape ", shape_str());
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i > 0) {
            s += "x";
        }
        s += std::to_string(shape_[i]);
    }
    s += "]";
    return s;
}

}  // namespace pointfield::ad
