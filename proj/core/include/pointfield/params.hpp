// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pointfield/autodiff.hpp"
#include "pointfield/rng.hpp"
#include "pointfield/tensor.hpp"

namespace pointfield::ad {

// Ordered collection of named parameter tensors plus a free-form string
// metadata map. The insertion order is the serialization order, so a set
// built the same way always round-trips byte-for-byte.
class ParamSet {
public:
    Tensor& add(std::string name, Tensor init);

    // He-style fan-in scaled Gaussian init for a [fan_in x fan_out] weight.
    Tensor& add_linear(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                       Rng& rng);
    // Zero-initialised [1 x n] bias row.
    Tensor& add_bias(const std::string& name, std::size_t n);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::size_t count() const { return entries_.size(); }
    const std::string& name_at(std::size_t i) const { return entries_[i].first; }
    Tensor& tensor_at(std::size_t i) { return entries_[i].second; }
    const Tensor& tensor_at(std::size_t i) const { return entries_[i].second; }

    std::size_t total_values() const;

    std::map<std::string, std::string>& meta() { return meta_; }
    const std::map<std::string, std::string>& meta() const { return meta_; }

    // Binary checkpoint with a version header; see params.cpp for the layout.
    void save(const std::string& path) const;
    static ParamSet load(const std::string& path);

    // Metadata value parsed as a number; missing or malformed -> ParseError.
    double meta_number(const std::string& key) const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::map<std::string, std::string> meta_;
};

// One forward pass worth of tape bindings for a ParamSet. Every parameter is
// recorded as a gradient-accumulating leaf up front, so gradients can be read
// back by name after backward().
class BoundParams {
public:
    BoundParams(Tape& tape, const ParamSet& params);

    Var operator[](const std::string& name) const;
    Tensor grad(const std::string& name) const { return (*this)[name].grad(); }

    // Gradients in ParamSet order, for the optimizer.
    std::vector<Tensor> grads(const ParamSet& params) const;

private:
    std::unordered_map<std::string, Var> vars_;
};

}  // namespace pointfield::ad
