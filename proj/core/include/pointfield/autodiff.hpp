// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pointfield/tensor.hpp"

namespace pointfield::ad {

class Tape;

// Lightweight handle to a tape node. Valid until the owning tape is reset.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    std::uint32_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Tensor& value() const;
    Tensor grad() const;

private:
    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

// Single-writer record of forward operations. Node creation order is a
// topological order, so backward() is one reverse sweep that touches each
// node exactly once. Gradients accumulate additively; nodes never written
// to stay empty and read back as zeros.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf that participates in gradient accumulation.
    Var input(Tensor value);
    // Leaf treated as fixed data; accumulation into it is skipped.
    Var constant(Tensor value);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. The loss must
    // be a single-element tensor recorded on this tape.
    void backward(Var loss);

    const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
    // Gradient of the last backward() w.r.t. node `id`; zeros if untouched.
    Tensor grad(std::uint32_t id) const;

    std::size_t node_count() const { return nodes_.size(); }
    void reset();

private:
    friend class OpBuilder;
    friend Tensor& grad_buffer(Tape&, std::uint32_t);
    friend const Tensor* grad_if_any(const Tape&, std::uint32_t);
    friend bool wants_grad(const Tape&, std::uint32_t);

    struct Node {
        Tensor value;
        Tensor grad;          // lazily sized on first accumulation
        bool requires_grad = true;
        std::function<void(Tape&)> backprop;  // empty for leaves
    };

    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);

    std::vector<Node> nodes_;
};

// --- accumulation helpers used by op backward closures -----------------------

Tensor& grad_buffer(Tape& tape, std::uint32_t id);
const Tensor* grad_if_any(const Tape& tape, std::uint32_t id);
bool wants_grad(const Tape& tape, std::uint32_t id);

// --- forward kernels ---------------------------------------------------------

Var add(Var a, Var b);             // elementwise, equal shapes
Var sub(Var a, Var b);
Var mul(Var a, Var b);             // Hadamard, equal shapes
Var scale(Var a, double c);
Var neg(Var a);
Var add_rowvec(Var a, Var row);    // [m x n] + [1 x n] broadcast over rows
Var matmul(Var a, Var b);          // [m x k] * [k x n]

Var relu(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var sqrt_positive(Var a);          // d/dx at 0 treated as 0

Var sum(Var a);                    // all elements -> scalar
Var mean(Var a);
Var sum_cols(Var a);               // [m x n] -> [m x 1]
Var maxpool_rows(Var a);           // [m x n] -> [1 x n]; ties go to the first row
Var softmax_rows(Var a);           // per-row softmax, [m x n] or rank-1

Var repeat_row(Var row, std::size_t m);       // [1 x n] -> [m x n]
Var concat_cols(std::span<const Var> parts);  // equal row counts
Var concat_rows(std::span<const Var> parts);  // equal col counts
Var gather_rows(Var a, std::vector<std::size_t> rows);
// Place rows of `a` at `rows` within an [m x n] zero tensor; indices distinct.
Var scatter_rows(Var a, std::vector<std::size_t> rows, std::size_t m);
Var as_vector(Var a);              // [m x 1] column -> rank-1 [m]

// Per-dimension softmax over each segment of `scores`, Hadamard-weighted sum
// of `values`: out[s][d] = sum_i softmax_d(scores[seg s])[i] * values[i][d].
// `offsets` has S+1 entries; segment s covers rows [offsets[s], offsets[s+1]).
// Every segment must be non-empty.
Var segment_softmax_aggregate(Var values, Var scores, std::vector<std::size_t> offsets);

// Emission-absorption quadrature per segment. For rows i inside a segment,
// w_i = T_i * (1 - exp(-sigma_i * delta_i)) with T_i the product of
// exp(-sigma_j * delta_j) over preceding rows of that segment.
// composite_segments: [S x d] feature sums; alpha_segments: [S] weight sums.
// `delta` is fixed sampling geometry and gets no gradient.
Var composite_segments(Var sigma, Var values, const std::vector<double>& delta,
                       std::vector<std::size_t> offsets);
Var alpha_segments(Var sigma, const std::vector<double>& delta,
                   std::vector<std::size_t> offsets);

// Plain (non-tape) compositing weights, shared with tests and benches.
std::vector<double> composite_weights(std::span<const double> sigma,
                                      std::span<const double> delta);

}  // namespace pointfield::ad
