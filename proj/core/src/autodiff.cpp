// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace pointfield::ad {

// Friend of Tape; the only way ops append nodes.
class OpBuilder {
public:
    static std::uint32_t next_id(const Tape& tape) {
        return static_cast<std::uint32_t>(tape.nodes_.size());
    }
    static Var make(Tape& tape, Tensor value, std::function<void(Tape&)> backprop) {
        return tape.push(std::move(value), true, std::move(backprop));
    }
};

namespace {

void check_same_tape(Var a, Var b, const char* op) {
    require(a.valid() && b.valid(), op, ": unbound Var");
    require(a.tape() == b.tape(), op, ": operands live on different tapes");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.same_shape(b), op, ": shape mismatch ", a.shape_str(), " vs ", b.shape_str());
}

// out[m x n] += a[m x k] * b[k x n], row-major i-k-j order.
void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
              std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) {
                continue;
            }
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
}

// out[m x k] += c[m x n] * b[k x n]^T
void gemm_nt_acc(const double* c, const double* b, double* out, std::size_t m, std::size_t n,
                 std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* crow = c + i * n;
        double* orow = out + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += crow[j] * brow[j];
            }
            orow[p] += acc;
        }
    }
}

// out[k x n] += a[m x k]^T * c[m x n]
void gemm_tn_acc(const double* a, const double* c, double* out, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) {
                continue;
            }
            double* orow = out + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * crow[j];
            }
        }
    }
}

// Wraps an accumulation body so it only runs when this node's gradient was
// actually written during the sweep.
template <class Fn>
std::function<void(Tape&)> backprop_of(std::uint32_t self, Fn fn) {
    return [self, fn](Tape& tape) {
        const Tensor* g = grad_if_any(tape, self);
        if (g != nullptr) {
            fn(tape, *g);
        }
    };
}

}  // namespace

const Tensor& Var::value() const {
    require(valid(), "Var::value on unbound Var");
    return tape_->value(id_);
}

Tensor Var::grad() const {
    require(valid(), "Var::grad on unbound Var");
    return tape_->grad(id_);
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
    require(value.all_finite(), "tape op produced non-finite values");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::input(Tensor value) { return push(std::move(value), true, {}); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

void Tape::backward(Var loss) {
    require(loss.valid() && loss.tape() == this, "backward: loss not on this tape");
    const Node& loss_node = nodes_[loss.id()];
    require(loss_node.value.size() == 1, "backward: loss must be scalar, got shape ",
            loss_node.value.shape_str());
    grad_buffer(*this, loss.id())[0] = 1.0;
    for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (node.backprop && !node.grad.empty()) {
            node.backprop(*this);
        }
    }
}

Tensor Tape::grad(std::uint32_t id) const {
    require(id < nodes_.size(), "grad: node ", id, " out of range");
    const Node& node = nodes_[id];
    if (node.grad.empty()) {
        return Tensor::zeros_like(node.value);
    }
    return node.grad;
}

void Tape::reset() { nodes_.clear(); }

Tensor& grad_buffer(Tape& tape, std::uint32_t id) {
    Tape::Node& node = tape.nodes_[id];
    if (node.grad.empty()) {
        node.grad = Tensor::zeros_like(node.value);
    }
    return node.grad;
}

const Tensor* grad_if_any(const Tape& tape, std::uint32_t id) {
    const Tape::Node& node = tape.nodes_[id];
    return node.grad.empty() ? nullptr : &node.grad;
}

bool wants_grad(const Tape& tape, std::uint32_t id) { return tape.nodes_[id].requires_grad; }

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_same_shape(av, bv, "add");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id(), ib = b.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, std::move(out),
                           backprop_of(self, [ia, ib](Tape& t, const Tensor& g) {
                               if (wants_grad(t, ia)) {
                                   Tensor& ga = grad_buffer(t, ia);
                                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                               }
                               if (wants_grad(t, ib)) {
                                   Tensor& gb = grad_buffer(t, ib);
                                   for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                               }
                           }));
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_same_shape(av, bv, "sub");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= bv[i];
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id(), ib = b.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, std::move(out),
                           backprop_of(self, [ia, ib](Tape& t, const Tensor& g) {
                               if (wants_grad(t, ia)) {
                                   Tensor& ga = grad_buffer(t, ia);
                                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                               }
                               if (wants_grad(t, ib)) {
                                   Tensor& gb = grad_buffer(t, ib);
                                   for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                               }
                           }));
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_same_shape(av, bv, "mul");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= bv[i];
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id(), ib = b.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out), backprop_of(self, [ia, ib](Tape& t, const Tensor& g) {
            const Tensor& av = t.value(ia);
            const Tensor& bv = t.value(ib);
            if (wants_grad(t, ia)) {
                Tensor& ga = grad_buffer(t, ia);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (wants_grad(t, ib)) {
                Tensor& gb = grad_buffer(t, ib);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        }));
}

Var scale(Var a, double c) {
    require(a.valid(), "scale: unbound Var");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= c;
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, std::move(out),
                           backprop_of(self, [ia, c](Tape& t, const Tensor& g) {
                               if (wants_grad(t, ia)) {
                                   Tensor& ga = grad_buffer(t, ia);
                                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                               }
                           }));
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_rowvec(Var a, Var row) {
    check_same_tape(a, row, "add_rowvec");
    const Tensor& av = a.value();
    const Tensor& rv = row.value();
    require(av.rank() == 2 && rv.rank() == 2 && rv.rows() == 1 && rv.cols() == av.cols(),
            "add_rowvec: shape mismatch ", av.shape_str(), " vs ", rv.shape_str());
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out = av;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] += rv[j];
        }
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id(), ir = row.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out), backprop_of(self, [ia, ir, m, n](Tape& t, const Tensor& g) {
            if (wants_grad(t, ia)) {
                Tensor& ga = grad_buffer(t, ia);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (wants_grad(t, ir)) {
                Tensor& gr = grad_buffer(t, ir);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gr[j] += g[i * n + j];
                    }
                }
            }
        }));
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
            "matmul: incompatible shapes ", av.shape_str(), " vs ", bv.shape_str());
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out({m, n});
    gemm_acc(av.data(), bv.data(), out.data(), m, k, n);
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id(), ib = b.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out), backprop_of(self, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
            if (wants_grad(t, ia)) {
                gemm_nt_acc(g.data(), t.value(ib).data(), grad_buffer(t, ia).data(), m, n, k);
            }
            if (wants_grad(t, ib)) {
                gemm_tn_acc(t.value(ia).data(), g.data(), grad_buffer(t, ib).data(), m, k, n);
            }
        }));
}

namespace {

// Elementwise op whose local derivative is a function of the input and/or
// output values at the same position.
template <class FwdFn, class BwdFn>
Var unary_elementwise(Var a, const char* name, FwdFn fwd, BwdFn dfwd) {
    require(a.valid(), name, ": unbound Var");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = fwd(out[i]);
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, std::move(out),
                           backprop_of(self, [ia, self, dfwd](Tape& t, const Tensor& g) {
                               if (!wants_grad(t, ia)) {
                                   return;
                               }
                               const Tensor& x = t.value(ia);
                               const Tensor& y = t.value(self);
                               Tensor& ga = grad_buffer(t, ia);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   ga[i] += g[i] * dfwd(x[i], y[i]);
                               }
                           }));
}

}  // namespace

Var relu(Var a) {
    return unary_elementwise(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
    return unary_elementwise(
        a, "softplus", [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var sigmoid(Var a) {
    return unary_elementwise(
        a, "sigmoid",
        [](double x) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var square(Var a) {
    return unary_elementwise(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_positive(Var a) {
    return unary_elementwise(
        a, "sqrt_positive", [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
        [](double x, double y) { return x > 0.0 ? 0.5 / y : 0.0; });
}

Var sum(Var a) {
    require(a.valid(), "sum: unbound Var");
    const Tensor& av = a.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        acc += av[i];
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, Tensor::scalar(acc),
                           backprop_of(self, [ia](Tape& t, const Tensor& g) {
                               if (wants_grad(t, ia)) {
                                   Tensor& ga = grad_buffer(t, ia);
                                   for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                               }
                           }));
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    require(n > 0, "mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_cols(Var a) {
    require(a.valid(), "sum_cols: unbound Var");
    const Tensor& av = a.value();
    require(av.rank() == 2, "sum_cols: rank-2 required, got ", av.shape_str());
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += av[i * n + j];
        }
        out[i] = acc;
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, std::move(out),
                           backprop_of(self, [ia, m, n](Tape& t, const Tensor& g) {
                               if (wants_grad(t, ia)) {
                                   Tensor& ga = grad_buffer(t, ia);
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t j = 0; j < n; ++j) {
                                           ga[i * n + j] += g[i];
                                       }
                                   }
                               }
                           }));
}

Var maxpool_rows(Var a) {
    require(a.valid(), "maxpool_rows: unbound Var");
    const Tensor& av = a.value();
    require(av.rank() == 2 && av.rows() >= 1, "maxpool_rows: non-empty rank-2 required, got ",
            av.shape_str());
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out({1, n});
    std::vector<std::size_t> argmax(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        double best = av[j];
        std::size_t bi = 0;
        for (std::size_t i = 1; i < m; ++i) {
            const double v = av[i * n + j];
            if (v > best) {
                best = v;
                bi = i;
            }
        }
        out[j] = best;
        argmax[j] = bi;
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [ia, n, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
            if (wants_grad(t, ia)) {
                Tensor& ga = grad_buffer(t, ia);
                for (std::size_t j = 0; j < n; ++j) {
                    ga[argmax[j] * n + j] += g[j];
                }
            }
        }));
}

Var softmax_rows(Var a) {
    require(a.valid(), "softmax_rows: unbound Var");
    const Tensor& av = a.value();
    std::size_t m = 1, n = av.size();
    if (av.rank() == 2) {
        m = av.rows();
        n = av.cols();
    } else {
        require(av.rank() == 1, "softmax_rows: rank-1 or rank-2 required, got ", av.shape_str());
    }
    require(n >= 1, "softmax_rows: empty rows");
    Tensor out = av;
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) {
            mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            row[j] /= z;
        }
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out), backprop_of(self, [ia, self, m, n](Tape& t, const Tensor& g) {
            if (!wants_grad(t, ia)) {
                return;
            }
            const Tensor& y = t.value(self);
            Tensor& ga = grad_buffer(t, ia);
            for (std::size_t i = 0; i < m; ++i) {
                const double* yrow = y.data() + i * n;
                const double* grow = g.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    dot += yrow[j] * grow[j];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    ga[i * n + j] += yrow[j] * (grow[j] - dot);
                }
            }
        }));
}

Var repeat_row(Var row, std::size_t m) {
    require(row.valid(), "repeat_row: unbound Var");
    const Tensor& rv = row.value();
    require(rv.rank() == 2 && rv.rows() == 1, "repeat_row: [1 x n] required, got ",
            rv.shape_str());
    require(m >= 1, "repeat_row: m must be >= 1");
    const std::size_t n = rv.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(rv.data(), rv.data() + n, out.data() + i * n);
    }
    Tape& tape = *row.tape();
    const std::uint32_t ir = row.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, std::move(out),
                           backprop_of(self, [ir, m, n](Tape& t, const Tensor& g) {
                               if (wants_grad(t, ir)) {
                                   Tensor& gr = grad_buffer(t, ir);
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t j = 0; j < n; ++j) {
                                           gr[j] += g[i * n + j];
                                       }
                                   }
                               }
                           }));
}

Var concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols: no operands");
    Tape& tape = *parts[0].tape();
    const std::size_t m = parts[0].value().rows();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require(p.tape() == &tape, "concat_cols: operands live on different tapes");
        require(p.value().rank() == 2 && p.value().rows() == m,
                "concat_cols: row count mismatch ", p.value().shape_str());
        total += p.value().cols();
    }
    Tensor out({m, total});
    std::size_t col0 = 0;
    std::vector<std::uint32_t> ids;
    std::vector<std::size_t> widths;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        const std::size_t n = v.cols();
        for (std::size_t i = 0; i < m; ++i) {
            std::copy(v.data() + i * n, v.data() + (i + 1) * n, out.data() + i * total + col0);
        }
        col0 += n;
        ids.push_back(p.id());
        widths.push_back(n);
    }
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [ids = std::move(ids), widths = std::move(widths), m,
                           total](Tape& t, const Tensor& g) {
            std::size_t col0 = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                const std::size_t n = widths[k];
                if (wants_grad(t, ids[k])) {
                    Tensor& gp = grad_buffer(t, ids[k]);
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < n; ++j) {
                            gp[i * n + j] += g[i * total + col0 + j];
                        }
                    }
                }
                col0 += n;
            }
        }));
}

Var concat_rows(std::span<const Var> parts) {
    require(!parts.empty(), "concat_rows: no operands");
    Tape& tape = *parts[0].tape();
    const std::size_t n = parts[0].value().cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require(p.tape() == &tape, "concat_rows: operands live on different tapes");
        require(p.value().rank() == 2 && p.value().cols() == n,
                "concat_rows: column count mismatch ", p.value().shape_str());
        total += p.value().rows();
    }
    Tensor out({total, n});
    std::size_t row0 = 0;
    std::vector<std::uint32_t> ids;
    std::vector<std::size_t> heights;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        std::copy(v.data(), v.data() + v.size(), out.data() + row0 * n);
        row0 += v.rows();
        ids.push_back(p.id());
        heights.push_back(v.rows());
    }
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [ids = std::move(ids), heights = std::move(heights),
                           n](Tape& t, const Tensor& g) {
            std::size_t row0 = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (wants_grad(t, ids[k])) {
                    Tensor& gp = grad_buffer(t, ids[k]);
                    for (std::size_t i = 0; i < heights[k] * n; ++i) {
                        gp[i] += g[row0 * n + i];
                    }
                }
                row0 += heights[k];
            }
        }));
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
    require(a.valid(), "gather_rows: unbound Var");
    const Tensor& av = a.value();
    require(av.rank() == 2, "gather_rows: rank-2 required, got ", av.shape_str());
    const std::size_t n = av.cols();
    Tensor out({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < av.rows(), "gather_rows: index ", rows[i], " out of range for ",
                av.shape_str());
        std::copy(av.data() + rows[i] * n, av.data() + (rows[i] + 1) * n, out.data() + i * n);
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [ia, n, rows = std::move(rows)](Tape& t, const Tensor& g) {
            if (wants_grad(t, ia)) {
                Tensor& ga = grad_buffer(t, ia);
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        ga[rows[i] * n + j] += g[i * n + j];
                    }
                }
            }
        }));
}

Var scatter_rows(Var a, std::vector<std::size_t> rows, std::size_t m) {
    require(a.valid(), "scatter_rows: unbound Var");
    const Tensor& av = a.value();
    require(av.rank() == 2 && av.rows() == rows.size(), "scatter_rows: ", rows.size(),
            " indices for value of shape ", av.shape_str());
    const std::size_t n = av.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < m, "scatter_rows: index ", rows[i], " out of range for ", m, " rows");
        std::copy(av.data() + i * n, av.data() + (i + 1) * n, out.data() + rows[i] * n);
    }
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [ia, n, rows = std::move(rows)](Tape& t, const Tensor& g) {
            if (wants_grad(t, ia)) {
                Tensor& ga = grad_buffer(t, ia);
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        ga[i * n + j] += g[rows[i] * n + j];
                    }
                }
            }
        }));
}

Var as_vector(Var a) {
    require(a.valid(), "as_vector: unbound Var");
    const Tensor& av = a.value();
    require(av.rank() == 2 && av.cols() == 1, "as_vector: expected a column, got ",
            av.shape_str());
    Tensor out({av.rows()});
    std::copy(av.data(), av.data() + av.size(), out.data());
    Tape& tape = *a.tape();
    const std::uint32_t ia = a.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(tape, std::move(out),
                           backprop_of(self, [ia](Tape& t, const Tensor& g) {
                               if (wants_grad(t, ia)) {
                                   Tensor& ga = grad_buffer(t, ia);
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       ga[i] += g[i];
                                   }
                               }
                           }));
}

namespace {

void check_offsets(const std::vector<std::size_t>& offsets, std::size_t n_rows, bool allow_empty,
                   const char* op) {
    require(offsets.size() >= 2, op, ": offsets needs at least two entries");
    require(offsets.front() == 0 && offsets.back() == n_rows, op, ": offsets must span [0, ",
            n_rows, ")");
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        require(offsets[s + 1] >= offsets[s], op, ": offsets must be non-decreasing");
        if (!allow_empty) {
            require(offsets[s + 1] > offsets[s], op, ": empty segment ", s);
        }
    }
}

}  // namespace

Var segment_softmax_aggregate(Var values, Var scores, std::vector<std::size_t> offsets) {
    check_same_tape(values, scores, "segment_softmax_aggregate");
    const Tensor& vv = values.value();
    const Tensor& sv = scores.value();
    check_same_shape(vv, sv, "segment_softmax_aggregate");
    require(vv.rank() == 2, "segment_softmax_aggregate: rank-2 required, got ", vv.shape_str());
    const std::size_t d = vv.cols();
    const std::size_t n_seg = offsets.size() - 1;
    check_offsets(offsets, vv.rows(), false, "segment_softmax_aggregate");

    Tensor weights({vv.rows(), d});  // per-dimension softmax weights, kept for backward
    Tensor out({n_seg, d});
    for (std::size_t s = 0; s < n_seg; ++s) {
        const std::size_t b = offsets[s], e = offsets[s + 1];
        for (std::size_t j = 0; j < d; ++j) {
            double mx = sv[b * d + j];
            for (std::size_t i = b + 1; i < e; ++i) {
                mx = std::max(mx, sv[i * d + j]);
            }
            double z = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                const double w = std::exp(sv[i * d + j] - mx);
                weights[i * d + j] = w;
                z += w;
            }
            double acc = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                weights[i * d + j] /= z;
                acc += weights[i * d + j] * vv[i * d + j];
            }
            out[s * d + j] = acc;
        }
    }

    Tape& tape = *values.tape();
    const std::uint32_t iv = values.id(), is = scores.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [iv, is, self, d, offsets = std::move(offsets),
                           weights = std::move(weights)](Tape& t, const Tensor& g) {
            const Tensor& vv = t.value(iv);
            const Tensor& out = t.value(self);
            const bool want_v = wants_grad(t, iv);
            const bool want_s = wants_grad(t, is);
            if (!want_v && !want_s) {
                return;
            }
            Tensor* gv = want_v ? &grad_buffer(t, iv) : nullptr;
            Tensor* gs = want_s ? &grad_buffer(t, is) : nullptr;
            for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                for (std::size_t j = 0; j < d; ++j) {
                    const double go = g[s * d + j];
                    if (go == 0.0) {
                        continue;
                    }
                    const double f = out[s * d + j];
                    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
                        const double w = weights[i * d + j];
                        if (gv != nullptr) {
                            (*gv)[i * d + j] += go * w;
                        }
                        if (gs != nullptr) {
                            (*gs)[i * d + j] += go * w * (vv[i * d + j] - f);
                        }
                    }
                }
            }
        }));
}

std::vector<double> composite_weights(std::span<const double> sigma,
                                      std::span<const double> delta) {
    require(sigma.size() == delta.size(), "composite_weights: length mismatch ", sigma.size(),
            " vs ", delta.size());
    std::vector<double> w(sigma.size());
    double transmittance = 1.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        require(sigma[i] >= 0.0, "composite_weights: negative density at ", i);
        require(delta[i] > 0.0, "composite_weights: non-positive delta at ", i);
        const double absorb = std::exp(-sigma[i] * delta[i]);
        w[i] = transmittance * (1.0 - absorb);
        transmittance *= absorb;
    }
    return w;
}

namespace {

struct CompositeCtx {
    std::vector<std::size_t> offsets;
    std::vector<double> delta;
    std::vector<double> weights;       // w_i per row
    std::vector<double> transmit_exp;  // T_i * exp(-sigma_i delta_i) per row
};

CompositeCtx composite_forward(const Tensor& sigma, const std::vector<double>& delta,
                               std::vector<std::size_t> offsets, const char* op) {
    require(sigma.rank() == 1, op, ": sigma must be rank-1, got ", sigma.shape_str());
    require(delta.size() == sigma.size(), op, ": delta length ", delta.size(),
            " vs sigma length ", sigma.size());
    check_offsets(offsets, sigma.size(), true, op);
    CompositeCtx ctx;
    ctx.offsets = std::move(offsets);
    ctx.delta = delta;
    ctx.weights.resize(sigma.size());
    ctx.transmit_exp.resize(sigma.size());
    for (std::size_t s = 0; s + 1 < ctx.offsets.size(); ++s) {
        double transmittance = 1.0;
        for (std::size_t i = ctx.offsets[s]; i < ctx.offsets[s + 1]; ++i) {
            require(sigma[i] >= 0.0, op, ": negative density at row ", i);
            require(delta[i] > 0.0, op, ": non-positive delta at row ", i);
            const double absorb = std::exp(-sigma[i] * delta[i]);
            ctx.weights[i] = transmittance * (1.0 - absorb);
            ctx.transmit_exp[i] = transmittance * absorb;
            transmittance *= absorb;
        }
    }
    return ctx;
}

}  // namespace

Var composite_segments(Var sigma, Var values, const std::vector<double>& delta,
                       std::vector<std::size_t> offsets) {
    check_same_tape(sigma, values, "composite_segments");
    const Tensor& sv = sigma.value();
    const Tensor& vv = values.value();
    require(vv.rank() == 2 && vv.rows() == sv.size(), "composite_segments: values ",
            vv.shape_str(), " vs sigma length ", sv.size());
    const std::size_t d = vv.cols();
    CompositeCtx ctx = composite_forward(sv, delta, std::move(offsets), "composite_segments");
    const std::size_t n_seg = ctx.offsets.size() - 1;

    Tensor out({n_seg, d});
    for (std::size_t s = 0; s < n_seg; ++s) {
        for (std::size_t i = ctx.offsets[s]; i < ctx.offsets[s + 1]; ++i) {
            const double w = ctx.weights[i];
            for (std::size_t j = 0; j < d; ++j) {
                out[s * d + j] += w * vv[i * d + j];
            }
        }
    }

    Tape& tape = *sigma.tape();
    const std::uint32_t isg = sigma.id(), iv = values.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [isg, iv, d, ctx = std::move(ctx)](Tape& t, const Tensor& g) {
            const Tensor& vv = t.value(iv);
            if (wants_grad(t, iv)) {
                Tensor& gv = grad_buffer(t, iv);
                for (std::size_t s = 0; s + 1 < ctx.offsets.size(); ++s) {
                    for (std::size_t i = ctx.offsets[s]; i < ctx.offsets[s + 1]; ++i) {
                        for (std::size_t j = 0; j < d; ++j) {
                            gv[i * d + j] += g[s * d + j] * ctx.weights[i];
                        }
                    }
                }
            }
            if (wants_grad(t, isg)) {
                Tensor& gs = grad_buffer(t, isg);
                // d out_j / d sigma_k = delta_k * (T_k e^{-sigma_k delta_k} v_kj
                //                                  - sum_{i>k} w_i v_ij)
                std::vector<double> suffix(d);
                for (std::size_t s = 0; s + 1 < ctx.offsets.size(); ++s) {
                    std::fill(suffix.begin(), suffix.end(), 0.0);
                    const std::size_t b = ctx.offsets[s], e = ctx.offsets[s + 1];
                    for (std::size_t i = e; i-- > b;) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                            acc += g[s * d + j] *
                                   (ctx.transmit_exp[i] * vv[i * d + j] - suffix[j]);
                        }
                        gs[i] += ctx.delta[i] * acc;
                        for (std::size_t j = 0; j < d; ++j) {
                            suffix[j] += ctx.weights[i] * vv[i * d + j];
                        }
                    }
                }
            }
        }));
}

Var alpha_segments(Var sigma, const std::vector<double>& delta,
                   std::vector<std::size_t> offsets) {
    require(sigma.valid(), "alpha_segments: unbound Var");
    const Tensor& sv = sigma.value();
    CompositeCtx ctx = composite_forward(sv, delta, std::move(offsets), "alpha_segments");
    const std::size_t n_seg = ctx.offsets.size() - 1;
    Tensor out({n_seg});
    for (std::size_t s = 0; s < n_seg; ++s) {
        double acc = 0.0;
        for (std::size_t i = ctx.offsets[s]; i < ctx.offsets[s + 1]; ++i) {
            acc += ctx.weights[i];
        }
        out[s] = acc;
    }
    Tape& tape = *sigma.tape();
    const std::uint32_t isg = sigma.id();
    const std::uint32_t self = OpBuilder::next_id(tape);
    return OpBuilder::make(
        tape, std::move(out),
        backprop_of(self, [isg, ctx = std::move(ctx)](Tape& t, const Tensor& g) {
            if (!wants_grad(t, isg)) {
                return;
            }
            // alpha_s = 1 - prod_i exp(-sigma_i delta_i), so
            // d alpha_s / d sigma_k = delta_k * (remaining transmittance).
            Tensor& gs = grad_buffer(t, isg);
            for (std::size_t s = 0; s + 1 < ctx.offsets.size(); ++s) {
                const std::size_t b = ctx.offsets[s], e = ctx.offsets[s + 1];
                if (b == e) {
                    continue;
                }
                const double t_end = ctx.transmit_exp[e - 1];
                for (std::size_t i = b; i < e; ++i) {
                    gs[i] += g[s] * ctx.delta[i] * t_end;
                }
            }
        }));
}

}  // namespace pointfield::ad
