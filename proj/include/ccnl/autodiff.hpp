#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "ccnl/parameter.hpp"
#include "ccnl/tensor.hpp"

namespace ccnl {

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Minimal reverse-mode tape. Nodes are appended in evaluation order, so a
// reverse sweep is a valid topological order. Parameters enter as leaves whose
// gradient storage *is* Parameter::grad, so backward accumulates in place.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    // With gradients disabled, parameters are read-only inputs and no
    // backward closures are kept.
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var input(const Tensor& value);
    Var param(Parameter& p);
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
    Var record(Tensor value, std::span<const Var> inputs, Backward backward);

    const Tensor& value(Var v) const { return node(v).value(); }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    Tensor& grad(Var v);

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(root)/d(root) = 1; root must hold a single value.
    void backward(Var root);

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor owned_grad;
        Tensor* external_grad = nullptr;
        Backward backward;
        bool requires_grad = false;

        const Tensor& value() const { return external ? *external : owned; }
    };

    const Node& node(Var v) const { return nodes_[v.id]; }
    Var push(Node n);

    bool grad_enabled_;
    std::deque<Node> nodes_;
};

namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);
/// a [n, m] + b [m] broadcast over rows.
Var add_bias(Var a, Var b);
Var matmul(Var a, Var b);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// Elementwise product with a fixed tensor (dropout masks).
Var mul_const(Var a, const Tensor& mask);

Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var row(Var a, std::size_t r);
Var stack_rows(std::span<const Var> rows);
Var concat_cols(std::span<const Var> parts);
Var reshape(Var a, Shape shape);
/// Mean over rows: [n, m] -> [1, m].
Var mean_rows(Var a);
Var sum(Var a);

/// Row-wise softmax of a rank-2 tensor.
Var softmax_rows(Var a);
/// Row-wise squash g(s) = |s|^2 / (1 + |s|^2) * s / |s|; g(0) = 0.
Var squash_rows(Var a);

/// -log softmax(logits)[label] for logits of shape [1, C]; result is [1].
Var cross_entropy_with_logits(Var logits, std::size_t label);

/// Row gather from an embedding table. Gradients accumulate into the looked-up
/// rows of table.grad only, and not at all when `trainable` is false.
Var gather_rows(Tape& tape, Parameter& table, std::span<const std::size_t> ids, bool trainable);

}  // namespace ad
}  // namespace ccnl
