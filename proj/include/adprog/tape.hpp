#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "adprog/tensor.hpp"

namespace adprog::num {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    std::int32_t index = -1;
    bool valid() const { return index >= 0; }
};

// Reverse-mode automatic differentiation tape. Nodes are recorded in the
// order they are created, which is a topological order of the DAG, so the
// backward pass is a single reverse sweep that touches each node once.
//
// Broadcasting rule: add/mul accept a right operand whose shape is a strict
// suffix of the left operand's shape (bias over leading dims); everything
// else requires exact shapes. matmul accepts a rank-2 right operand as
// shared weights for a batched left operand.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var matmul(Var a, Var b);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var softmax(Var a, int axis);
    Var log_softmax(Var a, int axis);
    // Normalizes the last axis to zero mean / unit variance, then applies the
    // per-channel affine (gain, bias). Epsilon 1e-12.
    Var layer_norm(Var x, Var gain, Var bias);
    // Deterministic dropout: the kept/dropped mask depends only on
    // (seed, layer, step) and the element index, never on global state.
    Var dropout(Var x, double p, bool train, std::uint64_t seed, std::uint64_t layer,
                std::uint64_t step);
    Var concat(const std::vector<Var>& xs, int axis);
    Var slice(Var x, int axis, std::int64_t start, std::int64_t len);
    Var embedding_lookup(Var table, const std::vector<std::int64_t>& ids);
    // mask has exactly x.numel() entries; nonzero entries are replaced by
    // fill_value and receive zero gradient.
    Var masked_fill(Var x, std::shared_ptr<const std::vector<std::uint8_t>> mask,
                    double fill_value);
    Var transpose(Var x, int axis_a, int axis_b);
    Var reshape(Var x, std::vector<std::int64_t> new_shape);
    // Prepends a new leading dimension of size n; gradient sums over it.
    Var expand_leading(Var x, std::int64_t n);
    Var sum(Var x);
    Var mean(Var x);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse creation
    // order. Returns the number of nodes whose backward hook ran.
    std::size_t backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[check(v)]->value; }
    // Gradient of the last backward() target w.r.t. v. Zero tensor when v
    // did not participate.
    const Tensor& grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily, same shape as value
        bool requires_grad = false;
        bool grad_ready = false;
        std::function<void()> backprop;  // may be empty (leaf)
    };

    std::size_t check(Var v) const;
    Node& node(Var v) { return *nodes_[check(v)]; }
    const Node& node(Var v) const { return *nodes_[check(v)]; }
    Tensor& grad_buf(Var v);
    Var make(Tensor value, bool requires_grad);

    std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace adprog::num
