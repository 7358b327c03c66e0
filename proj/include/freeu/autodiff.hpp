// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "freeu/tensor.hpp"

namespace freeu {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, zero-initialized, same shape as value
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();
};

}  // namespace detail

/// Handle to a value in the computation graph. Copies share the node.
///
/// Graphs are single-owner: one thread builds, evaluates and differentiates a
/// graph. Nodes only keep parent references when some input requires a
/// gradient, so inference over constant weights leaves no graph behind.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const noexcept { return static_cast<bool>(node_); }
    const char* op_name() const { return node_->op; }

    /// Gradient accumulated by backward(); zeros before any backward pass.
    const Tensor& grad() const;
    void zero_grad();

    /// Replaces the value in place (optimizer updates); shape must not change.
    void assign(Tensor value);

    detail::Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<detail::Node>& shared() const noexcept { return node_; }

    static Var from_op(Tensor value, const char* op, std::vector<Var> parents,
                       std::function<void(detail::Node&)> backward);

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

/// Reverse-mode accumulation from a single-element loss. d(loss)/d(loss) = 1.
void backward(const Var& loss);

namespace ops {

enum class Resample { kDown2Avg, kUp2Nearest };

/// Cross-correlation; weight [C_out,C_in,k,k] with odd k, bias [C_out].
Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride = 1, int padding = 0);

/// Elementwise add/mul. `b` may equal `a` in shape or be a per-channel operand
/// of shape [C], [1,C,1,1] or [N,C,1,1] broadcast over an [N,C,H,W] `a`.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);
Var silu(const Var& a);

Var group_norm(const Var& input, int groups, const Var& gamma, const Var& beta, float eps = 1e-5f);
Var resample(const Var& input, Resample mode);
Var concat_channels(const Var& a, const Var& b);

/// y[N,out] = x[N,in] * weight[out,in]^T + bias[out].
Var linear(const Var& x, const Var& weight, const Var& bias);
Var reshape(const Var& a, Shape shape);

Var sum(const Var& a);
Var mean(const Var& a);
/// mean((a - b)^2) over all elements.
Var mse(const Var& a, const Var& b);

}  // namespace ops

}  // namespace freeu
