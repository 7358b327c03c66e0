// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/adam.hpp"

#include <cmath>

namespace freeu {

Adam::Adam(std::vector<Var> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.shape()));
        v_.push_back(Tensor::zeros(p.shape()));
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(opt_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(opt_.beta2), static_cast<double>(step_));
    const auto lr_t = static_cast<float>(opt_.lr * std::sqrt(bc2) / bc1);
    const float eps_t = static_cast<float>(opt_.eps * std::sqrt(bc2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor value = params_[i].value();
        auto w = value.data();
        auto g = params_[i].grad().data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = opt_.beta1 * m[j] + (1.0f - opt_.beta1) * g[j];
            v[j] = opt_.beta2 * v[j] + (1.0f - opt_.beta2) * g[j] * g[j];
            w[j] -= lr_t * m[j] / (std::sqrt(v[j]) + eps_t);
        }
        params_[i].assign(std::move(value));
    }
}

void Adam::restore(std::int64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != params_.size() || v.size() != params_.size()) {
        throw ShapeError("Adam::restore: moment count does not match parameter count");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (m[i].shape() != params_[i].shape() || v[i].shape() != params_[i].shape()) {
            throw ShapeError("Adam::restore: moment shape mismatch for parameter " + std::to_string(i));
        }
    }
    step_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace freeu
