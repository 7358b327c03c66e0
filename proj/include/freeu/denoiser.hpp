// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "freeu/autodiff.hpp"
#include "freeu/rng.hpp"
#include "freeu/stage_hooks.hpp"

namespace freeu {

/// Inference-side noise predictor eps_theta(x_t, t).
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    /// [C,H,W] of one sample.
    virtual Shape sample_shape() const = 0;
    virtual Tensor predict(const Tensor& x_t, int t, const ForwardHooks& hooks) const = 0;
};

/// Training-side noise predictor with one step index per batch item.
class DifferentiableDenoiser {
public:
    virtual ~DifferentiableDenoiser() = default;
    virtual Var forward(const Var& x_t, const std::vector<int>& t) const = 0;
};

}  // namespace freeu
