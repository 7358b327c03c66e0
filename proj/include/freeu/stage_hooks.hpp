// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "freeu/tensor.hpp"

namespace freeu {

/// The (backbone, skip) pair meeting at decoder stage `stage` right before
/// they are concatenated. Stages are numbered from 1 at the coarsest level.
struct StageFeatures {
    int stage = 0;
    Tensor backbone;  // x_l [N,C,H,W]
    Tensor skip;      // h_l [N,C_s,H,W]
};

using StageModulator = std::function<StageFeatures(StageFeatures)>;

/// Everything observed at one concat site during a forward pass.
struct StageTapEvent {
    int stage;
    const Tensor& backbone;
    const Tensor& skip;
    const Tensor& backbone_mod;
    const Tensor& skip_mod;
    const Tensor& fused;
};

using StageTap = std::function<void(const StageTapEvent&)>;

/// Optional interception points for an inference forward pass.
struct ForwardHooks {
    StageModulator modulator;  // identity when empty
    StageTap tap;              // not called when empty
};

}  // namespace freeu
