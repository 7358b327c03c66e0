// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "freeu/tensor.hpp"

namespace freeu {

/// Decoder-stage features captured at one sampling step.
struct StageSnapshot {
    int stage = 0;
    Tensor backbone;      // x_l before modulation
    Tensor skip;          // h_l before modulation
    Tensor backbone_mod;  // x_l' fed to the concat
    Tensor skip_mod;      // h_l'
    Tensor fused;         // output of the channel-reducing conv after the concat
};

struct TrajectoryStep {
    int t = 0;       // step index, T..1
    Tensor x_t;      // state entering this step [N,C,H,W]
    Tensor x0_pred;  // clean estimate implied by the predicted noise
    std::vector<StageSnapshot> stages;
};

/// One entry per executed sampling step, in execution order (t strictly decreasing).
struct TrajectoryRecord {
    std::vector<TrajectoryStep> steps;
};

}  // namespace freeu
