// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "freeu/autodiff.hpp"

namespace freeu {

struct AdamOptions {
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Adam over a fixed, ordered parameter list. Moments are exposed so a
/// checkpoint can restore the optimizer exactly.
class Adam {
public:
    Adam(std::vector<Var> params, AdamOptions options = {});

    void zero_grad();
    void step();

    std::int64_t steps_taken() const noexcept { return step_; }
    std::vector<Tensor>& first_moments() noexcept { return m_; }
    std::vector<Tensor>& second_moments() noexcept { return v_; }
    const std::vector<Tensor>& first_moments() const noexcept { return m_; }
    const std::vector<Tensor>& second_moments() const noexcept { return v_; }
    void restore(std::int64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    std::vector<Var> params_;
    AdamOptions opt_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t step_ = 0;
};

}  // namespace freeu
