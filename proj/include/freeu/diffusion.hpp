// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "freeu/autodiff.hpp"
#include "freeu/denoiser.hpp"
#include "freeu/rng.hpp"
#include "freeu/trajectory.hpp"

namespace freeu {

enum class ScheduleKind { kLinear };

/// Variance schedule with 1-based step accessors (t in [1, T]).
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    /// Model timestep queried at each step; identity unless respaced.
    std::vector<int> model_t;

    int model_t_at(int t) const { return model_t.at(static_cast<std::size_t>(t - 1)); }
    double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }
    double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t - 1)); }
    double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<std::size_t>(t - 1)); }
};

/// Linear beta from beta_start to beta_end inclusive, with cumulative products.
NoiseSchedule make_schedule(ScheduleKind kind, int steps, double beta_start, double beta_end);
/// Schedule from explicit betas (0 < beta < 1, non-decreasing).
NoiseSchedule schedule_from_betas(std::vector<double> betas);
/// Keeps `count` evenly spaced steps of `base` (always including T) and
/// recomputes betas so the kept cumulative products are unchanged.
NoiseSchedule respace(const NoiseSchedule& base, int count);

/// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule);

/// Noise-prediction MSE on a batch [N,C,H,W]: per item t ~ U{1..T} then eps ~ N(0, I).
Var training_loss(const DifferentiableDenoiser& model, const Tensor& x0, const NoiseSchedule& schedule, Rng& rng);

/// Sampling step failed numerically; `step()` is the model timestep that produced it.
class SamplingError : public NumericError {
public:
    SamplingError(int step, const std::string& what) : NumericError(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

struct RecordOptions {
    bool enabled = false;
    bool predictions = true;
    /// Stages whose features are stored on every `tap_stride`-th step (0 = none).
    std::vector<int> tap_stages;
    int tap_stride = 0;
};

struct SampleOptions {
    /// One seed per batch item: x_T and every per-step z of item j derive from seeds[j].
    std::vector<std::uint64_t> seeds{0};
    ForwardHooks hooks;
    RecordOptions record;
    /// Replaces the seeded x_T when set; shape [N, C, H, W].
    std::optional<Tensor> initial;
    /// Observer called with (t, x_t) before each step.
    std::function<void(int, const Tensor&)> on_step;
};

struct SampleResult {
    Tensor x0;
    std::optional<TrajectoryRecord> trajectory;
};

/// Initial noise x_T for a list of per-item seeds.
Tensor initial_noise(const Shape& sample_shape, std::span<const std::uint64_t> seeds);

/// Ancestral sampling x_T -> x_0 with fixed variance sigma_t^2 = beta_t and z = 0 at t = 1.
SampleResult sample(const NoisePredictor& model, const NoiseSchedule& schedule, const SampleOptions& options);

}  // namespace freeu
