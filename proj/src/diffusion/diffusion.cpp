// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace freeu {

namespace {

// Stream ids under each item seed: 0 is x_T, t is the z drawn while leaving step t.
constexpr std::uint64_t kInitialStream = 0;

}  // namespace

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) throw std::invalid_argument("schedule: at least one step is required");
    for (std::size_t i = 0; i < betas.size(); ++i) {
        if (!(betas[i] > 0.0 && betas[i] < 1.0)) throw std::invalid_argument("schedule: beta must lie in (0, 1)");
        if (i > 0 && betas[i] < betas[i - 1]) throw std::invalid_argument("schedule: beta must be non-decreasing");
    }
    NoiseSchedule s;
    s.steps = static_cast<int>(betas.size());
    s.beta = std::move(betas);
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    double running = 1.0;
    for (std::size_t i = 0; i < s.beta.size(); ++i) {
        s.alpha[i] = 1.0 - s.beta[i];
        running *= s.alpha[i];
        s.alpha_bar[i] = running;
    }
    s.model_t.resize(s.beta.size());
    for (std::size_t i = 0; i < s.model_t.size(); ++i) s.model_t[i] = static_cast<int>(i) + 1;
    return s;
}

NoiseSchedule make_schedule(ScheduleKind kind, int steps, double beta_start, double beta_end) {
    if (kind != ScheduleKind::kLinear) throw std::invalid_argument("schedule: unsupported kind");
    if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("schedule: require 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    }
    return schedule_from_betas(std::move(betas));
}

NoiseSchedule respace(const NoiseSchedule& base, int count) {
    if (count < 1 || count > base.steps) {
        throw std::invalid_argument("respace: step count " + std::to_string(count) + " outside [1, " +
                                    std::to_string(base.steps) + "]");
    }
    if (count == base.steps) return base;
    std::vector<int> kept(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        // Spread kept steps so the last one is T and the first is as close to 1 as spacing allows.
        const double pos = static_cast<double>(base.steps) * (i + 1) / count;
        kept[static_cast<std::size_t>(i)] = std::max(1, static_cast<int>(std::lround(pos)));
    }
    NoiseSchedule s;
    s.steps = count;
    double prev = 1.0;
    for (int k : kept) {
        const double ab = base.alpha_bar_at(k);
        s.alpha_bar.push_back(ab);
        s.alpha.push_back(ab / prev);
        s.beta.push_back(1.0 - ab / prev);
        s.model_t.push_back(base.model_t_at(k));
        prev = ab;
    }
    return s;
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps) {
        throw std::out_of_range("forward_noise: step " + std::to_string(t) + " outside [1, " +
                                std::to_string(schedule.steps) + "]");
    }
    if (eps.shape() != x0.shape()) {
        throw ShapeError("forward_noise: noise " + to_string(eps.shape()) + " vs data " + to_string(x0.shape()));
    }
    const auto signal = static_cast<float>(std::sqrt(schedule.alpha_bar_at(t)));
    const auto noise = static_cast<float>(std::sqrt(1.0 - schedule.alpha_bar_at(t)));
    Tensor out(x0.shape());
    auto o = out.data();
    auto x = x0.data();
    auto e = eps.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = signal * x[i] + noise * e[i];
    return out;
}

Var training_loss(const DifferentiableDenoiser& model, const Tensor& x0, const NoiseSchedule& schedule, Rng& rng) {
    require_rank(x0, 4, "training_loss");
    const auto n = x0.dim(0);
    Shape item = x0.shape();
    item[0] = 1;
    std::vector<int> steps;
    std::vector<Tensor> noisy;
    std::vector<Tensor> noises;
    for (std::int64_t i = 0; i < n; ++i) {
        const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.steps)));
        Tensor eps = rng.normal_tensor(item);
        noisy.push_back(forward_noise(slice_batch(x0, i), t, eps, schedule));
        noises.push_back(std::move(eps));
        steps.push_back(t);
    }
    const Var pred = model.forward(Var(stack_batch(noisy)), steps);
    return ops::mse(pred, Var(stack_batch(noises)));
}

Tensor initial_noise(const Shape& sample_shape, std::span<const std::uint64_t> seeds) {
    std::vector<Tensor> items;
    Shape item{1};
    item.insert(item.end(), sample_shape.begin(), sample_shape.end());
    for (auto seed : seeds) items.push_back(Rng(seed).split(kInitialStream).normal_tensor(item));
    return stack_batch(items);
}

SampleResult sample(const NoisePredictor& model, const NoiseSchedule& schedule, const SampleOptions& options) {
    if (options.seeds.empty()) throw std::invalid_argument("sample: at least one seed is required");
    const Shape item_shape = model.sample_shape();
    Tensor x = options.initial ? *options.initial : initial_noise(item_shape, options.seeds);
    require_rank(x, 4, "sample");
    if (x.dim(0) != static_cast<std::int64_t>(options.seeds.size()) ||
        !std::equal(item_shape.begin(), item_shape.end(), x.shape().begin() + 1)) {
        throw ShapeError("sample: state " + to_string(x.shape()) + " does not match model sample shape " +
                         to_string(item_shape) + " for " + std::to_string(options.seeds.size()) + " seeds");
    }

    SampleResult result;
    if (options.record.enabled) result.trajectory.emplace();

    for (int t = schedule.steps; t >= 1; --t) {
        if (options.on_step) options.on_step(t, x);
        const RecordOptions& rec = options.record;
        const int index = schedule.steps - t;
        const bool tap_now = rec.enabled && rec.tap_stride > 0 && !rec.tap_stages.empty() && index % rec.tap_stride == 0;

        TrajectoryStep step;
        ForwardHooks hooks = options.hooks;
        if (tap_now) {
            hooks.tap = [&step, &rec, user = options.hooks.tap](const StageTapEvent& e) {
                if (user) user(e);
                if (std::find(rec.tap_stages.begin(), rec.tap_stages.end(), e.stage) == rec.tap_stages.end()) return;
                step.stages.push_back({e.stage, e.backbone, e.skip, e.backbone_mod, e.skip_mod, e.fused});
            };
        }
        const int model_t = schedule.model_t_at(t);
        Tensor eps;
        try {
            eps = model.predict(x, model_t, hooks);
        } catch (const SamplingError&) {
            throw;
        } catch (const NumericError& e) {
            throw SamplingError(model_t, std::string("sample: ") + e.what() + " at step " + std::to_string(model_t));
        }
        if (eps.shape() != x.shape()) throw ShapeError("sample: model output shape " + to_string(eps.shape()));
        if (!eps.all_finite()) throw SamplingError(model_t, "sample: non-finite noise prediction at step " + std::to_string(model_t));

        const double a = schedule.alpha_at(t), ab = schedule.alpha_bar_at(t), b = schedule.beta_at(t);
        if (rec.enabled) {
            step.t = model_t;
            step.x_t = x;
            if (rec.predictions) {
                const auto inv_signal = static_cast<float>(1.0 / std::sqrt(ab));
                const auto noise = static_cast<float>(std::sqrt(1.0 - ab));
                step.x0_pred = Tensor(x.shape());
                auto p = step.x0_pred.data();
                for (std::size_t i = 0; i < p.size(); ++i) p[i] = (x[i] - noise * eps[i]) * inv_signal;
            }
            result.trajectory->steps.push_back(std::move(step));
        }

        const auto inv_sqrt_alpha = static_cast<float>(1.0 / std::sqrt(a));
        const auto eps_coef = static_cast<float>(b / std::sqrt(1.0 - ab));
        const auto sigma = static_cast<float>(std::sqrt(b));
        auto xv = x.data();
        auto ev = eps.data();
        for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = inv_sqrt_alpha * (xv[i] - eps_coef * ev[i]);
        if (t > 1) {
            const std::size_t per = x.numel() / options.seeds.size();
            for (std::size_t j = 0; j < options.seeds.size(); ++j) {
                Rng z_rng = Rng(options.seeds[j]).split(static_cast<std::uint64_t>(t));
                for (std::size_t i = 0; i < per; ++i) xv[j * per + i] += sigma * z_rng.normal();
            }
        }
        if (!x.all_finite()) throw SamplingError(model_t, "sample: non-finite state after step " + std::to_string(model_t));
    }
    result.x0 = std::move(x);
    return result;
}

}  // namespace freeu
