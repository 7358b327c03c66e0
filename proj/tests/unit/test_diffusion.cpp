// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "freeu/diffusion.hpp"
#include "freeu/unet.hpp"
#include "test_util.hpp"

namespace freeu {
namespace {

using testing::random_tensor;

UNetConfig small_unet() {
    UNetConfig cfg;
    cfg.base_channels = 8;
    cfg.groups = 4;
    cfg.time_embed_dim = 16;
    cfg.image_size = 8;
    return cfg;
}

class ZeroPredictor final : public NoisePredictor {
public:
    explicit ZeroPredictor(Shape shape) : shape_(std::move(shape)) {}
    Shape sample_shape() const override { return shape_; }
    Tensor predict(const Tensor& x, int, const ForwardHooks&) const override { return Tensor(x.shape()); }

private:
    Shape shape_;
};

class FixedPredictor final : public NoisePredictor {
public:
    explicit FixedPredictor(Tensor eps) : eps_(std::move(eps)) {}
    Shape sample_shape() const override { return Shape(eps_.shape().begin() + 1, eps_.shape().end()); }
    Tensor predict(const Tensor&, int, const ForwardHooks&) const override { return eps_; }

private:
    Tensor eps_;
};

class NaNPredictor final : public NoisePredictor {
public:
    explicit NaNPredictor(int bad_t) : bad_t_(bad_t) {}
    Shape sample_shape() const override { return {1, 4, 4}; }
    Tensor predict(const Tensor& x, int t, const ForwardHooks&) const override {
        Tensor out(x.shape());
        if (t == bad_t_) out[3] = std::nanf("");
        return out;
    }

private:
    int bad_t_;
};

/// Recovers the injected noise exactly from x_t, given the clean batch.
class OracleDenoiser final : public DifferentiableDenoiser {
public:
    OracleDenoiser(Tensor x0, const NoiseSchedule& s) : x0_(std::move(x0)), s_(s) {}
    Var forward(const Var& x_t, const std::vector<int>& t) const override {
        Tensor out(x_t.shape());
        const std::size_t per = out.numel() / t.size();
        for (std::size_t n = 0; n < t.size(); ++n) {
            const double ab = s_.alpha_bar_at(t[n]);
            for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
                out[i] = static_cast<float>((x_t.value()[i] - std::sqrt(ab) * x0_[i]) / std::sqrt(1.0 - ab));
            }
        }
        return Var(out);
    }

private:
    Tensor x0_;
    const NoiseSchedule& s_;
};

class ZeroDenoiser final : public DifferentiableDenoiser {
public:
    Var forward(const Var& x_t, const std::vector<int>&) const override { return Var(Tensor(x_t.shape())); }
};

NoiseSchedule default_schedule() { return make_schedule(ScheduleKind::kLinear, 200, 1e-4, 0.02); }

TEST(Schedule, CumulativeProductExamples) {
    const NoiseSchedule s = schedule_from_betas({0.1, 0.2, 0.3, 0.4});
    const std::vector<double> expect{0.9, 0.72, 0.504, 0.3024};
    ASSERT_EQ(s.steps, 4);
    for (int t = 1; t <= 4; ++t) EXPECT_NEAR(s.alpha_bar_at(t), expect[static_cast<std::size_t>(t - 1)], 1e-12);
    const NoiseSchedule one = make_schedule(ScheduleKind::kLinear, 1, 0.1, 0.1);
    ASSERT_EQ(one.steps, 1);
    EXPECT_NEAR(one.alpha_bar_at(1), 0.9, 1e-12);
}

TEST(Schedule, LinearEndpointsAndMonotonicity) {
    const NoiseSchedule s = default_schedule();
    EXPECT_DOUBLE_EQ(s.beta_at(1), 1e-4);
    EXPECT_DOUBLE_EQ(s.beta_at(200), 0.02);
    for (int t = 2; t <= s.steps; ++t) {
        EXPECT_GE(s.beta_at(t), s.beta_at(t - 1));
        EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
    }
}

TEST(Schedule, FinalAlphaBarMatchesLongDoubleProduct) {
    const NoiseSchedule s = default_schedule();
    long double prod = 1.0L;
    for (int i = 0; i < 200; ++i) {
        const long double beta = 1e-4L + (0.02L - 1e-4L) * static_cast<long double>(i) / 199.0L;
        prod *= 1.0L - beta;
    }
    EXPECT_LE(std::abs(static_cast<long double>(s.alpha_bar_at(200)) - prod) / prod, 1e-5L);
    long double running = 1.0L;
    for (int t = 1; t <= 200; ++t) {
        running *= 1.0L - static_cast<long double>(s.beta_at(t));
        EXPECT_LE(std::abs(static_cast<long double>(s.alpha_bar_at(t)) - running) / running, 1e-6L);
    }
}

TEST(Schedule, RejectsOutOfRangeBounds) {
    EXPECT_THROW(make_schedule(ScheduleKind::kLinear, 0, 1e-4, 0.02), std::invalid_argument);
    EXPECT_THROW(make_schedule(ScheduleKind::kLinear, 10, 0.0, 0.02), std::invalid_argument);
    EXPECT_THROW(make_schedule(ScheduleKind::kLinear, 10, 0.03, 0.02), std::invalid_argument);
    EXPECT_THROW(make_schedule(ScheduleKind::kLinear, 10, 1e-4, 1.0), std::invalid_argument);
    EXPECT_THROW(schedule_from_betas({0.2, 0.1}), std::invalid_argument);
}

TEST(Schedule, RespacePreservesKeptCumulativeProducts) {
    const NoiseSchedule base = default_schedule();
    for (int count : {1, 7, 50, 100}) {
        const NoiseSchedule r = respace(base, count);
        ASSERT_EQ(r.steps, count);
        EXPECT_EQ(r.model_t_at(count), 200);
        double running = 1.0;
        for (int t = 1; t <= count; ++t) {
            running *= r.alpha_at(t);
            EXPECT_NEAR(running, r.alpha_bar_at(t), 1e-12);
            EXPECT_DOUBLE_EQ(r.alpha_bar_at(t), base.alpha_bar_at(r.model_t_at(t)));
            EXPECT_GT(r.beta_at(t), 0.0);
            EXPECT_LT(r.beta_at(t), 1.0);
            if (t > 1) {
                EXPECT_GT(r.model_t_at(t), r.model_t_at(t - 1));
            }
        }
    }
    const NoiseSchedule same = respace(base, 200);
    EXPECT_EQ(same.beta, base.beta);
    EXPECT_THROW(respace(base, 0), std::invalid_argument);
    EXPECT_THROW(respace(base, 201), std::invalid_argument);
}

TEST(ForwardNoise, ZeroNoiseAndZeroSignalLimits) {
    const NoiseSchedule s = default_schedule();
    const Tensor x0 = random_tensor({2, 1, 4, 4}, 1);
    const Tensor eps = random_tensor({2, 1, 4, 4}, 2);
    const Tensor zero({2, 1, 4, 4});
    for (int t : {1, 57, 200}) {
        const Tensor a = forward_noise(x0, t, zero, s);
        const Tensor b = forward_noise(zero, t, eps, s);
        for (std::size_t i = 0; i < x0.numel(); ++i) {
            EXPECT_FLOAT_EQ(a[i], static_cast<float>(std::sqrt(s.alpha_bar_at(t))) * x0[i]);
            EXPECT_FLOAT_EQ(b[i], static_cast<float>(std::sqrt(1.0 - s.alpha_bar_at(t))) * eps[i]);
        }
    }
}

TEST(ForwardNoise, RejectsBadStepAndShape) {
    const NoiseSchedule s = default_schedule();
    const Tensor x0({1, 1, 2, 2});
    EXPECT_THROW(forward_noise(x0, 0, x0, s), std::out_of_range);
    EXPECT_THROW(forward_noise(x0, 201, x0, s), std::out_of_range);
    EXPECT_THROW(forward_noise(x0, 5, Tensor({1, 1, 2, 3}), s), ShapeError);
}

TEST(ForwardNoise, MonteCarloVarianceMatchesSchedule) {
    const NoiseSchedule s = default_schedule();
    const Tensor zero({10000});
    for (int t : {10, 100, 200}) {
        const Tensor eps = Rng(500 + static_cast<std::uint64_t>(t)).normal_tensor({10000});
        const Tensor x = forward_noise(zero, t, eps, s);
        double mean = 0.0, sq = 0.0;
        for (float v : x.data()) mean += v;
        mean /= 10000.0;
        for (float v : x.data()) sq += (v - mean) * (v - mean);
        const double var = sq / 9999.0;
        EXPECT_NEAR(var / (1.0 - s.alpha_bar_at(t)), 1.0, 0.05) << "t=" << t;
    }
}

TEST(ForwardNoise, AlgebraicInversionRecoversData) {
    const NoiseSchedule s = default_schedule();
    const Tensor x0 = random_tensor({4, 1, 8, 8}, 3);
    const Tensor eps = random_tensor({4, 1, 8, 8}, 4);
    for (int t = 1; t <= s.steps; ++t) {
        const Tensor xt = forward_noise(x0, t, eps, s);
        const double ab = s.alpha_bar_at(t);
        float worst = 0.0f;
        for (std::size_t i = 0; i < x0.numel(); ++i) {
            const auto back = static_cast<float>((xt[i] - std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(ab));
            worst = std::max(worst, std::abs(back - x0[i]));
        }
        EXPECT_LE(worst, 1e-5f) << "t=" << t;
    }
}

TEST(TrainingLoss, OracleModelGivesZero) {
    const NoiseSchedule s = default_schedule();
    const Tensor x0 = random_tensor({8, 1, 4, 4}, 5);
    Rng rng(6);
    const OracleDenoiser oracle(x0, s);
    EXPECT_LE(training_loss(oracle, x0, s, rng).value()[0], 1e-10f);
}

TEST(TrainingLoss, ZeroModelGivesUnitLossOnAverage) {
    const NoiseSchedule s = default_schedule();
    const Tensor x0 = random_tensor({16, 1, 8, 8}, 7);
    Rng rng(8);
    const ZeroDenoiser zero;
    double total = 0.0;
    const int draws = 40;
    for (int i = 0; i < draws; ++i) total += training_loss(zero, x0, s, rng).value()[0];
    EXPECT_NEAR(total / draws, 1.0, 0.05);
}

TEST(TrainingLoss, BackwardReachesEveryWeight) {
    UNetModel model(small_unet(), 11);
    const NoiseSchedule s = default_schedule();
    const Tensor x0 = random_tensor({4, 1, 8, 8}, 12, 0.5f);
    Rng rng(13);
    const Var loss = training_loss(model, x0, s, rng);
    ASSERT_EQ(loss.value().numel(), 1u);
    backward(loss);
    for (const auto& [name, w] : model.weights()) {
        bool any = false;
        for (float g : w.grad().data()) any = any || g != 0.0f;
        EXPECT_TRUE(any) << name;
    }
}

TEST(Sample, ZeroModelFromZeroStateWithOneStepIsFixedPoint) {
    const ZeroPredictor model({1, 4, 4});
    SampleOptions opts;
    opts.initial = Tensor({1, 1, 4, 4});
    const SampleResult r = sample(model, schedule_from_betas({0.3}), opts);
    for (float v : r.x0.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Sample, ZeroModelAccumulatesOnlyScheduledNoise) {
    // With eps = 0 every step is x <- x / sqrt(alpha_t) + sigma_t z_t, so from x_T = 0
    // the result is the noise sum rebuilt here in double from the same streams.
    const NoiseSchedule s = default_schedule();
    const ZeroPredictor model({1, 2, 2});
    SampleOptions opts;
    opts.seeds = {21, 22};
    opts.initial = Tensor({2, 1, 2, 2});
    const SampleResult r = sample(model, s, opts);
    for (std::size_t j = 0; j < 2; ++j) {
        std::vector<double> x(4, 0.0);
        for (int t = s.steps; t >= 1; --t) {
            Rng z = Rng(opts.seeds[j]).split(static_cast<std::uint64_t>(t));
            for (double& v : x) {
                v /= std::sqrt(s.alpha_at(t));
                if (t > 1) v += std::sqrt(s.beta_at(t)) * z.normal();
            }
        }
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.x0[j * 4 + i], x[i], 1e-4) << j << "," << i;
    }
}

TEST(Sample, OneStepOracleRecoversData) {
    const NoiseSchedule s = schedule_from_betas({0.37});
    const Tensor x0 = random_tensor({2, 1, 4, 4}, 23);
    const Tensor eps = random_tensor({2, 1, 4, 4}, 24);
    const FixedPredictor oracle(eps);
    SampleOptions opts;
    opts.seeds = {1, 2};
    opts.initial = forward_noise(x0, 1, eps, s);
    const SampleResult r = sample(oracle, s, opts);
    EXPECT_LE(testing::max_abs_diff(r.x0, x0), 1e-4f);
}

TEST(Sample, DeterministicAndSeedSensitive) {
    const UNetModel model(small_unet(), 31);
    const NoiseSchedule s = respace(default_schedule(), 20);
    SampleOptions opts;
    opts.seeds = {5, 6};
    const Tensor a = sample(model, s, opts).x0;
    const Tensor b = sample(model, s, opts).x0;
    EXPECT_TRUE(a.bit_equal(b));
    opts.seeds = {5, 7};
    const Tensor c = sample(model, s, opts).x0;
    EXPECT_TRUE(slice_batch(a, 0).bit_equal(slice_batch(c, 0)));
    EXPECT_FALSE(slice_batch(a, 1).bit_equal(slice_batch(c, 1)));
}

TEST(Sample, TrajectoryHasOneEntryPerStepInDecreasingOrder) {
    const UNetModel model(small_unet(), 32);
    const NoiseSchedule s = respace(default_schedule(), 12);
    SampleOptions opts;
    opts.record.enabled = true;
    opts.record.tap_stages = {2};
    opts.record.tap_stride = 5;
    const SampleResult r = sample(model, s, opts);
    ASSERT_TRUE(r.trajectory);
    ASSERT_EQ(r.trajectory->steps.size(), 12u);
    EXPECT_EQ(r.trajectory->steps.front().t, 200);
    for (std::size_t i = 1; i < 12; ++i) EXPECT_LT(r.trajectory->steps[i].t, r.trajectory->steps[i - 1].t);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(r.trajectory->steps[i].stages.size(), i % 5 == 0 ? 1u : 0u) << i;
        EXPECT_EQ(r.trajectory->steps[i].x0_pred.shape(), (Shape{1, 1, 8, 8}));
    }
    EXPECT_TRUE(r.trajectory->steps.front().x_t.bit_equal(initial_noise(model.sample_shape(), opts.seeds)));
}

TEST(Sample, NaNAbortsWithStepIndex) {
    const NoiseSchedule s = schedule_from_betas(std::vector<double>(10, 0.01));
    try {
        sample(NaNPredictor(4), s, SampleOptions{});
        FAIL() << "expected SamplingError";
    } catch (const SamplingError& e) {
        EXPECT_EQ(e.step(), 4);
    }
}

TEST(Rng, SameSeedGivesIdenticalNormals) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal()) << i;
}

TEST(Rng, PhiloxKnownAnswers) {
    // Published Philox4x32-10 vectors: (counter, key) -> first two output words.
    EXPECT_EQ(Rng(0, 0).next_u64(), 0xe169c58d6627e8d5ull);
    Rng ones(0xffffffffffffffffull, 0xffffffffffffffffull);
    ones.seek(0xffffffffffffffffull);
    EXPECT_EQ(ones.next_u64(), 0x41c83b0e408f276dull);
    Rng pi(0x299f31d0a4093822ull, 0x0370734413198a2eull);
    pi.seek(0x85a308d3243f6a88ull);
    EXPECT_EQ(pi.next_u64(), 0x94fdccebd16cfe09ull);
}

TEST(Rng, NormalMeanWithinFourSigma) {
    Rng rng(2026);
    const int n = 1000000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    EXPECT_LE(std::abs(sum / n), 4.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(Rng, SplitStreamsDiffer) {
    const Rng root(9);
    Rng a = root.split(1), b = root.split(2);
    bool differ = false;
    for (int i = 0; i < 10; ++i) differ = differ || a.next_u64() != b.next_u64();
    EXPECT_TRUE(differ);
    EXPECT_EQ(root.split(1).next_u64(), Rng(9).split(1).next_u64());
}

TEST(Rng, SeekRestoresPosition) {
    Rng a(77);
    for (int i = 0; i < 5; ++i) a.normal();
    Rng b(77);
    b.seek(a.position());
    EXPECT_EQ(a.normal(), b.normal());
}

TEST(Rng, BelowStaysInRange) {
    Rng rng(4);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++hist[v];
    }
    for (int h : hist) EXPECT_GT(h, 800);
}

}  // namespace
}  // namespace freeu
