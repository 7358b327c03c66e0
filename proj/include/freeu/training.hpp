// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "freeu/adam.hpp"
#include "freeu/container.hpp"
#include "freeu/rng.hpp"
#include "freeu/run_config.hpp"
#include "freeu/unet.hpp"

namespace freeu {

/// Everything needed to continue training exactly where it stopped.
struct TrainingState {
    RunConfig config;
    std::shared_ptr<UNetModel> model;
    std::int64_t step = 0;
    std::int64_t adam_steps = 0;
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
    std::uint64_t rng_position = 0;
    std::vector<float> losses;
};

/// Container tensors: "model/<weight>", "adam.m/<weight>", "adam.v/<weight>",
/// "train/loss" (one value per completed step). Meta records the run config,
/// concat order, step counters and the training RNG stream position.
Container checkpoint_container(const TrainingState& state);
TrainingState state_from_checkpoint(const Container& c);

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state);
/// Throws std::runtime_error naming the path when it is missing.
TrainingState load_checkpoint(const std::filesystem::path& path);

/// A read-only model ready for sampling.
struct LoadedModel {
    RunConfig config;
    std::shared_ptr<const UNetModel> model;
    NoiseSchedule schedule;
    std::int64_t train_step = 0;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Raised when a training step produces a non-finite value; the newest
/// periodic checkpoint on disk is left untouched.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(std::int64_t step, const std::string& what) : NumericError(what), step_(step) {}
    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

struct TrainOptions {
    /// Continue from this checkpoint instead of initial weights.
    std::optional<std::filesystem::path> resume;
    /// Stop once this many total steps are done (default: config.training.steps).
    std::optional<std::int64_t> until_step;
    /// Called with (step, batch) before each update; may modify the batch.
    std::function<void(std::int64_t, Tensor&)> on_batch;
    /// Called with (step, loss) after each update.
    std::function<void(std::int64_t, float)> on_loss;
    bool write_artifacts = true;
};

/// Trains and writes `<checkpoint>`, `<dir>/loss.csv` and `<dir>/eval/step_XXXXXX.pgm`.
TrainingState train(const RunConfig& config, const TrainOptions& options = {});

/// Loss log text (`step,loss` with 9 significant digits).
std::string loss_csv(const std::vector<float>& losses);

/// Trailing-window mean of `losses` ending at 1-based step `step`.
double smoothed_loss(const std::vector<float>& losses, std::int64_t step, int window = 100);

}  // namespace freeu
