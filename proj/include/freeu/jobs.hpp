// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freeu/diffusion.hpp"
#include "freeu/run_config.hpp"
#include "freeu/spectral.hpp"
#include "freeu/unet.hpp"

namespace freeu {

struct SampleJob {
    std::uint64_t seed = 0;
    int count = 1;
    int steps = 200;
    FreeUConfig freeu;
    bool record_trajectory = false;
    /// Also run an unmodulated branch from the same noise.
    bool compare = false;
    double r_cut = 4.0;
    int bands = 8;
};

SampleJob job_from_config(const RunConfig& config, bool compare);

/// Item j uses seed `job.seed + j`.
std::vector<std::uint64_t> job_seeds(const SampleJob& job);

struct BranchOutput {
    Tensor images;
    std::vector<spectral::SpectrumProfile> spectra;  // one per image
    std::optional<TrajectoryRecord> trajectory;
    std::vector<spectral::BandStatsRow> band_stats;
};

struct JobResult {
    std::optional<BranchOutput> baseline;
    BranchOutput output;  // with `job.freeu` applied
};

BranchOutput run_branch(const UNetModel& model, const NoiseSchedule& schedule, const SampleJob& job,
                        const FreeUConfig& freeu);
/// `schedule` is the model's full schedule; it is respaced to `job.steps`.
JobResult run_sample_job(const UNetModel& model, const NoiseSchedule& schedule, const SampleJob& job);

/// Writes `<dir>/samples` (or `<dir>/baseline` and `<dir>/freeu` in compare mode), each with
/// image_XXX.pgm, spectrum_XXX.csv, spectrum_mean.csv, samples.fct and, when recorded,
/// trajectory.fct and band_stats.csv; plus `<dir>/job.json`.
void write_job_artifacts(const std::filesystem::path& dir, const SampleJob& job, const JobResult& result);

/// Per-image spectra of channel 0.
std::vector<spectral::SpectrumProfile> image_spectra(const Tensor& images, int bands);

// ---------------------------------------------------------------------------
// Figure pipelines

/// One sampling pass over a seed set with every x_t kept and the stage
/// features at `tap_stage` reduced to profiles on every `tap_stride`-th step.
struct RecordedRun {
    Tensor x0;
    TrajectoryRecord trajectory;
    spectral::SpectrumProfile backbone;
    spectral::SpectrumProfile skip;
    spectral::SpectrumProfile fused;
};

struct FigureRecordOptions {
    int tap_stage = 2;
    int tap_stride = 10;
    int bands = 8;
};

RecordedRun recorded_run(const UNetModel& model, const NoiseSchedule& schedule, std::span<const std::uint64_t> seeds,
                         const FreeUConfig& freeu, const FigureRecordOptions& options = {});

struct Fig2Result {
    std::vector<spectral::BandStatsRow> rows;
    std::size_t first_row = 0;  // start of the final 75% of steps
    double low_delta = 0.0;
    double high_delta = 0.0;
};
Fig2Result fig2_from(const RecordedRun& run, double r_cut);

struct Fig5Result {
    std::vector<float> b_values;
    std::vector<spectral::SpectrumProfile> mean_profiles;  // per b
    std::vector<std::vector<double>> top_quartile;        // [b][seed]
};
/// `b_values` replace b on every stage of `base` (s forced to 1). `reuse_identity`
/// supplies the already sampled b = 1 images when available.
Fig5Result fig5(const UNetModel& model, const NoiseSchedule& schedule, std::span<const std::uint64_t> seeds,
                const FreeUConfig& base, const std::vector<float>& b_values, int bands,
                const Tensor* reuse_identity = nullptr);

struct Fig6Result {
    spectral::SpectrumProfile backbone, skip, fused;
};
Fig6Result fig6_from(const RecordedRun& run);

struct Fig13Result {
    std::vector<int> t;
    std::vector<spectral::SpectrumProfile> baseline, freeu;  // per recorded step, batch-averaged
    std::vector<double> baseline_high, freeu_high;          // top-quartile means
};
Fig13Result fig13_from(const RecordedRun& baseline, const RecordedRun& freeu, int bands);

/// Mean over samples of the per-sample profile of channel 0.
spectral::SpectrumProfile batch_profile(const Tensor& x, int bands);

struct FigureParams {
    std::uint64_t seed = 0;
    int count = 16;
    double r_cut = 4.0;
    int bands = 8;
    FreeUConfig freeu;
};

/// Runs figure `name` (fig2, fig5, fig6, fig13) and writes its CSV bundle under `dir`.
void run_figure(const std::string& name, const UNetModel& model, const NoiseSchedule& schedule, const FigureParams& params,
                const std::filesystem::path& dir);

}  // namespace freeu
