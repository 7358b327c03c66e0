// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/jobs.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "freeu/container.hpp"
#include "freeu/freeu.hpp"
#include "freeu/image_io.hpp"

namespace freeu {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
    std::ostringstream os;
    os << stem << '_' << std::setw(3) << std::setfill('0') << i << ext;
    return os.str();
}

std::string profile_csv(const spectral::SpectrumProfile& p) {
    std::ostringstream os;
    spectral::write_profile_csv(os, p);
    return os.str();
}

std::string float_label(float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 1);
    return std::string(buf, res.ptr);
}

void write_branch(const fs::path& dir, const SampleJob& job, const BranchOutput& out) {
    const auto n = static_cast<std::size_t>(out.images.dim(0));
    for (std::size_t i = 0; i < n; ++i) {
        write_file_atomic(dir / indexed("image", i, ".pgm"), encode_pgm(spectral::plane(out.images, static_cast<std::int64_t>(i), 0)));
        write_file_atomic(dir / indexed("spectrum", i, ".csv"), profile_csv(out.spectra[i]));
    }
    write_file_atomic(dir / "spectrum_mean.csv", profile_csv(spectral::average_profiles(out.spectra)));
    Container c;
    c.meta = {{"kind", "samples"}, {"seeds", job_seeds(job)}, {"steps", job.steps}};
    c.tensors.emplace("images", out.images);
    save_container(dir / "samples.fct", c);
    if (out.trajectory) {
        save_container(dir / "trajectory.fct", trajectory_container(*out.trajectory));
        std::ostringstream os;
        spectral::write_band_stats_csv(os, out.band_stats);
        write_file_atomic(dir / "band_stats.csv", os.str());
    }
}

FreeUConfig disabled() {
    FreeUConfig cfg;
    cfg.enabled = false;
    return cfg;
}

}  // namespace

SampleJob job_from_config(const RunConfig& config, bool compare) {
    SampleJob job;
    job.seed = config.sampling.seed;
    job.count = config.sampling.count;
    job.steps = config.sampling.steps;
    job.freeu = config.freeu;
    job.record_trajectory = config.sampling.record_trajectory;
    job.compare = compare;
    job.r_cut = config.sampling.r_cut;
    job.bands = config.sampling.bands;
    return job;
}

std::vector<std::uint64_t> job_seeds(const SampleJob& job) {
    if (job.count < 1) throw std::invalid_argument("sample job: count must be >= 1");
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(job.count));
    for (std::size_t j = 0; j < seeds.size(); ++j) seeds[j] = job.seed + j;
    return seeds;
}

std::vector<spectral::SpectrumProfile> image_spectra(const Tensor& images, int bands) {
    std::vector<spectral::SpectrumProfile> out;
    for (std::int64_t i = 0; i < images.dim(0); ++i) out.push_back(spectral::relative_log_amplitude(spectral::plane(images, i, 0), bands));
    return out;
}

spectral::SpectrumProfile batch_profile(const Tensor& x, int bands) { return spectral::average_profiles(image_spectra(x, bands)); }

BranchOutput run_branch(const UNetModel& model, const NoiseSchedule& schedule, const SampleJob& job, const FreeUConfig& freeu) {
    SampleOptions opts;
    opts.seeds = job_seeds(job);
    opts.hooks.modulator = make_modulator(freeu);
    opts.record.enabled = job.record_trajectory;
    const SampleResult res = sample(model, respace(schedule, job.steps), opts);
    BranchOutput out;
    out.images = res.x0;
    out.spectra = image_spectra(res.x0, job.bands);
    if (res.trajectory) {
        out.trajectory = res.trajectory;
        out.band_stats = spectral::trajectory_band_stats(*res.trajectory, job.r_cut);
    }
    return out;
}

JobResult run_sample_job(const UNetModel& model, const NoiseSchedule& schedule, const SampleJob& job) {
    job.freeu.validate("freeu");
    if (job.steps < 1 || job.steps > schedule.steps) {
        throw ConfigError("steps", "must lie in [1, " + std::to_string(schedule.steps) + "]");
    }
    JobResult result;
    if (job.compare) result.baseline = run_branch(model, schedule, job, disabled());
    result.output = run_branch(model, schedule, job, job.freeu);
    return result;
}

void write_job_artifacts(const fs::path& dir, const SampleJob& job, const JobResult& result) {
    const json meta = {{"seed", job.seed},       {"count", job.count},   {"steps", job.steps},
                       {"freeu", to_json(job.freeu)}, {"record_trajectory", job.record_trajectory},
                       {"compare", job.compare}, {"r_cut", job.r_cut},   {"bands", job.bands},
                       {"seeds", job_seeds(job)}};
    write_file_atomic(dir / "job.json", meta.dump(2) + "\n");
    if (result.baseline) {
        write_branch(dir / "baseline", job, *result.baseline);
        write_branch(dir / "freeu", job, result.output);
    } else {
        write_branch(dir / "samples", job, result.output);
    }
}

RecordedRun recorded_run(const UNetModel& model, const NoiseSchedule& schedule, std::span<const std::uint64_t> seeds,
                         const FreeUConfig& freeu, const FigureRecordOptions& options) {
    SampleOptions opts;
    opts.seeds.assign(seeds.begin(), seeds.end());
    opts.hooks.modulator = make_modulator(freeu);
    opts.record.enabled = true;
    opts.record.predictions = false;

    std::vector<spectral::SpectrumProfile> backbone, skip, fused;
    int index = -1;
    opts.on_step = [&index](int, const Tensor&) { ++index; };
    if (options.tap_stride > 0) {
        opts.hooks.tap = [&](const StageTapEvent& e) {
            if (e.stage != options.tap_stage || index % options.tap_stride != 0) return;
            backbone.push_back(spectral::feature_spectrum(e.backbone, options.bands));
            skip.push_back(spectral::feature_spectrum(e.skip, options.bands));
            fused.push_back(spectral::feature_spectrum(e.fused, options.bands));
        };
    }
    SampleResult res = sample(model, schedule, opts);
    RecordedRun run;
    run.x0 = std::move(res.x0);
    run.trajectory = std::move(*res.trajectory);
    if (!backbone.empty()) {
        run.backbone = spectral::average_profiles(backbone);
        run.skip = spectral::average_profiles(skip);
        run.fused = spectral::average_profiles(fused);
    }
    return run;
}

Fig2Result fig2_from(const RecordedRun& run, double r_cut) {
    Fig2Result r;
    r.rows = spectral::trajectory_band_stats(run.trajectory, r_cut);
    r.first_row = r.rows.size() / 4;
    std::tie(r.low_delta, r.high_delta) = spectral::mean_band_deltas(r.rows, std::max<std::size_t>(1, r.first_row));
    return r;
}

Fig5Result fig5(const UNetModel& model, const NoiseSchedule& schedule, std::span<const std::uint64_t> seeds,
                const FreeUConfig& base, const std::vector<float>& b_values, int bands, const Tensor* reuse_identity) {
    Fig5Result r;
    r.b_values = b_values;
    for (float b : b_values) {
        FreeUConfig cfg = base;
        cfg.enabled = true;
        for (auto& st : cfg.stages) {
            st.b = b;
            st.s = 1.0f;
        }
        Tensor images;
        if (reuse_identity && cfg.is_identity()) {
            images = *reuse_identity;
        } else {
            SampleOptions opts;
            opts.seeds.assign(seeds.begin(), seeds.end());
            opts.hooks.modulator = make_modulator(cfg);
            images = sample(model, schedule, opts).x0;
        }
        const auto spectra = image_spectra(images, bands);
        std::vector<double> tops;
        for (const auto& p : spectra) tops.push_back(spectral::top_band_mean(p, 0.25));
        r.mean_profiles.push_back(spectral::average_profiles(spectra));
        r.top_quartile.push_back(std::move(tops));
    }
    return r;
}

Fig6Result fig6_from(const RecordedRun& run) {
    if (run.backbone.values.empty()) throw std::invalid_argument("fig6: run has no stage taps");
    return {run.backbone, run.skip, run.fused};
}

Fig13Result fig13_from(const RecordedRun& baseline, const RecordedRun& freeu, int bands) {
    if (baseline.trajectory.steps.size() != freeu.trajectory.steps.size()) {
        throw std::invalid_argument("fig13: trajectories differ in length");
    }
    Fig13Result r;
    for (std::size_t i = 0; i < baseline.trajectory.steps.size(); ++i) {
        r.t.push_back(baseline.trajectory.steps[i].t);
        r.baseline.push_back(batch_profile(baseline.trajectory.steps[i].x_t, bands));
        r.freeu.push_back(batch_profile(freeu.trajectory.steps[i].x_t, bands));
        r.baseline_high.push_back(spectral::top_band_mean(r.baseline.back(), 0.25));
        r.freeu_high.push_back(spectral::top_band_mean(r.freeu.back(), 0.25));
    }
    return r;
}

void run_figure(const std::string& name, const UNetModel& model, const NoiseSchedule& schedule, const FigureParams& params,
                const fs::path& dir) {
    if (name != "fig2" && name != "fig5" && name != "fig6" && name != "fig13") {
        throw ConfigError("figure", "unknown figure \"" + name + "\" (expected fig2, fig5, fig6 or fig13)");
    }
    params.freeu.validate("freeu");
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(params.count));
    for (std::size_t j = 0; j < seeds.size(); ++j) seeds[j] = params.seed + j;
    FreeUConfig off;
    off.enabled = false;
    FigureRecordOptions rec;
    rec.bands = params.bands;

    std::ostringstream os;
    os << std::setprecision(9);
    if (name == "fig2") {
        rec.tap_stride = 0;
        const RecordedRun run = recorded_run(model, schedule, seeds, off, rec);
        const Fig2Result r = fig2_from(run, params.r_cut);
        spectral::write_band_stats_csv(os, r.rows);
        write_file_atomic(dir / "band_stats.csv", os.str());
        std::ostringstream summary;
        summary << std::setprecision(9) << "first_row,low_delta,high_delta\n"
                << r.first_row << ',' << r.low_delta << ',' << r.high_delta << '\n';
        write_file_atomic(dir / "summary.csv", summary.str());
        const auto& steps = run.trajectory.steps;
        for (std::size_t i = 0; i < steps.size(); i += std::max<std::size_t>(1, steps.size() / 10)) {
            const Tensor img = spectral::plane(steps[i].x_t, 0, 0);
            const spectral::LowHigh parts = spectral::split_low_high(img, params.r_cut);
            const std::string stem = "decomposition/t" + std::to_string(steps[i].t);
            write_file_atomic(dir / (stem + "_image.pgm"), encode_pgm(img));
            write_file_atomic(dir / (stem + "_low.pgm"), encode_pgm(parts.low));
            write_file_atomic(dir / (stem + "_high.pgm"), encode_pgm(parts.high));
        }
    } else if (name == "fig5") {
        const Fig5Result r = fig5(model, schedule, seeds, params.freeu, {1.0f, 1.2f, 1.4f}, params.bands);
        os << "b,mean_top_quartile,standard_error\n";
        for (std::size_t k = 0; k < r.b_values.size(); ++k) {
            const auto& v = r.top_quartile[k];
            double mean = 0.0, var = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            for (double x : v) var += (x - mean) * (x - mean);
            const double se = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
            os << float_label(r.b_values[k]) << ',' << mean << ',' << se << '\n';
            write_file_atomic(dir / ("profile_b" + float_label(r.b_values[k]) + ".csv"), profile_csv(r.mean_profiles[k]));
        }
        write_file_atomic(dir / "summary.csv", os.str());
    } else if (name == "fig6") {
        const Fig6Result r = fig6_from(recorded_run(model, schedule, seeds, off, rec));
        write_file_atomic(dir / "backbone.csv", profile_csv(r.backbone));
        write_file_atomic(dir / "skip.csv", profile_csv(r.skip));
        write_file_atomic(dir / "fused.csv", profile_csv(r.fused));
    } else {
        rec.tap_stride = 0;
        FreeUConfig on = params.freeu;
        on.enabled = true;
        const Fig13Result r = fig13_from(recorded_run(model, schedule, seeds, off, rec),
                                         recorded_run(model, schedule, seeds, on, rec), params.bands);
        os << "t,branch,band_lo,band_hi,rel_log_amp\n";
        for (std::size_t i = 0; i < r.t.size(); ++i) {
            for (int branch = 0; branch < 2; ++branch) {
                const auto& p = branch == 0 ? r.baseline[i] : r.freeu[i];
                for (std::size_t k = 0; k < p.bands(); ++k) {
                    os << r.t[i] << ',' << (branch == 0 ? "baseline" : "freeu") << ',' << p.edges[k] << ',' << p.edges[k + 1]
                       << ',' << p.values[k] << '\n';
                }
            }
        }
        write_file_atomic(dir / "profiles.csv", os.str());
        std::ostringstream high;
        high << std::setprecision(9) << "t,baseline_high,freeu_high\n";
        for (std::size_t i = 0; i < r.t.size(); ++i) high << r.t[i] << ',' << r.baseline_high[i] << ',' << r.freeu_high[i] << '\n';
        write_file_atomic(dir / "high_band.csv", high.str());
    }
}

}  // namespace freeu
