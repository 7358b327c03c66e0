// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synth-data, train, sample, compare, figure, serve.
// Exit codes: 0 success, 2 configuration error, 3 numeric failure, 1 anything else.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "freeu/container.hpp"
#include "freeu/dataset.hpp"
#include "freeu/image_io.hpp"
#include "freeu/jobs.hpp"
#include "freeu/service.hpp"
#include "freeu/training.hpp"

namespace {

using namespace freeu;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<float> b1, s1, b2, s2;
    std::optional<std::string> out;
    std::optional<std::string> checkpoint;
};

void add_common(CLI::App* cmd, Overrides& o, bool freeu_knobs) {
    cmd->add_option("--config", o.config, "Run configuration (JSON)");
    cmd->add_option("--seed", o.seed, "Seed override");
    cmd->add_option("--steps", o.steps, "Step count override");
    cmd->add_option("--out", o.out, "Output directory override");
    cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint path override");
    if (freeu_knobs) {
        cmd->add_option("--b1", o.b1, "Stage 1 backbone factor");
        cmd->add_option("--s1", o.s1, "Stage 1 skip factor");
        cmd->add_option("--b2", o.b2, "Stage 2 backbone factor");
        cmd->add_option("--s2", o.s2, "Stage 2 skip factor");
    }
}

FreeUStageConfig& stage_entry(RunConfig& cfg, int stage) {
    cfg.freeu.enabled = true;
    auto& stages = cfg.freeu.stages;
    const auto it = std::find_if(stages.begin(), stages.end(), [stage](const auto& s) { return s.stage == stage; });
    if (it != stages.end()) return *it;
    FreeUStageConfig fresh{stage, 1.0f, 1.0f, 0.0f, 0.5f};
    if (const FreeUStageConfig* d = default_freeu_config(cfg.model.image_size).find(stage)) fresh = *d;
    cfg.freeu.stages.push_back(fresh);
    return cfg.freeu.stages.back();
}

RunConfig resolve(const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.out) cfg.output.dir = *o.out;
    if (o.checkpoint) cfg.output.checkpoint = *o.checkpoint;
    if (o.b1) stage_entry(cfg, 1).b = *o.b1;
    if (o.s1) stage_entry(cfg, 1).s = *o.s1;
    if (o.b2) stage_entry(cfg, 2).b = *o.b2;
    if (o.s2) stage_entry(cfg, 2).s = *o.s2;
    return cfg;
}

int cmd_synth(const Overrides& o) {
    RunConfig cfg = resolve(o);
    if (o.seed) cfg.dataset.seed = *o.seed;
    cfg.validate();
    const Tensor data = synth_dataset(cfg.dataset);
    Container c;
    c.meta = {{"kind", "dataset"}, {"dataset", to_json(cfg).at("dataset")}};
    c.tensors.emplace("images", data);
    const fs::path dir(cfg.output.dir);
    save_container(dir / "dataset.fct", c);
    const std::int64_t preview = std::min<std::int64_t>(16, data.dim(0));
    std::vector<Tensor> items;
    for (std::int64_t i = 0; i < preview; ++i) items.push_back(slice_batch(data, i));
    write_file_atomic(dir / "dataset_preview.pgm", encode_pgm(tile_batch(stack_batch(items), 4)));
    std::cout << "wrote " << (dir / "dataset.fct").string() << " (" << data.dim(0) << " images)\n";
    return 0;
}

int cmd_train(const Overrides& o, const std::optional<std::string>& resume) {
    RunConfig cfg = resolve(o);
    if (o.seed) cfg.training.seed = *o.seed;
    if (o.steps) cfg.training.steps = *o.steps;
    cfg.validate();
    TrainOptions opts;
    if (resume) opts.resume = fs::path(*resume);
    opts.on_loss = [](std::int64_t step, float loss) {
        if (step % 100 == 0) std::fprintf(stderr, "step %lld loss %.6f\n", static_cast<long long>(step), loss);
    };
    const TrainingState state = train(cfg, opts);
    std::cout << "trained to step " << state.step << "; checkpoint " << cfg.checkpoint_path().string() << "\n";
    return 0;
}

RunConfig sampling_config(const Overrides& o) {
    RunConfig cfg = resolve(o);
    if (o.seed) cfg.sampling.seed = *o.seed;
    if (o.steps) cfg.sampling.steps = *o.steps;
    cfg.validate();
    return cfg;
}

int cmd_sample(const Overrides& o, bool compare, std::optional<int> count, bool record) {
    RunConfig cfg = sampling_config(o);
    if (count) cfg.sampling.count = *count;
    if (record) cfg.sampling.record_trajectory = true;
    cfg.validate();
    const LoadedModel model = load_model(cfg.checkpoint_path());
    const SampleJob job = job_from_config(cfg, compare);
    if (job.steps > model.schedule.steps) throw ConfigError("sampling.steps", "exceeds the checkpoint's schedule");
    const JobResult result = run_sample_job(*model.model, model.schedule, job);
    const fs::path dir = fs::path(cfg.output.dir) / (compare ? "compare" : "sample");
    write_job_artifacts(dir, job, result);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_figure(const Overrides& o, const std::string& name) {
    RunConfig cfg = sampling_config(o);
    const LoadedModel model = load_model(cfg.checkpoint_path());
    FigureParams params;
    params.seed = cfg.sampling.seed;
    params.count = cfg.sampling.count;
    params.r_cut = cfg.sampling.r_cut;
    params.bands = cfg.sampling.bands;
    params.freeu = cfg.freeu;
    const fs::path dir = fs::path(cfg.output.dir) / "figures" / name;
    run_figure(name, *model.model, model.schedule, params, dir);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

SamplingService* g_service = nullptr;

int cmd_serve(const Overrides& o, const std::string& host, int port, int workers) {
    RunConfig cfg = resolve(o);
    cfg.validate();
    ServiceOptions opts;
    opts.workers = workers;
    SamplingService service(load_model(cfg.checkpoint_path()), opts);
    const int bound = service.bind(host, port);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
    g_service = &service;
    std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
    });
    service.listen();
    g_service = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FreeU diffusion lab"};
    app.require_subcommand(1);

    Overrides synth_o, train_o, sample_o, compare_o, figure_o, serve_o;
    std::optional<std::string> resume;
    std::optional<int> sample_count, compare_count;
    bool sample_record = false, compare_record = false;
    std::string figure_name, host = "127.0.0.1";
    int port = 8080, workers = 0;

    auto* synth = app.add_subcommand("synth-data", "Generate the synthetic dataset");
    add_common(synth, synth_o, false);
    auto* train_cmd = app.add_subcommand("train", "Train the toy U-Net");
    add_common(train_cmd, train_o, false);
    train_cmd->add_option("--resume", resume, "Continue from a checkpoint");
    auto* sample_cmd = app.add_subcommand("sample", "Sample images");
    add_common(sample_cmd, sample_o, true);
    sample_cmd->add_option("--count", sample_count, "Images per job");
    sample_cmd->add_flag("--record", sample_record, "Record the trajectory");
    auto* compare_cmd = app.add_subcommand("compare", "Baseline and FreeU samples from shared noise");
    add_common(compare_cmd, compare_o, true);
    compare_cmd->add_option("--count", compare_count, "Images per branch");
    compare_cmd->add_flag("--record", compare_record, "Record both trajectories");
    auto* figure_cmd = app.add_subcommand("figure", "Spectral figure pipelines");
    figure_cmd->add_option("name", figure_name, "fig2, fig5, fig6 or fig13")->required();
    add_common(figure_cmd, figure_o, true);
    auto* serve_cmd = app.add_subcommand("serve", "HTTP sampling service");
    add_common(serve_cmd, serve_o, false);
    serve_cmd->add_option("--port", port, "Listen port (0 picks one)");
    serve_cmd->add_option("--host", host, "Listen address");
    serve_cmd->add_option("--workers", workers, "Concurrent sampling jobs (0 = cores - 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*synth) return cmd_synth(synth_o);
        if (*train_cmd) return cmd_train(train_o, resume);
        if (*sample_cmd) return cmd_sample(sample_o, false, sample_count, sample_record);
        if (*compare_cmd) return cmd_sample(compare_o, true, compare_count, compare_record);
        if (*figure_cmd) return cmd_figure(figure_o, figure_name);
        if (*serve_cmd) return cmd_serve(serve_o, host, port, workers);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
