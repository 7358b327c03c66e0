// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/training.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "freeu/dataset.hpp"
#include "freeu/diffusion.hpp"
#include "freeu/image_io.hpp"

namespace freeu {

using nlohmann::json;

namespace {

constexpr const char* kModelPrefix = "model/";
constexpr const char* kMomentPrefix = "adam.m/";
constexpr const char* kVariancePrefix = "adam.v/";

std::vector<std::string> weight_names(const UNetModel& model) {
    std::vector<std::string> names;
    for (const auto& [name, w] : model.weights()) names.push_back(name);
    return names;
}

Tensor gather(const Tensor& data, std::span<const std::int64_t> rows) {
    std::vector<Tensor> items;
    items.reserve(rows.size());
    for (auto r : rows) items.push_back(slice_batch(data, r));
    return stack_batch(items);
}

void write_eval_snapshot(const RunConfig& cfg, const UNetModel& model, std::int64_t step) {
    const NoiseSchedule schedule = build_schedule(cfg.schedule);
    SampleOptions opts;
    opts.seeds.clear();
    for (int i = 0; i < cfg.training.eval_count; ++i) opts.seeds.push_back(1'000'000 + static_cast<std::uint64_t>(i));
    const SampleResult res = sample(model, schedule, opts);
    char name[32];
    std::snprintf(name, sizeof name, "step_%06lld.pgm", static_cast<long long>(step));
    write_file_atomic(std::filesystem::path(cfg.output.dir) / "eval" / name, encode_pgm(tile_batch(res.x0, 4)));
}

}  // namespace

Container checkpoint_container(const TrainingState& s) {
    Container c;
    const auto names = weight_names(*s.model);
    for (const auto& [name, w] : s.model->weights()) c.tensors.emplace(kModelPrefix + name, w.value());
    if (s.adam_steps > 0) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            c.tensors.emplace(kMomentPrefix + names[i], s.adam_m.at(i));
            c.tensors.emplace(kVariancePrefix + names[i], s.adam_v.at(i));
        }
    }
    if (!s.losses.empty()) c.tensors.emplace("train/loss", Tensor({static_cast<std::int64_t>(s.losses.size())}, s.losses));
    c.meta = {{"kind", "model"},
              {"concat_order", kConcatOrder},
              {"run_config", to_json(s.config)},
              {"training",
               {{"step", s.step},
                {"adam_steps", s.adam_steps},
                {"rng", {{"seed", s.config.training.seed}, {"stream", 0}, {"position", s.rng_position}}}}}};
    return c;
}

TrainingState state_from_checkpoint(const Container& c) {
    if (c.meta.value("kind", "") != "model") throw FormatError("checkpoint: container is not a model checkpoint");
    if (c.meta.value("concat_order", "") != kConcatOrder) {
        throw FormatError("checkpoint: concat order \"" + c.meta.value("concat_order", "") + "\" is not supported");
    }
    TrainingState s;
    s.config = run_config_from_json(c.meta.at("run_config"));
    s.model = std::make_shared<UNetModel>(s.config.model, s.config.init_seed);
    std::map<std::string, Tensor> weights;
    for (const auto& [name, t] : c.tensors) {
        if (name.starts_with(kModelPrefix)) weights.emplace(name.substr(std::string_view(kModelPrefix).size()), t);
    }
    s.model->load_weights(weights);
    const json& tr = c.meta.at("training");
    s.step = tr.at("step").get<std::int64_t>();
    s.adam_steps = tr.at("adam_steps").get<std::int64_t>();
    s.rng_position = tr.at("rng").at("position").get<std::uint64_t>();
    if (s.adam_steps > 0) {
        for (const auto& name : weight_names(*s.model)) {
            s.adam_m.push_back(c.tensors.at(kMomentPrefix + name));
            s.adam_v.push_back(c.tensors.at(kVariancePrefix + name));
        }
    }
    if (auto it = c.tensors.find("train/loss"); it != c.tensors.end()) {
        s.losses.assign(it->second.data().begin(), it->second.data().end());
    }
    if (static_cast<std::int64_t>(s.losses.size()) != s.step) throw FormatError("checkpoint: loss history length mismatches step");
    return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state) {
    save_container(path, checkpoint_container(state));
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
    return state_from_checkpoint(load_container(path));
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
    TrainingState s = load_checkpoint(checkpoint);
    return {s.config, std::move(s.model), build_schedule(s.config.schedule), s.step};
}

std::string loss_csv(const std::vector<float>& losses) {
    std::ostringstream os;
    os << "step,loss\n" << std::setprecision(9);
    for (std::size_t i = 0; i < losses.size(); ++i) os << i + 1 << ',' << losses[i] << '\n';
    return os.str();
}

double smoothed_loss(const std::vector<float>& losses, std::int64_t step, int window) {
    if (step < 1 || step > static_cast<std::int64_t>(losses.size())) throw std::out_of_range("smoothed_loss: step out of range");
    const std::int64_t begin = std::max<std::int64_t>(0, step - window);
    double sum = 0.0;
    for (std::int64_t i = begin; i < step; ++i) sum += losses[static_cast<std::size_t>(i)];
    return sum / static_cast<double>(step - begin);
}

TrainingState train(const RunConfig& config, const TrainOptions& options) {
    config.validate();
    TrainingState state;
    if (options.resume) {
        state = load_checkpoint(*options.resume);
        RunConfig expected = state.config;
        expected.training.steps = config.training.steps;
        expected.output = config.output;
        if (!(expected == config)) {
            throw ConfigError("config", "resume checkpoint was produced by a different run configuration");
        }
        state.config = config;
    } else {
        state.config = config;
        state.model = std::make_shared<UNetModel>(config.model, config.init_seed);
    }

    const Tensor data = synth_dataset(config.dataset);
    const NoiseSchedule schedule = build_schedule(config.schedule);
    Adam opt(state.model->parameters(), AdamOptions{static_cast<float>(config.training.lr)});
    if (state.adam_steps > 0) opt.restore(state.adam_steps, state.adam_m, state.adam_v);
    Rng rng(config.training.seed);
    rng.seek(state.rng_position);

    const std::int64_t target = options.until_step.value_or(config.training.steps);
    const auto snapshot = [&] {
        state.adam_steps = opt.steps_taken();
        state.adam_m = opt.first_moments();
        state.adam_v = opt.second_moments();
        state.rng_position = rng.position();
    };
    const auto persist = [&] {
        snapshot();
        if (!options.write_artifacts) return;
        save_checkpoint(config.checkpoint_path(), state);
        write_file_atomic(std::filesystem::path(config.output.dir) / "loss.csv", loss_csv(state.losses));
    };

    std::vector<std::int64_t> rows(static_cast<std::size_t>(config.training.batch));
    while (state.step < target) {
        const std::int64_t next = state.step + 1;
        for (auto& r : rows) r = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(config.dataset.count)));
        Tensor batch = gather(data, rows);
        if (options.on_batch) options.on_batch(next, batch);
        float loss_value = 0.0f;
        try {
            opt.zero_grad();
            const Var loss = training_loss(*state.model, batch, schedule, rng);
            loss_value = loss.value()[0];
            backward(loss);
            opt.step();
            for (const Var& p : state.model->parameters()) p.value().require_finite("adam update");
        } catch (const NumericError& e) {
            throw TrainingDiverged(next, "training diverged at step " + std::to_string(next) + ": " + e.what());
        }
        state.losses.push_back(loss_value);
        state.step = next;
        if (options.on_loss) options.on_loss(next, loss_value);
        if (config.training.checkpoint_every > 0 && next % config.training.checkpoint_every == 0) persist();
        if (options.write_artifacts && config.training.eval_every > 0 && next % config.training.eval_every == 0) {
            write_eval_snapshot(config, *state.model, next);
        }
    }
    persist();
    return state;
}

}  // namespace freeu
