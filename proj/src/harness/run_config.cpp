// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace freeu {

using nlohmann::json;

JsonFields::JsonFields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
}

std::string JsonFields::path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

const json* JsonFields::get(const std::string& key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
}

void JsonFields::finish() const {
    for (const auto& [key, value] : j_.items()) {
        if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) throw ConfigError(path(key), "unknown key");
    }
}

void JsonFields::read(const std::string& key, bool& out) {
    if (const json* v = get(key)) {
        if (!v->is_boolean()) throw ConfigError(path(key), "expected a boolean");
        out = v->get<bool>();
    }
}

void JsonFields::read(const std::string& key, int& out) {
    if (const json* v = get(key)) {
        if (!v->is_number_integer()) throw ConfigError(path(key), "expected an integer");
        const auto wide = v->get<std::int64_t>();
        if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
            throw ConfigError(path(key), "integer out of range");
        }
        if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
            throw ConfigError(path(key), "integer out of range");
        }
        out = static_cast<int>(wide);
    }
}

void JsonFields::read(const std::string& key, std::uint64_t& out) {
    if (const json* v = get(key)) {
        if (!v->is_number_unsigned()) throw ConfigError(path(key), "expected a non-negative integer");
        out = v->get<std::uint64_t>();
    }
}

void JsonFields::read(const std::string& key, double& out) {
    if (const json* v = get(key)) {
        if (!v->is_number()) throw ConfigError(path(key), "expected a number");
        out = v->get<double>();
    }
}

void JsonFields::read(const std::string& key, float& out) {
    double wide = out;
    read(key, wide);
    if (std::isfinite(wide) && std::abs(wide) > std::numeric_limits<float>::max()) {
        throw ConfigError(path(key), "number out of float range");
    }
    out = static_cast<float>(wide);
}

void JsonFields::read(const std::string& key, std::string& out) {
    if (const json* v = get(key)) {
        if (!v->is_string()) throw ConfigError(path(key), "expected a string");
        out = v->get<std::string>();
    }
}

void JsonFields::read(const std::string& key, std::vector<int>& out) {
    if (const json* v = get(key)) {
        if (!v->is_array()) throw ConfigError(path(key), "expected an array of integers");
        std::vector<int> values;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const json& e = (*v)[i];
            if (!e.is_number_integer()) throw ConfigError(path(key) + "[" + std::to_string(i) + "]", "expected an integer");
            values.push_back(e.get<int>());
        }
        out = std::move(values);
    }
}

json float_json(float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return json::parse(std::string(buf, res.ptr));
}

json to_json(const FreeUConfig& cfg) {
    json stages = json::array();
    for (const auto& s : cfg.stages) {
        stages.push_back({{"stage", s.stage},
                          {"b", float_json(s.b)},
                          {"s", float_json(s.s)},
                          {"r_thresh", float_json(s.r_thresh)},
                          {"channel_fraction", float_json(s.channel_fraction)}});
    }
    return {{"enabled", cfg.enabled}, {"backbone_mode", to_string(cfg.backbone_mode)}, {"stages", stages}};
}

FreeUConfig freeu_config_from_json(const json& j, const std::string& prefix) {
    JsonFields f(j, prefix);
    FreeUConfig cfg;
    cfg.enabled = true;
    f.read("enabled", cfg.enabled);
    std::string mode = to_string(cfg.backbone_mode);
    f.read("backbone_mode", mode);
    try {
        cfg.backbone_mode = backbone_mode_from_string(mode);
    } catch (const ConfigError& e) {
        throw ConfigError(f.path("backbone_mode"), "expected \"structure\" or \"constant\"");
    }
    if (const json* stages = f.get("stages")) {
        if (!stages->is_array()) throw ConfigError(f.path("stages"), "expected an array");
        for (std::size_t i = 0; i < stages->size(); ++i) {
            const std::string where = f.path("stages") + "[" + std::to_string(i) + "]";
            JsonFields sf((*stages)[i], where);
            FreeUStageConfig st;
            if (!sf.has("stage")) throw ConfigError(where + ".stage", "required");
            sf.read("stage", st.stage);
            sf.read("b", st.b);
            sf.read("s", st.s);
            sf.read("r_thresh", st.r_thresh);
            sf.read("channel_fraction", st.channel_fraction);
            sf.finish();
            cfg.stages.push_back(st);
        }
    }
    f.finish();
    cfg.validate(prefix);
    return cfg;
}

json to_json(const UNetConfig& cfg) {
    return {{"in_channels", cfg.in_channels},         {"base_channels", cfg.base_channels},
            {"multipliers", cfg.multipliers},         {"blocks_per_stage", cfg.blocks_per_stage},
            {"time_embed_dim", cfg.time_embed_dim},   {"groups", cfg.groups},
            {"image_size", cfg.image_size}};
}

json to_json(const RunConfig& c) {
    json model = to_json(c.model);
    model["init_seed"] = c.init_seed;
    return {
        {"dataset", {{"kind", c.dataset.kind}, {"count", c.dataset.count}, {"size", c.dataset.size}, {"seed", c.dataset.seed}}},
        {"schedule",
         {{"kind", c.schedule.kind},
          {"steps", c.schedule.steps},
          {"beta_start", c.schedule.beta_start},
          {"beta_end", c.schedule.beta_end}}},
        {"model", model},
        {"training",
         {{"steps", c.training.steps},
          {"batch", c.training.batch},
          {"lr", c.training.lr},
          {"seed", c.training.seed},
          {"checkpoint_every", c.training.checkpoint_every},
          {"eval_every", c.training.eval_every},
          {"eval_count", c.training.eval_count}}},
        {"freeu", to_json(c.freeu)},
        {"sampling",
         {{"seed", c.sampling.seed},
          {"count", c.sampling.count},
          {"steps", c.sampling.steps},
          {"record_trajectory", c.sampling.record_trajectory},
          {"r_cut", c.sampling.r_cut},
          {"bands", c.sampling.bands}}},
        {"output", {{"dir", c.output.dir}, {"checkpoint", c.output.checkpoint}}},
    };
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    JsonFields root(j, "");
    if (const json* d = root.get("dataset")) {
        JsonFields f(*d, "dataset");
        f.read("kind", c.dataset.kind);
        f.read("count", c.dataset.count);
        f.read("size", c.dataset.size);
        f.read("seed", c.dataset.seed);
        f.finish();
    }
    if (const json* s = root.get("schedule")) {
        JsonFields f(*s, "schedule");
        f.read("kind", c.schedule.kind);
        f.read("steps", c.schedule.steps);
        f.read("beta_start", c.schedule.beta_start);
        f.read("beta_end", c.schedule.beta_end);
        f.finish();
    }
    if (const json* m = root.get("model")) {
        JsonFields f(*m, "model");
        f.read("in_channels", c.model.in_channels);
        f.read("base_channels", c.model.base_channels);
        f.read("multipliers", c.model.multipliers);
        f.read("blocks_per_stage", c.model.blocks_per_stage);
        f.read("time_embed_dim", c.model.time_embed_dim);
        f.read("groups", c.model.groups);
        f.read("image_size", c.model.image_size);
        f.read("init_seed", c.init_seed);
        f.finish();
    }
    if (const json* t = root.get("training")) {
        JsonFields f(*t, "training");
        f.read("steps", c.training.steps);
        f.read("batch", c.training.batch);
        f.read("lr", c.training.lr);
        f.read("seed", c.training.seed);
        f.read("checkpoint_every", c.training.checkpoint_every);
        f.read("eval_every", c.training.eval_every);
        f.read("eval_count", c.training.eval_count);
        f.finish();
    }
    if (const json* fr = root.get("freeu")) c.freeu = freeu_config_from_json(*fr, "freeu");
    if (const json* s = root.get("sampling")) {
        JsonFields f(*s, "sampling");
        f.read("seed", c.sampling.seed);
        f.read("count", c.sampling.count);
        f.read("steps", c.sampling.steps);
        f.read("record_trajectory", c.sampling.record_trajectory);
        f.read("r_cut", c.sampling.r_cut);
        f.read("bands", c.sampling.bands);
        f.finish();
    }
    if (const json* o = root.get("output")) {
        JsonFields f(*o, "output");
        f.read("dir", c.output.dir);
        f.read("checkpoint", c.output.checkpoint);
        f.finish();
    }
    root.finish();
    c.validate();
    return c;
}

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void RunConfig::validate() const {
    if (dataset.kind != "shapes_texture") throw ConfigError("dataset.kind", "only \"shapes_texture\" is supported");
    if (dataset.count < 1) throw ConfigError("dataset.count", "must be >= 1");
    if (!power_of_two(dataset.size)) throw ConfigError("dataset.size", "must be a power of two");
    if (schedule.kind != "linear") throw ConfigError("schedule.kind", "only \"linear\" is supported");
    if (schedule.steps < 1) throw ConfigError("schedule.steps", "must be >= 1");
    if (!(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1.0)) {
        throw ConfigError("schedule.beta_start", "require 0 < beta_start <= beta_end < 1");
    }
    try {
        model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("model", e.what());
    }
    if (model.image_size != dataset.size) throw ConfigError("model.image_size", "must equal dataset.size");
    if (training.steps < 0) throw ConfigError("training.steps", "must be >= 0");
    if (training.batch < 1) throw ConfigError("training.batch", "must be >= 1");
    if (!(training.lr > 0.0) || !std::isfinite(training.lr)) throw ConfigError("training.lr", "must be a finite value > 0");
    if (training.checkpoint_every < 0) throw ConfigError("training.checkpoint_every", "must be >= 0");
    if (training.eval_every < 0) throw ConfigError("training.eval_every", "must be >= 0");
    if (training.eval_count < 1) throw ConfigError("training.eval_count", "must be >= 1");
    freeu.validate("freeu");
    for (std::size_t i = 0; i < freeu.stages.size(); ++i) {
        if (freeu.stages[i].stage > model.levels()) {
            throw ConfigError("freeu.stages[" + std::to_string(i) + "].stage",
                              "model has only " + std::to_string(model.levels()) + " decoder stages");
        }
    }
    if (sampling.count < 1) throw ConfigError("sampling.count", "must be >= 1");
    if (sampling.steps < 1 || sampling.steps > schedule.steps) {
        throw ConfigError("sampling.steps", "must lie in [1, schedule.steps]");
    }
    if (!(sampling.r_cut >= 0.0)) throw ConfigError("sampling.r_cut", "must be >= 0");
    if (sampling.bands < 2) throw ConfigError("sampling.bands", "must be >= 2");
    if (output.dir.empty()) throw ConfigError("output.dir", "must not be empty");
}

std::filesystem::path RunConfig::checkpoint_path() const {
    return output.checkpoint.empty() ? std::filesystem::path(output.dir) / "model.fck" : std::filesystem::path(output.checkpoint);
}

NoiseSchedule build_schedule(const ScheduleSpec& spec) {
    return make_schedule(ScheduleKind::kLinear, spec.steps, spec.beta_start, spec.beta_end);
}

json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what, std::string("malformed JSON: ") + e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return run_config_from_json(parse_json_text(text.str(), path.string()));
}

}  // namespace freeu
