// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "freeu/diffusion.hpp"
#include "freeu/freeu.hpp"
#include "freeu/unet.hpp"

namespace freeu {

struct DatasetSpec {
    std::string kind = "shapes_texture";
    int count = 2048;
    int size = 32;
    std::uint64_t seed = 1;
    bool operator==(const DatasetSpec&) const = default;
};

struct ScheduleSpec {
    std::string kind = "linear";
    int steps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    bool operator==(const ScheduleSpec&) const = default;
};

struct TrainingSpec {
    int steps = 2000;
    int batch = 16;
    double lr = 2e-4;
    std::uint64_t seed = 7;
    int checkpoint_every = 500;
    int eval_every = 1000;
    int eval_count = 4;
    bool operator==(const TrainingSpec&) const = default;
};

struct SamplingSpec {
    std::uint64_t seed = 0;
    int count = 16;
    int steps = 200;
    bool record_trajectory = false;
    double r_cut = 4.0;
    int bands = 8;
    bool operator==(const SamplingSpec&) const = default;
};

struct OutputSpec {
    std::string dir = "runs/default";
    /// Checkpoint path; empty means `<dir>/model.fck`.
    std::string checkpoint;
    bool operator==(const OutputSpec&) const = default;
};

struct RunConfig {
    DatasetSpec dataset;
    ScheduleSpec schedule;
    UNetConfig model;
    std::uint64_t init_seed = 0;
    TrainingSpec training;
    FreeUConfig freeu = default_freeu_config();
    SamplingSpec sampling;
    OutputSpec output;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    std::filesystem::path checkpoint_path() const;
    bool operator==(const RunConfig&) const = default;
};

NoiseSchedule build_schedule(const ScheduleSpec& spec);

nlohmann::json to_json(const FreeUConfig& cfg);
/// Strict parse: unknown keys and wrong types raise ConfigError with the key path under `prefix`.
FreeUConfig freeu_config_from_json(const nlohmann::json& j, const std::string& prefix = "freeu");

nlohmann::json to_json(const UNetConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; the result is validated.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
/// Parses `text` as JSON, mapping syntax errors to ConfigError.
nlohmann::json parse_json_text(const std::string& text, const std::string& what);

/// Strict JSON object reader used by every config-like parser.
class JsonFields {
public:
    JsonFields(const nlohmann::json& j, std::string prefix);
    /// Throws on any key that was never requested.
    void finish() const;

    const nlohmann::json* get(const std::string& key);
    bool has(const std::string& key) const { return j_.contains(key); }
    std::string path(const std::string& key) const;

    void read(const std::string& key, bool& out);
    void read(const std::string& key, int& out);
    void read(const std::string& key, std::uint64_t& out);
    void read(const std::string& key, float& out);
    void read(const std::string& key, double& out);
    void read(const std::string& key, std::string& out);
    void read(const std::string& key, std::vector<int>& out);

private:
    const nlohmann::json& j_;
    std::string prefix_;
    std::vector<std::string> seen_;
};

/// Shortest decimal that round-trips `v` as a float, as a JSON number.
nlohmann::json float_json(float v);

}  // namespace freeu
