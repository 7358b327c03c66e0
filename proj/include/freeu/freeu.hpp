// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "freeu/stage_hooks.hpp"
#include "freeu/tensor.hpp"

namespace freeu {

/// Invalid configuration value; `field()` names the offending key path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Per decoder stage re-weighting factors.
struct FreeUStageConfig {
    int stage = 1;
    float b = 1.0f;         // backbone factor, > 0
    float s = 1.0f;         // skip low-frequency factor, >= 0
    float r_thresh = 0.0f;  // radial threshold in frequency cells, >= 0
    float channel_fraction = 0.5f;

    /// Throws ConfigError naming `prefix`.field for the first violated invariant.
    void validate(const std::string& prefix = "stage") const;
    bool is_identity() const noexcept { return b == 1.0f && s == 1.0f; }

    bool operator==(const FreeUStageConfig&) const = default;
};

/// How the backbone factor is spread over positions.
enum class BackboneMode {
    kStructure,  // min-max normalized channel-mean map per sample
    kConstant,   // uniform factor b (ablation)
};

const char* to_string(BackboneMode mode) noexcept;
BackboneMode backbone_mode_from_string(const std::string& name);

struct FreeUConfig {
    bool enabled = false;
    BackboneMode backbone_mode = BackboneMode::kStructure;
    std::vector<FreeUStageConfig> stages;

    void validate(const std::string& prefix = "freeu") const;
    const FreeUStageConfig* find(int stage) const noexcept;
    /// True when running with this config cannot change any feature.
    bool is_identity() const noexcept;

    bool operator==(const FreeUConfig&) const = default;
};

/// Tuning defaults on the two coarsest decoder stages of a 3-level 32x32 model.
FreeUConfig default_freeu_config(int image_size = 32);

/// Factor map alpha = (b - 1) * (mean - min) / (max - min) + 1 with per-sample
/// min/max over H x W; samples with max == min get alpha = 1 everywhere.
Tensor backbone_factor_map(const Tensor& mean_map, float b);

/// Multiplies channels [0, floor(C * fraction)) of x by alpha (broadcast over
/// channels); the remaining channels are copied untouched.
Tensor apply_backbone_scaling(const Tensor& x, const Tensor& alpha, float channel_fraction);

/// Centred-grid [H,W] mask: s where the distance from (H/2, W/2) is below r_thresh, 1 elsewhere.
Tensor radial_mask(std::int64_t h, std::int64_t w, float r_thresh, float s);

/// Scales the low-frequency Fourier coefficients of every [H,W] plane of h.
/// Throws NumericError if the inverse transform leaves a large imaginary residue.
Tensor apply_skip_spectral(const Tensor& h, float s, float r_thresh);

StageFeatures modulate_stage(StageFeatures features, const FreeUStageConfig& cfg,
                             BackboneMode mode = BackboneMode::kStructure);

/// Modulator for a whole config. Stages without an entry pass through untouched.
/// Returns an empty function when the config is disabled.
StageModulator make_modulator(const FreeUConfig& config);

}  // namespace freeu
