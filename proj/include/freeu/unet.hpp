// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "freeu/autodiff.hpp"
#include "freeu/denoiser.hpp"
#include "freeu/stage_hooks.hpp"

namespace freeu {

struct UNetConfig {
    int in_channels = 1;
    int base_channels = 32;
    std::vector<int> multipliers{1, 2, 4};
    int blocks_per_stage = 1;
    int time_embed_dim = 64;
    int groups = 8;
    int image_size = 32;

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
    int levels() const noexcept { return static_cast<int>(multipliers.size()); }
    int channels(int level) const { return base_channels * multipliers.at(static_cast<std::size_t>(level)); }

    bool operator==(const UNetConfig&) const = default;
};

/// Concat site descriptor for decoder stage `stage` (1 = coarsest).
struct StageSite {
    int stage;
    int backbone_channels;
    int skip_channels;
    int spatial;  // square extent at the configured image size
};

/// Channel order used when backbone and skip meet.
inline constexpr const char* kConcatOrder = "backbone_first";

/// Time-conditional U-Net: encoder levels push skip features, decoder stages
/// pop them and concatenate (backbone first) after the optional modulator.
class UNetModel final : public NoisePredictor, public DifferentiableDenoiser {
public:
    /// Builds a model with deterministic initial weights drawn from `init_seed`.
    explicit UNetModel(UNetConfig config, std::uint64_t init_seed = 0);

    const UNetConfig& config() const noexcept { return config_; }
    const std::vector<StageSite>& stage_sites() const noexcept { return sites_; }

    /// Named weights in stable (sorted) order.
    const std::map<std::string, Var>& weights() const noexcept { return weights_; }
    std::vector<Var> parameters() const;
    /// Replaces every weight; names and shapes must match exactly.
    void load_weights(const std::map<std::string, Tensor>& values);
    std::map<std::string, Tensor> weight_values() const;

    /// Zeroes the output convolution so the predicted noise is identically 0.
    void zero_output_head();

    /// Differentiable forward with per-sample step indices (training path).
    Var forward(const Var& x_t, const std::vector<int>& t) const override;
    /// Inference forward; graph recording is disabled for the call.
    Tensor predict(const Tensor& x_t, int t, const ForwardHooks& hooks = {}) const override;
    Shape sample_shape() const override;

private:
    Var run(const Var& x, const std::vector<int>& t, const ForwardHooks* hooks) const;
    Var res_block(const std::string& name, const Var& x, const Var& temb) const;
    Var param(const std::string& name) const;
    void add_param(const std::string& name, Shape shape, float bound, Rng& rng);
    void add_norm(const std::string& name, int channels);
    void add_res_block(const std::string& name, int c_in, int c_out, Rng& rng);

    UNetConfig config_;
    std::vector<StageSite> sites_;
    std::map<std::string, Var> weights_;
};

/// Sinusoidal embedding [N, dim] of integer step indices.
Tensor timestep_embedding(const std::vector<int>& t, int dim);

/// Channel mean of an [N,C,H,W] tensor, shape [N,1,H,W].
Tensor stage_average_map(const Tensor& x);

}  // namespace freeu
