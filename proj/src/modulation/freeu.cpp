// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/freeu.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "freeu/spectral.hpp"
#include "freeu/unet.hpp"

namespace freeu {

void FreeUStageConfig::validate(const std::string& prefix) const {
    if (stage < 1) throw ConfigError(prefix + ".stage", "must be >= 1");
    if (!std::isfinite(b) || b <= 0.0f) throw ConfigError(prefix + ".b", "must be a finite value > 0");
    if (!std::isfinite(s) || s < 0.0f) throw ConfigError(prefix + ".s", "must be a finite value >= 0");
    if (!std::isfinite(r_thresh) || r_thresh < 0.0f) {
        throw ConfigError(prefix + ".r_thresh", "must be a finite value >= 0");
    }
    if (!(channel_fraction > 0.0f && channel_fraction <= 1.0f)) {
        throw ConfigError(prefix + ".channel_fraction", "must lie in (0, 1]");
    }
}

const char* to_string(BackboneMode mode) noexcept {
    return mode == BackboneMode::kConstant ? "constant" : "structure";
}

BackboneMode backbone_mode_from_string(const std::string& name) {
    if (name == "structure") return BackboneMode::kStructure;
    if (name == "constant") return BackboneMode::kConstant;
    throw ConfigError("backbone_mode", "expected \"structure\" or \"constant\", got \"" + name + "\"");
}

void FreeUConfig::validate(const std::string& prefix) const {
    std::set<int> seen;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string where = prefix + ".stages[" + std::to_string(i) + "]";
        stages[i].validate(where);
        if (!seen.insert(stages[i].stage).second) throw ConfigError(where + ".stage", "duplicate stage entry");
    }
}

const FreeUStageConfig* FreeUConfig::find(int stage) const noexcept {
    const auto it = std::find_if(stages.begin(), stages.end(), [stage](const auto& s) { return s.stage == stage; });
    return it == stages.end() ? nullptr : &*it;
}

bool FreeUConfig::is_identity() const noexcept {
    return !enabled || std::all_of(stages.begin(), stages.end(), [](const auto& s) { return s.is_identity(); });
}

FreeUConfig default_freeu_config(int image_size) {
    FreeUConfig cfg;
    cfg.enabled = true;
    const float coarsest = static_cast<float>(image_size / 4);
    const float next = static_cast<float>(image_size / 2);
    cfg.stages.push_back({1, 1.3f, 0.9f, coarsest / 4.0f, 0.5f});
    cfg.stages.push_back({2, 1.2f, 0.9f, next / 4.0f, 0.5f});
    return cfg;
}

Tensor backbone_factor_map(const Tensor& mean_map, float b) {
    require_rank(mean_map, 4, "backbone_factor_map");
    if (mean_map.dim(1) != 1) {
        throw ShapeError("backbone_factor_map: expected [N,1,H,W], got " + to_string(mean_map.shape()));
    }
    const auto n = mean_map.dim(0), hw = mean_map.dim(2) * mean_map.dim(3);
    Tensor alpha(mean_map.shape(), 1.0f);
    auto src = mean_map.data();
    auto dst = alpha.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const auto first = src.begin() + i * hw;
        const auto [lo_it, hi_it] = std::minmax_element(first, first + hw);
        const float lo = *lo_it, hi = *hi_it;
        if (!(hi > lo) || b == 1.0f) continue;
        const float range = hi - lo;
        const float floor_v = std::min(1.0f, b), ceil_v = std::max(1.0f, b);
        for (std::int64_t p = 0; p < hw; ++p) {
            const auto idx = static_cast<std::size_t>(i * hw + p);
            const float x = src[idx];
            // Endpoints are pinned so the extremes map to exactly 1 and b.
            const float v = x == lo ? 1.0f : x == hi ? b : (b - 1.0f) * ((x - lo) / range) + 1.0f;
            dst[idx] = std::clamp(v, floor_v, ceil_v);
        }
    }
    return alpha;
}

Tensor apply_backbone_scaling(const Tensor& x, const Tensor& alpha, float channel_fraction) {
    require_rank(x, 4, "apply_backbone_scaling");
    require_rank(alpha, 4, "apply_backbone_scaling");
    if (alpha.dim(0) != x.dim(0) || alpha.dim(1) != 1 || alpha.dim(2) != x.dim(2) || alpha.dim(3) != x.dim(3)) {
        throw ShapeError("apply_backbone_scaling: factor map " + to_string(alpha.shape()) +
                         " does not match features " + to_string(x.shape()));
    }
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const auto scaled = static_cast<std::int64_t>(std::floor(static_cast<double>(c) * channel_fraction));
    Tensor out = x;
    auto o = out.data();
    auto a = alpha.data();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < scaled; ++ch)
            for (std::int64_t p = 0; p < hw; ++p) o[static_cast<std::size_t>((i * c + ch) * hw + p)] *= a[static_cast<std::size_t>(i * hw + p)];
    return out;
}

Tensor radial_mask(std::int64_t h, std::int64_t w, float r_thresh, float s) {
    if (h < 1 || w < 1) throw ShapeError("radial_mask: extents must be positive");
    Tensor mask({h, w}, 1.0f);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const double r = std::hypot(static_cast<double>(y - h / 2), static_cast<double>(x - w / 2));
            if (r < r_thresh) mask[static_cast<std::size_t>(y * w + x)] = s;
        }
    return mask;
}

Tensor apply_skip_spectral(const Tensor& h, float s, float r_thresh) {
    require_rank(h, 4, "apply_skip_spectral");
    const auto n = h.dim(0), c = h.dim(1), rows = h.dim(2), cols = h.dim(3);
    const Tensor mask = spectral::symmetrize_mask(radial_mask(rows, cols, r_thresh, s));
    Tensor out(h.shape());
    auto dst = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            spectral::ComplexGrid spectrum = spectral::any_fft2(spectral::to_complex(spectral::plane(h, i, ch)), false);
            spectral::apply_centered_mask(spectrum, mask);
            float residue = 0.0f;
            const Tensor back = spectral::real_part(spectral::any_fft2(spectrum, true), &residue);
            if (residue > spectral::kImaginaryAbort) {
                throw NumericError("apply_skip_spectral: imaginary residue " + std::to_string(residue) +
                                   " indicates an asymmetric mask");
            }
            std::copy(back.data().begin(), back.data().end(),
                      dst.begin() + static_cast<std::ptrdiff_t>((i * c + ch) * rows * cols));
        }
    }
    out.require_finite("apply_skip_spectral");
    return out;
}

StageFeatures modulate_stage(StageFeatures features, const FreeUStageConfig& cfg, BackboneMode mode) {
    if (cfg.stage != features.stage) {
        throw std::invalid_argument("modulate_stage: config for stage " + std::to_string(cfg.stage) +
                                    " applied to stage " + std::to_string(features.stage));
    }
    if (cfg.is_identity()) return features;
    if (cfg.b != 1.0f) {
        Tensor alpha;
        if (mode == BackboneMode::kStructure) {
            alpha = backbone_factor_map(stage_average_map(features.backbone), cfg.b);
        } else {
            const auto& s = features.backbone.shape();
            alpha = Tensor::full({s[0], 1, s[2], s[3]}, cfg.b);
        }
        features.backbone = apply_backbone_scaling(features.backbone, alpha, cfg.channel_fraction);
    }
    if (cfg.s != 1.0f) features.skip = apply_skip_spectral(features.skip, cfg.s, cfg.r_thresh);
    return features;
}

StageModulator make_modulator(const FreeUConfig& config) {
    config.validate();
    if (!config.enabled) return {};
    return [config](StageFeatures features) {
        const FreeUStageConfig* cfg = config.find(features.stage);
        if (!cfg) return features;
        return modulate_stage(std::move(features), *cfg, config.backbone_mode);
    };
}

}  // namespace freeu
