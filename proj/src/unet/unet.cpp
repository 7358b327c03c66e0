// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/unet.hpp"

#include <cmath>
#include <stdexcept>

namespace freeu {

namespace {

std::string level_name(const char* prefix, int index) { return std::string(prefix) + std::to_string(index); }

int time_hidden(const UNetConfig& c) { return 2 * c.time_embed_dim; }

}  // namespace

void UNetConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("unet: " + msg); };
    if (in_channels < 1) fail("in_channels must be >= 1");
    if (base_channels < 1) fail("base_channels must be >= 1");
    if (levels() < 2) fail("at least 2 stages are required");
    if (blocks_per_stage < 1) fail("blocks_per_stage must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail("time_embed_dim must be even and >= 2");
    if (groups < 1) fail("groups must be >= 1");
    for (int i = 0; i < levels(); ++i) {
        if (multipliers[static_cast<std::size_t>(i)] < 1) fail("multipliers must be >= 1");
        if (channels(i) % groups != 0) {
            fail("channel count " + std::to_string(channels(i)) + " not divisible by " + std::to_string(groups) +
                 " groups");
        }
    }
    const int factor = 1 << (levels() - 1);
    if (image_size < factor || image_size % factor != 0) {
        fail("image_size " + std::to_string(image_size) + " not divisible by " + std::to_string(factor));
    }
}

UNetModel::UNetModel(UNetConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(init_seed, 0x756E6574ull);
    const int levels = config_.levels();
    const int hidden = time_hidden(config_);

    add_param("time.fc1.weight", {hidden, config_.time_embed_dim}, 1.0f / std::sqrt(float(config_.time_embed_dim)), rng);
    add_param("time.fc1.bias", {hidden}, 0.0f, rng);
    add_param("time.fc2.weight", {hidden, hidden}, 1.0f / std::sqrt(float(hidden)), rng);
    add_param("time.fc2.bias", {hidden}, 0.0f, rng);

    const int c0 = config_.channels(0);
    add_param("conv_in.weight", {c0, config_.in_channels, 3, 3}, 1.0f / std::sqrt(float(9 * config_.in_channels)), rng);
    add_param("conv_in.bias", {c0}, 0.0f, rng);

    int prev = c0;
    for (int i = 0; i < levels; ++i) {
        for (int b = 0; b < config_.blocks_per_stage; ++b) {
            add_res_block(level_name("enc", i) + level_name(".block", b), prev, config_.channels(i), rng);
            prev = config_.channels(i);
        }
    }
    add_res_block("mid.block0", prev, prev, rng);

    for (int stage = 1; stage <= levels; ++stage) {
        const int level = levels - stage;
        const int skip = config_.channels(level);
        sites_.push_back({stage, prev, skip, config_.image_size >> level});
        const std::string name = level_name("dec", stage);
        add_param(name + ".reduce.weight", {skip, prev + skip, 1, 1}, 1.0f / std::sqrt(float(prev + skip)), rng);
        add_param(name + ".reduce.bias", {skip}, 0.0f, rng);
        for (int b = 0; b < config_.blocks_per_stage; ++b) add_res_block(name + level_name(".block", b), skip, skip, rng);
        prev = skip;
    }

    add_norm("out.norm", prev);
    add_param("out.conv.weight", {config_.in_channels, prev, 3, 3}, 1.0f / std::sqrt(float(9 * prev)), rng);
    add_param("out.conv.bias", {config_.in_channels}, 0.0f, rng);
}

void UNetModel::add_param(const std::string& name, Shape shape, float bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = bound * static_cast<float>(2.0 * rng.uniform() - 1.0);
    if (!weights_.emplace(name, Var(std::move(t), true)).second) {
        throw std::logic_error("duplicate weight name " + name);
    }
}

void UNetModel::add_norm(const std::string& name, int channels) {
    weights_.emplace(name + ".gamma", Var(Tensor::ones({channels}), true));
    weights_.emplace(name + ".beta", Var(Tensor::zeros({channels}), true));
}

void UNetModel::add_res_block(const std::string& name, int c_in, int c_out, Rng& rng) {
    add_norm(name + ".norm1", c_in);
    add_param(name + ".conv1.weight", {c_out, c_in, 3, 3}, 1.0f / std::sqrt(float(9 * c_in)), rng);
    add_param(name + ".conv1.bias", {c_out}, 0.0f, rng);
    add_param(name + ".temb.weight", {c_out, time_hidden(config_)}, 1.0f / std::sqrt(float(time_hidden(config_))), rng);
    add_param(name + ".temb.bias", {c_out}, 0.0f, rng);
    add_norm(name + ".norm2", c_out);
    add_param(name + ".conv2.weight", {c_out, c_out, 3, 3}, 1.0f / std::sqrt(float(9 * c_out)), rng);
    add_param(name + ".conv2.bias", {c_out}, 0.0f, rng);
    if (c_in != c_out) {
        add_param(name + ".shortcut.weight", {c_out, c_in, 1, 1}, 1.0f / std::sqrt(float(c_in)), rng);
        add_param(name + ".shortcut.bias", {c_out}, 0.0f, rng);
    }
}

Var UNetModel::param(const std::string& name) const {
    const auto it = weights_.find(name);
    if (it == weights_.end()) throw std::logic_error("missing weight " + name);
    return it->second;
}

std::vector<Var> UNetModel::parameters() const {
    std::vector<Var> out;
    out.reserve(weights_.size());
    for (const auto& [name, v] : weights_) out.push_back(v);
    return out;
}

std::map<std::string, Tensor> UNetModel::weight_values() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : weights_) out.emplace(name, v.value());
    return out;
}

void UNetModel::load_weights(const std::map<std::string, Tensor>& values) {
    if (values.size() != weights_.size()) {
        throw std::invalid_argument("load_weights: expected " + std::to_string(weights_.size()) + " tensors, got " +
                                    std::to_string(values.size()));
    }
    for (const auto& [name, v] : weights_) {
        const auto it = values.find(name);
        if (it == values.end()) throw std::invalid_argument("load_weights: missing tensor " + name);
        if (it->second.shape() != v.shape()) {
            throw ShapeError("load_weights: " + name + " has shape " + to_string(it->second.shape()) + ", expected " +
                             to_string(v.shape()));
        }
    }
    for (auto& [name, v] : weights_) v.assign(values.at(name));
}

void UNetModel::zero_output_head() {
    for (const char* name : {"out.conv.weight", "out.conv.bias"}) {
        Var w = param(name);
        w.assign(Tensor::zeros(w.shape()));
    }
}

Shape UNetModel::sample_shape() const { return {config_.in_channels, config_.image_size, config_.image_size}; }

Var UNetModel::res_block(const std::string& name, const Var& x, const Var& temb) const {
    const int groups = config_.groups;
    Var h = ops::silu(ops::group_norm(x, groups, param(name + ".norm1.gamma"), param(name + ".norm1.beta")));
    h = ops::conv2d(h, param(name + ".conv1.weight"), param(name + ".conv1.bias"), 1, 1);
    const Var proj = ops::linear(temb, param(name + ".temb.weight"), param(name + ".temb.bias"));
    h = ops::add(h, ops::reshape(proj, {h.shape()[0], h.shape()[1], 1, 1}));
    h = ops::silu(ops::group_norm(h, groups, param(name + ".norm2.gamma"), param(name + ".norm2.beta")));
    h = ops::conv2d(h, param(name + ".conv2.weight"), param(name + ".conv2.bias"), 1, 1);
    Var shortcut = x;
    if (weights_.count(name + ".shortcut.weight")) {
        shortcut = ops::conv2d(x, param(name + ".shortcut.weight"), param(name + ".shortcut.bias"));
    }
    return ops::add(shortcut, h);
}

Var UNetModel::run(const Var& x, const std::vector<int>& t, const ForwardHooks* hooks) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != config_.in_channels) {
        throw ShapeError("unet: expected input [N," + std::to_string(config_.in_channels) + ",H,W], got " +
                         to_string(s));
    }
    const int factor = 1 << (config_.levels() - 1);
    if (s[2] % factor != 0 || s[3] % factor != 0) {
        throw ShapeError("unet: spatial extents of " + to_string(s) + " not divisible by " + std::to_string(factor));
    }
    if (static_cast<std::int64_t>(t.size()) != s[0]) throw ShapeError("unet: one step index per batch item required");

    Var temb(timestep_embedding(t, config_.time_embed_dim));
    temb = ops::linear(temb, param("time.fc1.weight"), param("time.fc1.bias"));
    temb = ops::linear(ops::silu(temb), param("time.fc2.weight"), param("time.fc2.bias"));
    const Var temb_act = ops::silu(temb);

    const int levels = config_.levels();
    Var h = ops::conv2d(x, param("conv_in.weight"), param("conv_in.bias"), 1, 1);
    std::vector<Var> skips;
    for (int i = 0; i < levels; ++i) {
        if (i > 0) h = ops::resample(h, ops::Resample::kDown2Avg);
        for (int b = 0; b < config_.blocks_per_stage; ++b) {
            h = res_block(level_name("enc", i) + level_name(".block", b), h, temb_act);
        }
        skips.push_back(h);
    }
    h = res_block("mid.block0", h, temb_act);

    for (int stage = 1; stage <= levels; ++stage) {
        const Var skip_in = skips.back();
        skips.pop_back();
        const Var backbone_in = h;
        Var backbone = backbone_in;
        Var skip = skip_in;
        if (hooks && hooks->modulator) {
            StageFeatures modulated = hooks->modulator(StageFeatures{stage, backbone_in.value(), skip_in.value()});
            if (modulated.backbone.shape() != backbone_in.shape() || modulated.skip.shape() != skip_in.shape()) {
                throw ShapeError("unet: modulator changed feature shapes at stage " + std::to_string(stage));
            }
            backbone = Var(std::move(modulated.backbone));
            skip = Var(std::move(modulated.skip));
        }
        const std::string name = level_name("dec", stage);
        h = ops::conv2d(ops::concat_channels(backbone, skip), param(name + ".reduce.weight"),
                        param(name + ".reduce.bias"));
        if (hooks && hooks->tap) {
            hooks->tap(StageTapEvent{stage, backbone_in.value(), skip_in.value(), backbone.value(), skip.value(),
                                     h.value()});
        }
        for (int b = 0; b < config_.blocks_per_stage; ++b) h = res_block(name + level_name(".block", b), h, temb_act);
        if (stage < levels) h = ops::resample(h, ops::Resample::kUp2Nearest);
    }

    Var out = ops::silu(ops::group_norm(h, config_.groups, param("out.norm.gamma"), param("out.norm.beta")));
    return ops::conv2d(out, param("out.conv.weight"), param("out.conv.bias"), 1, 1);
}

Var UNetModel::forward(const Var& x_t, const std::vector<int>& t) const { return run(x_t, t, nullptr); }

Tensor UNetModel::predict(const Tensor& x_t, int t, const ForwardHooks& hooks) const {
    NoGradGuard no_grad;
    const std::vector<int> steps(static_cast<std::size_t>(x_t.rank() == 4 ? x_t.dim(0) : 0), t);
    return run(Var(x_t), steps, &hooks).value();
}

Tensor timestep_embedding(const std::vector<int>& t, int dim) {
    const int half = dim / 2;
    Tensor out({static_cast<std::int64_t>(t.size()), dim});
    for (std::size_t n = 0; n < t.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            const double arg = t[n] * freq;
            out[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)] = static_cast<float>(std::sin(arg));
            out[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(half + i)] = static_cast<float>(std::cos(arg));
        }
    }
    return out;
}

Tensor stage_average_map(const Tensor& x) {
    require_rank(x, 4, "stage_average_map");
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor out({n, 1, x.dim(2), x.dim(3)});
    auto src = x.data();
    auto dst = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t p = 0; p < hw; ++p) {
            float s = 0.0f;
            for (std::int64_t ch = 0; ch < c; ++ch) s += src[static_cast<std::size_t>((i * c + ch) * hw + p)];
            dst[static_cast<std::size_t>(i * hw + p)] = s / static_cast<float>(c);
        }
    }
    return out;
}

}  // namespace freeu
