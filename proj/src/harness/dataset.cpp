// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "freeu/rng.hpp"

namespace freeu {

namespace {

double span(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

void draw_shape(std::span<float> img, int size, Rng& rng) {
    const bool ellipse = rng.below(2) == 0;
    const double cy = span(rng, 0.2, 0.8) * size, cx = span(rng, 0.2, 0.8) * size;
    const double ry = span(rng, 0.12, 0.35) * size, rx = span(rng, 0.12, 0.35) * size;
    const auto value = static_cast<float>(span(rng, -0.3, 0.9));
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
            const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
            if (inside) img[static_cast<std::size_t>(y * size + x)] = value;
        }
    }
}

void draw_texture(std::span<float> img, int size, Rng& rng) {
    const int ph = std::max(4, static_cast<int>(span(rng, 0.25, 0.5) * size));
    const int pw = std::max(4, static_cast<int>(span(rng, 0.25, 0.5) * size));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - ph + 1)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - pw + 1)));
    const auto amplitude = static_cast<float>(span(rng, 0.25, 0.5));
    if (rng.below(2) == 0) {
        // Grating between 0.2 and 0.45 cycles per pixel at a random orientation.
        const double freq = span(rng, 0.2, 0.45), theta = span(rng, 0.0, std::numbers::pi);
        const double phase = span(rng, 0.0, 2.0 * std::numbers::pi);
        const double ky = 2.0 * std::numbers::pi * freq * std::sin(theta), kx = 2.0 * std::numbers::pi * freq * std::cos(theta);
        for (int y = y0; y < y0 + ph; ++y)
            for (int x = x0; x < x0 + pw; ++x)
                img[static_cast<std::size_t>(y * size + x)] += amplitude * static_cast<float>(std::sin(ky * y + kx * x + phase));
    } else {
        const int cell = 1 + static_cast<int>(rng.below(2));
        for (int y = y0; y < y0 + ph; ++y)
            for (int x = x0; x < x0 + pw; ++x)
                img[static_cast<std::size_t>(y * size + x)] += ((y / cell + x / cell) % 2 == 0) ? amplitude : -amplitude;
    }
}

}  // namespace

Tensor synth_dataset(const std::string& kind, int n, int size, std::uint64_t seed) {
    if (kind != "shapes_texture") throw std::invalid_argument("synth_dataset: unknown kind \"" + kind + "\"");
    if (n < 1) throw std::invalid_argument("synth_dataset: n must be >= 1");
    if (size < 8 || (size & (size - 1)) != 0) throw std::invalid_argument("synth_dataset: size must be a power of two >= 8");
    const Rng root(seed);
    Tensor out({n, 1, size, size});
    const auto plane = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
    for (int i = 0; i < n; ++i) {
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        std::span<float> img = out.data().subspan(static_cast<std::size_t>(i) * plane, plane);
        std::fill(img.begin(), img.end(), static_cast<float>(span(rng, -0.9, -0.5)));
        const int shapes = 1 + static_cast<int>(rng.below(3));
        for (int s = 0; s < shapes; ++s) draw_shape(img, size, rng);
        draw_texture(img, size, rng);
        for (float& v : img) v = std::clamp(v, -1.0f, 1.0f);
    }
    return out;
}

Tensor synth_dataset(const DatasetSpec& spec) { return synth_dataset(spec.kind, spec.count, spec.size, spec.seed); }

}  // namespace freeu
