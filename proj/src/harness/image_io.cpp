// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace freeu {

std::uint8_t to_byte(float v) {
    const double scaled = (static_cast<double>(v) + 1.0) * 127.5;
    return static_cast<std::uint8_t>(std::clamp(std::floor(scaled + 0.5), 0.0, 255.0));
}

std::string encode_pgm(const Tensor& plane) {
    require_rank(plane, 2, "encode_pgm");
    std::string out = "P5\n" + std::to_string(plane.dim(1)) + " " + std::to_string(plane.dim(0)) + "\n255\n";
    out.reserve(out.size() + plane.numel());
    for (float v : plane.data()) out.push_back(static_cast<char>(to_byte(v)));
    return out;
}

Tensor decode_pgm(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    std::int64_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w < 1 || h < 1 || maxval != 255) throw std::invalid_argument("decode_pgm: unsupported header");
    in.get();
    Tensor plane({h, w});
    for (auto& v : plane.data()) {
        const int byte = in.get();
        if (byte == EOF) throw std::invalid_argument("decode_pgm: truncated payload");
        v = static_cast<float>(byte / 127.5 - 1.0);
    }
    return plane;
}

Tensor tile_batch(const Tensor& x, int cols) {
    require_rank(x, 4, "tile_batch");
    const auto n = x.dim(0), h = x.dim(2), w = x.dim(3);
    cols = static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(cols, n)));
    const auto rows = (n + cols - 1) / cols;
    Tensor out({rows * (h + 1) - 1, cols * (w + 1) - 1}, -1.0f);
    const auto ow = out.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto r0 = (i / cols) * (h + 1), c0 = (i % cols) * (w + 1);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t xx = 0; xx < w; ++xx) out[static_cast<std::size_t>((r0 + y) * ow + c0 + xx)] = x.at(i, 0, y, xx);
    }
    return out;
}

Tensor downsample_plane(const Tensor& plane, int factor) {
    require_rank(plane, 2, "downsample_plane");
    Tensor cur = plane;
    for (int f = factor; f > 1; f /= 2) {
        const auto h = cur.dim(0) / 2, w = cur.dim(1) / 2;
        if (h < 1 || w < 1) break;
        Tensor next({h, w});
        const auto cw = cur.dim(1);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const auto i = static_cast<std::size_t>(2 * y * cw + 2 * x);
                const auto j = i + static_cast<std::size_t>(cw);
                next[static_cast<std::size_t>(y * w + x)] = 0.25f * (cur[i] + cur[i + 1] + cur[j] + cur[j + 1]);
            }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace freeu
