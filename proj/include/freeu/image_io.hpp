// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "freeu/tensor.hpp"

namespace freeu {

/// Binary PGM (P5, maxval 255) of an [H,W] plane; values map linearly from [-1,1]
/// to [0,255] with round-half-up and clamping.
std::string encode_pgm(const Tensor& plane);
Tensor decode_pgm(const std::string& bytes);
std::uint8_t to_byte(float v);

/// Channel-0 planes of a batch laid out in a grid with `cols` columns and a 1-pixel gutter at -1.
Tensor tile_batch(const Tensor& x, int cols);

/// Repeated 2x2 box-mean halving of an [H,W] plane until `factor` (a power of two) is reached.
Tensor downsample_plane(const Tensor& plane, int factor);

}  // namespace freeu
