// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "freeu/run_config.hpp"
#include "freeu/tensor.hpp"

namespace freeu {

/// [n, 1, size, size] images in [-1, 1]: a dark background, one to three filled
/// ellipses or rectangles, and a sinusoidal grating or checkerboard patch.
/// Image i depends only on (seed, i).
Tensor synth_dataset(const std::string& kind, int n, int size, std::uint64_t seed);
Tensor synth_dataset(const DatasetSpec& spec);

}  // namespace freeu
