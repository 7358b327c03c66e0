// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace freeu::kernels {

/// C[M,N] = A[M,K] * B[K,N] (row-major; accumulate=true adds into C).
///
/// Every output element is reduced over k in ascending order with a single
/// accumulator, so a column's result never depends on M, N or the blocking.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
          bool accumulate = false);

/// out[cols, rows] = transpose(in[rows, cols]).
void transpose(std::size_t rows, std::size_t cols, const float* in, float* out);

}  // namespace freeu::kernels
