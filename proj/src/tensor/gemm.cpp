// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/gemm.hpp"

#include <algorithm>
#include <vector>

namespace freeu::kernels {

namespace {

constexpr std::size_t kRows = 4;
constexpr std::size_t kCols = 64;
constexpr std::size_t kDepth = 256;

// Register tile: kRows x kCols accumulators carried across the whole k loop.
template <std::size_t R, std::size_t Cw>
inline void tile(std::size_t ldb, std::size_t k, const float* a, const float* b, float* c, std::size_t n,
                 bool accumulate) {
    float acc[R][Cw];
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < Cw; ++j) acc[r][j] = accumulate ? c[r * n + j] : 0.0f;
    for (std::size_t p = 0; p < k; ++p) {
        const float* brow = b + p * ldb;
        for (std::size_t r = 0; r < R; ++r) {
            const float av = a[r * k + p];
            for (std::size_t j = 0; j < Cw; ++j) acc[r][j] += av * brow[j];
        }
    }
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < Cw; ++j) c[r * n + j] = acc[r][j];
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
          bool accumulate) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate) std::fill_n(c, m * n, 0.0f);
        return;
    }
    // B panels are packed (zero-padded) to kDepth x kCols and A to kRows x kDepth so the
    // register tile always runs at full width; partial tiles go through a scratch C.
    std::vector<float> panel(kDepth * kCols);
    std::vector<float> a_block(kRows * kDepth);
    float scratch[kRows * kCols];
    for (std::size_t j = 0; j < n; j += kCols) {
        const std::size_t cols = std::min(kCols, n - j);
        for (std::size_t p0 = 0; p0 < k; p0 += kDepth) {
            const std::size_t depth = std::min(kDepth, k - p0);
            for (std::size_t p = 0; p < depth; ++p) {
                float* dst = panel.data() + p * kCols;
                std::copy_n(b + (p0 + p) * n + j, cols, dst);
                std::fill(dst + cols, dst + kCols, 0.0f);
            }
            const bool acc = accumulate || p0 > 0;
            for (std::size_t i = 0; i < m; i += kRows) {
                const std::size_t rows = std::min(kRows, m - i);
                for (std::size_t r = 0; r < kRows; ++r) {
                    float* dst = a_block.data() + r * depth;
                    if (r < rows) {
                        std::copy_n(a + (i + r) * k + p0, depth, dst);
                    } else {
                        std::fill_n(dst, depth, 0.0f);
                    }
                }
                if (rows == kRows && cols == kCols) {
                    tile<kRows, kCols>(kCols, depth, a_block.data(), panel.data(), c + i * n + j, n, acc);
                    continue;
                }
                for (std::size_t r = 0; r < kRows; ++r)
                    for (std::size_t q = 0; q < kCols; ++q)
                        scratch[r * kCols + q] = (r < rows && q < cols) ? c[(i + r) * n + j + q] : 0.0f;
                tile<kRows, kCols>(kCols, depth, a_block.data(), panel.data(), scratch, kCols, acc);
                for (std::size_t r = 0; r < rows; ++r) std::copy_n(scratch + r * kCols, cols, c + (i + r) * n + j);
            }
        }
    }
}

void transpose(std::size_t rows, std::size_t cols, const float* in, float* out) {
    constexpr std::size_t kBlock = 32;
    for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
        const std::size_t i1 = std::min(rows, i0 + kBlock);
        for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
            const std::size_t j1 = std::min(cols, j0 + kBlock);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = in[i * cols + j];
        }
    }
}

}  // namespace freeu::kernels
