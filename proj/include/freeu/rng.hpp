// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "freeu/tensor.hpp"

namespace freeu {

/// Counter-based generator (Philox4x32-10). A draw is a pure function of
/// (seed, stream, position), so streams can be split and positions restored
/// exactly without replaying history.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept : seed_(seed), stream_(stream) {}

    /// Independent child stream derived from this stream and `id`.
    Rng split(std::uint64_t id) const noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in the open interval (0, 1).
    double uniform() noexcept;
    /// Integer uniform in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Standard normal via Box–Muller (one counter block per variate).
    float normal() noexcept;

    Tensor normal_tensor(Shape shape);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t position() const noexcept { return counter_; }
    void seek(std::uint64_t position) noexcept { counter_ = position; }

private:
    std::array<std::uint32_t, 4> block() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace freeu
