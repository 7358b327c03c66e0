// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace freeu {

using Shape = std::vector<std::int64_t>;

/// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf appears in a published result.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major float32 array. Plain value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
    static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }
    const std::vector<float>& storage() const noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    /// 4-D accessors for [N,C,H,W] tensors.
    float& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[offset4(n, c, h, w)];
    }
    float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[offset4(n, c, h, w)];
    }

    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    bool all_finite() const noexcept;
    /// Throws NumericError mentioning `where` unless every value is finite.
    void require_finite(const char* where) const;

    /// Bitwise equality of shape and payload.
    bool bit_equal(const Tensor& other) const noexcept;

private:
    std::size_t offset4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w);
    }

    Shape shape_;
    std::vector<float> data_;
};

/// Channel range [begin, end) of an [N,C,H,W] tensor.
Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t end);

/// Sample `n` of an [N,...] tensor, keeping a leading extent of 1.
Tensor slice_batch(const Tensor& x, std::int64_t n);

/// Stacks equally shaped [1,...] tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

void require_rank(const Tensor& x, std::size_t rank, const char* op);

}  // namespace freeu
