// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace freeu {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
    }
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::require_finite(const char* where) const {
    if (!all_finite()) throw NumericError(std::string("non-finite value produced by ") + where);
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(x.shape()));
    }
}

Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t end) {
    require_rank(x, 4, "slice_channels");
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (begin < 0 || end > c || begin >= end) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + to_string(x.shape()));
    }
    Tensor out({n, end - begin, x.dim(2), x.dim(3)});
    const auto width = static_cast<std::size_t>((end - begin) * hw);
    for (std::int64_t i = 0; i < n; ++i) {
        const float* src = x.data().data() + (i * c + begin) * hw;
        std::copy_n(src, width, out.data().data() + i * static_cast<std::int64_t>(width));
    }
    return out;
}

Tensor slice_batch(const Tensor& x, std::int64_t n) {
    if (x.rank() == 0 || n < 0 || n >= x.dim(0)) throw ShapeError("slice_batch: index out of range");
    Shape shape = x.shape();
    shape[0] = 1;
    const std::size_t per = x.numel() / static_cast<std::size_t>(x.dim(0));
    std::vector<float> data(x.data().begin() + static_cast<std::ptrdiff_t>(n * per),
                            x.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * per));
    return Tensor(std::move(shape), std::move(data));
}

Tensor stack_batch(std::span<const Tensor> items) {
    if (items.empty()) throw ShapeError("stack_batch: no tensors");
    Shape shape = items.front().shape();
    for (const auto& t : items) {
        if (t.shape() != shape || shape[0] != 1) {
            throw ShapeError("stack_batch: mismatched " + to_string(shape) + " vs " + to_string(t.shape()));
        }
    }
    shape[0] = static_cast<std::int64_t>(items.size());
    std::vector<float> data;
    data.reserve(items.front().numel() * items.size());
    for (const auto& t : items) data.insert(data.end(), t.data().begin(), t.data().end());
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace freeu
