// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <complex>
#include <numbers>

#include "freeu/spectral.hpp"

namespace freeu::spectral {

namespace {

using cd = std::complex<double>;

// In-place iterative radix-2 transform over `n` points spaced by `stride`.
void fft1d(cd* a, std::int64_t n, bool inverse) {
    for (std::int64_t i = 1, j = 0; i < n; ++i) {
        std::int64_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::int64_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        for (std::int64_t i = 0; i < n; i += len) {
            for (std::int64_t k = 0; k < len / 2; ++k) {
                const cd wk(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
                const cd u = a[i + k];
                const cd v = a[i + k + len / 2] * wk;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

void dft1d(cd* a, std::int64_t n, bool inverse) {
    std::vector<cd> out(static_cast<std::size_t>(n));
    const double sign = inverse ? 1.0 : -1.0;
    for (std::int64_t k = 0; k < n; ++k) {
        cd s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
            s += a[j] * cd(std::cos(ang), std::sin(ang));
        }
        out[static_cast<std::size_t>(k)] = s;
    }
    std::copy(out.begin(), out.end(), a);
}

template <typename Transform1d>
ComplexGrid separable(const ComplexGrid& in, bool inverse, Transform1d transform) {
    const auto h = in.h, w = in.w;
    std::vector<cd> buf(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i) {
        buf[static_cast<std::size_t>(i)] = cd(in.data[static_cast<std::size_t>(2 * i)],
                                              in.data[static_cast<std::size_t>(2 * i + 1)]);
    }
    for (std::int64_t y = 0; y < h; ++y) transform(buf.data() + y * w, w, inverse);
    std::vector<cd> column(static_cast<std::size_t>(h));
    for (std::int64_t x = 0; x < w; ++x) {
        for (std::int64_t y = 0; y < h; ++y) column[static_cast<std::size_t>(y)] = buf[static_cast<std::size_t>(y * w + x)];
        transform(column.data(), h, inverse);
        for (std::int64_t y = 0; y < h; ++y) buf[static_cast<std::size_t>(y * w + x)] = column[static_cast<std::size_t>(y)];
    }
    const double norm = inverse ? 1.0 / static_cast<double>(h * w) : 1.0;
    ComplexGrid out(h, w);
    for (std::int64_t i = 0; i < h * w; ++i) {
        out.data[static_cast<std::size_t>(2 * i)] = static_cast<float>(buf[static_cast<std::size_t>(i)].real() * norm);
        out.data[static_cast<std::size_t>(2 * i + 1)] = static_cast<float>(buf[static_cast<std::size_t>(i)].imag() * norm);
    }
    return out;
}

void require_pow2(std::int64_t h, std::int64_t w, const char* op) {
    if (!is_power_of_two(h) || !is_power_of_two(w)) {
        throw ShapeError(std::string(op) + ": extents " + std::to_string(h) + "x" + std::to_string(w) +
                         " are not powers of two");
    }
}

}  // namespace

float ComplexGrid::abs(std::int64_t y, std::int64_t x) const {
    return static_cast<float>(std::hypot(static_cast<double>(re(y, x)), static_cast<double>(im(y, x))));
}

bool is_power_of_two(std::int64_t n) noexcept { return n > 0 && (n & (n - 1)) == 0; }

ComplexGrid to_complex(const Tensor& field) {
    require_rank(field, 2, "to_complex");
    ComplexGrid g(field.dim(0), field.dim(1));
    auto v = field.data();
    for (std::size_t i = 0; i < v.size(); ++i) g.data[2 * i] = v[i];
    return g;
}

Tensor real_part(const ComplexGrid& grid, float* max_imag) {
    Tensor out({grid.h, grid.w});
    float worst = 0.0f;
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = grid.data[2 * i];
        worst = std::max(worst, std::abs(grid.data[2 * i + 1]));
    }
    if (max_imag) *max_imag = worst;
    return out;
}

ComplexGrid fft2(const Tensor& field) {
    require_rank(field, 2, "fft2");
    return fft2(to_complex(field));
}

ComplexGrid fft2(const ComplexGrid& grid) {
    require_pow2(grid.h, grid.w, "fft2");
    return separable(grid, false, fft1d);
}

ComplexGrid ifft2(const ComplexGrid& grid) {
    require_pow2(grid.h, grid.w, "ifft2");
    return separable(grid, true, fft1d);
}

ComplexGrid dft2(const ComplexGrid& grid, bool inverse) { return separable(grid, inverse, dft1d); }

ComplexGrid any_fft2(const ComplexGrid& grid, bool inverse) {
    if (is_power_of_two(grid.h) && is_power_of_two(grid.w)) return inverse ? ifft2(grid) : fft2(grid);
    return dft2(grid, inverse);
}

double centered_radius(std::int64_t ky, std::int64_t kx, std::int64_t h, std::int64_t w) noexcept {
    return std::hypot(static_cast<double>(centered_offset(ky, h)), static_cast<double>(centered_offset(kx, w)));
}

double max_centered_radius(std::int64_t h, std::int64_t w) noexcept {
    return std::hypot(static_cast<double>(h / 2), static_cast<double>(w / 2));
}

ComplexGrid center(const ComplexGrid& grid) {
    ComplexGrid out(grid.h, grid.w);
    for (std::int64_t y = 0; y < grid.h; ++y)
        for (std::int64_t x = 0; x < grid.w; ++x) {
            const auto cy = (y + grid.h / 2) % grid.h, cx = (x + grid.w / 2) % grid.w;
            out.re(cy, cx) = grid.re(y, x);
            out.im(cy, cx) = grid.im(y, x);
        }
    return out;
}

ComplexGrid uncenter(const ComplexGrid& grid) {
    ComplexGrid out(grid.h, grid.w);
    for (std::int64_t y = 0; y < grid.h; ++y)
        for (std::int64_t x = 0; x < grid.w; ++x) {
            const auto cy = (y + grid.h / 2) % grid.h, cx = (x + grid.w / 2) % grid.w;
            out.re(y, x) = grid.re(cy, cx);
            out.im(y, x) = grid.im(cy, cx);
        }
    return out;
}

Tensor symmetrize_mask(const Tensor& centered_mask) {
    require_rank(centered_mask, 2, "symmetrize_mask");
    const auto h = centered_mask.dim(0), w = centered_mask.dim(1);
    auto mirror = [](std::int64_t u, std::int64_t n) {
        const auto k = (u + n - n / 2) % n;
        return ((n - k) % n + n / 2) % n;
    };
    Tensor out({h, w});
    auto m = centered_mask.data();
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const float a = m[static_cast<std::size_t>(y * w + x)];
            const float b = m[static_cast<std::size_t>(mirror(y, h) * w + mirror(x, w))];
            out[static_cast<std::size_t>(y * w + x)] = a == b ? a : 0.5f * (a + b);
        }
    return out;
}

void apply_centered_mask(ComplexGrid& spectrum, const Tensor& centered_mask) {
    if (centered_mask.shape() != Shape{spectrum.h, spectrum.w}) {
        throw ShapeError("apply_centered_mask: mask " + to_string(centered_mask.shape()) + " vs spectrum [" +
                         std::to_string(spectrum.h) + "," + std::to_string(spectrum.w) + "]");
    }
    for (std::int64_t y = 0; y < spectrum.h; ++y)
        for (std::int64_t x = 0; x < spectrum.w; ++x) {
            const auto cy = (y + spectrum.h / 2) % spectrum.h, cx = (x + spectrum.w / 2) % spectrum.w;
            const float m = centered_mask[static_cast<std::size_t>(cy * spectrum.w + cx)];
            spectrum.re(y, x) *= m;
            spectrum.im(y, x) *= m;
        }
}

Tensor plane(const Tensor& x, std::int64_t n, std::int64_t c) {
    require_rank(x, 4, "plane");
    const auto h = x.dim(2), w = x.dim(3);
    const auto offset = static_cast<std::ptrdiff_t>(((n * x.dim(1)) + c) * h * w);
    std::vector<float> data(x.data().begin() + offset, x.data().begin() + offset + h * w);
    return Tensor({h, w}, std::move(data));
}

}  // namespace freeu::spectral
