// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "freeu/tensor.hpp"
#include "freeu/trajectory.hpp"

namespace freeu::spectral {

/// Row-major H x W grid of complex values stored as interleaved (re, im) floats.
struct ComplexGrid {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<float> data;  // length 2*h*w

    ComplexGrid() = default;
    ComplexGrid(std::int64_t rows, std::int64_t cols) : h(rows), w(cols), data(static_cast<std::size_t>(2 * rows * cols)) {}

    float& re(std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>(2 * (y * w + x))]; }
    float& im(std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>(2 * (y * w + x) + 1)]; }
    float re(std::int64_t y, std::int64_t x) const { return data[static_cast<std::size_t>(2 * (y * w + x))]; }
    float im(std::int64_t y, std::int64_t x) const { return data[static_cast<std::size_t>(2 * (y * w + x) + 1)]; }
    float abs(std::int64_t y, std::int64_t x) const;
};

bool is_power_of_two(std::int64_t n) noexcept;

/// Unnormalized radix-2 forward transform of a real [H,W] field.
/// Throws ShapeError unless both extents are powers of two.
ComplexGrid fft2(const Tensor& field);
ComplexGrid fft2(const ComplexGrid& grid);
/// Inverse transform carrying the 1/(H*W) factor.
ComplexGrid ifft2(const ComplexGrid& grid);

/// Separable direct DFT for arbitrary extents (fallback for non power-of-two grids).
ComplexGrid dft2(const ComplexGrid& grid, bool inverse);

/// Transform that picks radix-2 when possible and the direct DFT otherwise.
ComplexGrid any_fft2(const ComplexGrid& grid, bool inverse);

ComplexGrid to_complex(const Tensor& field);
/// Real part as an [H,W] tensor; `max_imag` receives the largest |imaginary| residue.
Tensor real_part(const ComplexGrid& grid, float* max_imag = nullptr);

/// Offset of unshifted frequency index k from the spectrum centre floor(n/2).
inline std::int64_t centered_offset(std::int64_t k, std::int64_t n) noexcept { return (k + n / 2) % n - n / 2; }
/// Radius (in grid cells) of unshifted coefficient (ky, kx) on the centred grid.
double centered_radius(std::int64_t ky, std::int64_t kx, std::int64_t h, std::int64_t w) noexcept;
double max_centered_radius(std::int64_t h, std::int64_t w) noexcept;

/// Moves the zero frequency to (floor(H/2), floor(W/2)), and back.
ComplexGrid center(const ComplexGrid& grid);
ComplexGrid uncenter(const ComplexGrid& grid);

/// Replaces each centred-grid mask value by the mean of itself and its
/// conjugate-mirror cell so a real field stays real after masking.
Tensor symmetrize_mask(const Tensor& centered_mask);

/// Multiplies an unshifted spectrum by a centred-grid [H,W] mask.
void apply_centered_mask(ComplexGrid& spectrum, const Tensor& centered_mask);

/// Largest tolerated imaginary residue before a masked inverse transform is rejected.
inline constexpr float kImaginaryAbort = 1e-3f;

// ---------------------------------------------------------------------------
// Measurement instruments

struct SpectrumProfile {
    std::vector<double> edges;   // K+1 ascending radii starting at 0
    std::vector<double> values;  // K relative log amplitudes

    std::size_t bands() const noexcept { return values.size(); }
};

inline constexpr double kLogFloor = 1e-8;

/// Band-mean log magnitude relative to the DC log magnitude over K uniform radial bands.
SpectrumProfile relative_log_amplitude(const Tensor& field, int bands = 8);

/// Per-channel profiles averaged over channels and batch of an [N,C,H,W] tensor.
SpectrumProfile feature_spectrum(const Tensor& features, int bands = 8);

/// Element-wise mean of profiles that share band edges.
SpectrumProfile average_profiles(const std::vector<SpectrumProfile>& profiles);

/// Mean of the profile over its top `fraction` of bands (e.g. 0.25 for the top quartile).
double top_band_mean(const SpectrumProfile& profile, double fraction);

/// CSV with header `band_lo,band_hi,rel_log_amp` and 9 significant digits.
void write_profile_csv(std::ostream& os, const SpectrumProfile& profile);

struct LowHigh {
    Tensor low;
    Tensor high;
};

/// Splits an [H,W] image into r < r_cut and r >= r_cut frequency parts.
LowHigh split_low_high(const Tensor& image, double r_cut);

struct BandStatsRow {
    int t = 0;
    double low_mean = 0.0;   // mean |F| over cells with r < r_cut
    double high_mean = 0.0;  // mean |F| over cells with r >= r_cut
    double low_delta = 0.0;  // |change| from the previous recorded step
    double high_delta = 0.0;
};

/// Per-step band amplitudes of the evolving x_t. Statistics are computed per
/// sample (channel 0) and averaged over the batch; the first row has zero deltas.
std::vector<BandStatsRow> trajectory_band_stats(const TrajectoryRecord& record, double r_cut);

/// Mean low/high |delta| over rows [first_row, end).
std::pair<double, double> mean_band_deltas(const std::vector<BandStatsRow>& rows, std::size_t first_row);

void write_band_stats_csv(std::ostream& os, const std::vector<BandStatsRow>& rows);

/// [H,W] plane (n, c) of an [N,C,H,W] tensor.
Tensor plane(const Tensor& x, std::int64_t n, std::int64_t c);

}  // namespace freeu::spectral
