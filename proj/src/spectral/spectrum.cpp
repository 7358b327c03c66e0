// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "freeu/spectral.hpp"

namespace freeu::spectral {

namespace {

std::vector<double> uniform_edges(std::int64_t h, std::int64_t w, int bands) {
    const double rmax = max_centered_radius(h, w);
    std::vector<double> edges(static_cast<std::size_t>(bands) + 1);
    for (int k = 0; k <= bands; ++k) edges[static_cast<std::size_t>(k)] = rmax * k / bands;
    return edges;
}

// Band of radius r; the outermost band is closed so the largest radius is counted.
int band_of(double r, const std::vector<double>& edges) {
    const int bands = static_cast<int>(edges.size()) - 1;
    const auto it = std::upper_bound(edges.begin(), edges.end(), r);
    const int k = static_cast<int>(it - edges.begin()) - 1;
    return std::clamp(k, 0, bands - 1);
}

Tensor masked_inverse(const ComplexGrid& spectrum, const Tensor& mask) {
    ComplexGrid masked = spectrum;
    apply_centered_mask(masked, mask);
    float residue = 0.0f;
    Tensor out = real_part(any_fft2(masked, true), &residue);
    if (residue > kImaginaryAbort) {
        throw NumericError("masked inverse transform left imaginary residue " + std::to_string(residue));
    }
    return out;
}

}  // namespace

SpectrumProfile relative_log_amplitude(const Tensor& field, int bands) {
    require_rank(field, 2, "relative_log_amplitude");
    if (bands < 2) throw std::invalid_argument("relative_log_amplitude: need at least 2 bands");
    const auto h = field.dim(0), w = field.dim(1);
    const ComplexGrid spectrum = any_fft2(to_complex(field), false);
    SpectrumProfile profile;
    profile.edges = uniform_edges(h, w, bands);
    std::vector<double> total(static_cast<std::size_t>(bands), 0.0);
    std::vector<std::int64_t> count(static_cast<std::size_t>(bands), 0);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const auto k = static_cast<std::size_t>(band_of(centered_radius(y, x, h, w), profile.edges));
            total[k] += spectrum.abs(y, x);
            ++count[k];
        }
    const double dc = std::log(static_cast<double>(spectrum.abs(0, 0)) + kLogFloor);
    profile.values.resize(static_cast<std::size_t>(bands));
    for (std::size_t k = 0; k < total.size(); ++k) {
        const double mean = count[k] ? total[k] / static_cast<double>(count[k]) : 0.0;
        profile.values[k] = std::log(mean + kLogFloor) - dc;
    }
    return profile;
}

SpectrumProfile average_profiles(const std::vector<SpectrumProfile>& profiles) {
    if (profiles.empty()) throw std::invalid_argument("average_profiles: no profiles");
    SpectrumProfile out;
    out.edges = profiles.front().edges;
    out.values.assign(profiles.front().bands(), 0.0);
    for (const auto& p : profiles) {
        if (p.edges != out.edges) throw std::invalid_argument("average_profiles: band edges differ");
        for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += p.values[k];
    }
    for (auto& v : out.values) v /= static_cast<double>(profiles.size());
    return out;
}

SpectrumProfile feature_spectrum(const Tensor& features, int bands) {
    require_rank(features, 4, "feature_spectrum");
    std::vector<SpectrumProfile> profiles;
    profiles.reserve(static_cast<std::size_t>(features.dim(0) * features.dim(1)));
    for (std::int64_t n = 0; n < features.dim(0); ++n)
        for (std::int64_t c = 0; c < features.dim(1); ++c)
            profiles.push_back(relative_log_amplitude(plane(features, n, c), bands));
    return average_profiles(profiles);
}

double top_band_mean(const SpectrumProfile& profile, double fraction) {
    const std::size_t k = profile.bands();
    const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(k) * fraction)));
    double s = 0.0;
    for (std::size_t i = k - take; i < k; ++i) s += profile.values[i];
    return s / static_cast<double>(take);
}

void write_profile_csv(std::ostream& os, const SpectrumProfile& profile) {
    const auto old_flags = os.flags();
    const auto old_precision = os.precision();
    os << "band_lo,band_hi,rel_log_amp\n" << std::setprecision(9);
    os.unsetf(std::ios::floatfield);
    for (std::size_t k = 0; k < profile.bands(); ++k) {
        os << profile.edges[k] << ',' << profile.edges[k + 1] << ',' << profile.values[k] << '\n';
    }
    os.flags(old_flags);
    os.precision(old_precision);
}

LowHigh split_low_high(const Tensor& image, double r_cut) {
    require_rank(image, 2, "split_low_high");
    const auto h = image.dim(0), w = image.dim(1);
    if (!is_power_of_two(h) || !is_power_of_two(w)) {
        throw ShapeError("split_low_high: extents " + to_string(image.shape()) + " are not powers of two");
    }
    Tensor low_mask({h, w});
    Tensor high_mask({h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const double r = std::hypot(static_cast<double>(y - h / 2), static_cast<double>(x - w / 2));
            const bool low = r < r_cut;
            low_mask[static_cast<std::size_t>(y * w + x)] = low ? 1.0f : 0.0f;
            high_mask[static_cast<std::size_t>(y * w + x)] = low ? 0.0f : 1.0f;
        }
    const ComplexGrid spectrum = fft2(image);
    return {masked_inverse(spectrum, symmetrize_mask(low_mask)), masked_inverse(spectrum, symmetrize_mask(high_mask))};
}

std::vector<BandStatsRow> trajectory_band_stats(const TrajectoryRecord& record, double r_cut) {
    if (record.steps.empty()) throw std::invalid_argument("trajectory_band_stats: empty record");
    const auto& first = record.steps.front().x_t;
    require_rank(first, 4, "trajectory_band_stats");
    const auto batch = first.dim(0), h = first.dim(2), w = first.dim(3);

    std::vector<BandStatsRow> rows(record.steps.size());
    std::vector<double> prev_low(static_cast<std::size_t>(batch)), prev_high(static_cast<std::size_t>(batch));
    for (std::size_t i = 0; i < record.steps.size(); ++i) {
        const auto& step = record.steps[i];
        if (step.x_t.shape() != first.shape()) throw ShapeError("trajectory_band_stats: state shape changed");
        BandStatsRow& row = rows[i];
        row.t = step.t;
        for (std::int64_t n = 0; n < batch; ++n) {
            const ComplexGrid f = any_fft2(to_complex(plane(step.x_t, n, 0)), false);
            double low = 0.0, high = 0.0;
            std::int64_t n_low = 0, n_high = 0;
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    if (centered_radius(y, x, h, w) < r_cut) {
                        low += f.abs(y, x);
                        ++n_low;
                    } else {
                        high += f.abs(y, x);
                        ++n_high;
                    }
                }
            low = n_low ? low / static_cast<double>(n_low) : 0.0;
            high = n_high ? high / static_cast<double>(n_high) : 0.0;
            row.low_mean += low;
            row.high_mean += high;
            const auto s = static_cast<std::size_t>(n);
            if (i > 0) {
                row.low_delta += std::abs(low - prev_low[s]);
                row.high_delta += std::abs(high - prev_high[s]);
            }
            prev_low[s] = low;
            prev_high[s] = high;
        }
        const auto b = static_cast<double>(batch);
        row.low_mean /= b;
        row.high_mean /= b;
        row.low_delta /= b;
        row.high_delta /= b;
    }
    return rows;
}

std::pair<double, double> mean_band_deltas(const std::vector<BandStatsRow>& rows, std::size_t first_row) {
    double low = 0.0, high = 0.0;
    std::size_t n = 0;
    for (std::size_t i = first_row; i < rows.size(); ++i, ++n) {
        low += rows[i].low_delta;
        high += rows[i].high_delta;
    }
    if (n == 0) return {0.0, 0.0};
    return {low / static_cast<double>(n), high / static_cast<double>(n)};
}

void write_band_stats_csv(std::ostream& os, const std::vector<BandStatsRow>& rows) {
    const auto old_precision = os.precision();
    os << "t,low_mean,high_mean,low_delta,high_delta\n" << std::setprecision(9);
    for (const auto& r : rows) {
        os << r.t << ',' << r.low_mean << ',' << r.high_mean << ',' << r.low_delta << ',' << r.high_delta << '\n';
    }
    os.precision(old_precision);
}

}  // namespace freeu::spectral
