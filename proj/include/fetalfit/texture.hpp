#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace fetalfit {

/// 2D scalar slice with NaN marking absent pixels (row-major).
struct Slice2D {
    int rows = 0, cols = 0;
    std::vector<double> values;

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
};

/// Quantised label image; -1 marks absent pixels.
struct LabelImage {
    int rows = 0, cols = 0;
    std::vector<int> labels;

    int at(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
    int& at(int r, int c) { return labels[static_cast<std::size_t>(r) * cols + c]; }
};

struct GlcmOffset {
    int dr;
    int dc;
};

struct TextureConfig {
    int levels = 16;
    // the four standard unit offsets: 0, 45, 90, 135 degrees
    std::vector<GlcmOffset> offsets = {{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}};
    bool symmetric = true;
    // quantisation range; unset -> global (min, max) of the map's present values
    std::optional<std::pair<double, double>> range;

    void validate() const {
        if (levels < 2) throw std::invalid_argument("texture: levels must be >= 2");
        if (offsets.empty()) throw std::invalid_argument("texture: needs at least one offset");
    }
};

/// Fixed-equal-width quantisation: v -> floor(levels*(v-min)/(max-min)),
/// clamped so v == max lands in the top bin. A constant slice maps to label 0.
inline LabelImage quantize(const Slice2D& slice, int levels,
                           std::optional<std::pair<double, double>> range = std::nullopt) {
    if (slice.values.empty()) throw std::invalid_argument("quantize: empty slice");
    double lo, hi;
    if (range) {
        lo = range->first;
        hi = range->second;
    } else {
        lo = std::numeric_limits<double>::infinity();
        hi = -std::numeric_limits<double>::infinity();
        for (double v : slice.values) {
            if (std::isnan(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!(lo <= hi)) throw std::invalid_argument("quantize: slice has no present values");
    }
    LabelImage out;
    out.rows = slice.rows;
    out.cols = slice.cols;
    out.labels.assign(slice.values.size(), -1);
    const double width = hi - lo;
    for (std::size_t i = 0; i < slice.values.size(); ++i) {
        const double v = slice.values[i];
        if (std::isnan(v)) continue;
        int label = width > 0.0
                        ? static_cast<int>(std::floor(levels * (v - lo) / width))
                        : 0;
        out.labels[i] = std::clamp(label, 0, levels - 1);
    }
    return out;
}

/// Gray-level co-occurrence matrix with its marginal moments.
struct Glcm {
    int levels = 0;
    std::vector<double> p;  // levels x levels, row-major
    std::vector<double> px, py;
    double mu_x = 0, mu_y = 0, sigma_x = 0, sigma_y = 0;
    double mu = 0;  // scalar mean over row index: sum_ij i p(i,j)

    double at(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

/// Counts co-occurrences of labels at the given displacement over all pairs
/// whose both endpoints are in-image and present; symmetric mode adds the
/// transposed counts. Normalised to sum 1.
inline Glcm build_glcm(const LabelImage& img, GlcmOffset offset, bool symmetric,
                       int levels) {
    Glcm g;
    g.levels = levels;
    g.p.assign(static_cast<std::size_t>(levels) * levels, 0.0);
    double total = 0.0;
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            const int a = img.at(r, c);
            if (a < 0) continue;
            const int rr = r + offset.dr, cc = c + offset.dc;
            if (rr < 0 || rr >= img.rows || cc < 0 || cc >= img.cols) continue;
            const int b = img.at(rr, cc);
            if (b < 0) continue;
            g.p[static_cast<std::size_t>(a) * levels + b] += 1.0;
            total += 1.0;
            if (symmetric) {
                g.p[static_cast<std::size_t>(b) * levels + a] += 1.0;
                total += 1.0;
            }
        }
    }
    if (total == 0.0) throw std::invalid_argument("build_glcm: no valid pixel pairs");
    for (double& v : g.p) v /= total;

    g.px.assign(levels, 0.0);
    g.py.assign(levels, 0.0);
    for (int i = 0; i < levels; ++i)
        for (int j = 0; j < levels; ++j) {
            g.px[i] += g.at(i, j);
            g.py[j] += g.at(i, j);
        }
    for (int i = 0; i < levels; ++i) {
        g.mu_x += i * g.px[i];
        g.mu_y += i * g.py[i];
    }
    for (int i = 0; i < levels; ++i) {
        g.sigma_x += (i - g.mu_x) * (i - g.mu_x) * g.px[i];
        g.sigma_y += (i - g.mu_y) * (i - g.mu_y) * g.py[i];
    }
    g.sigma_x = std::sqrt(g.sigma_x);
    g.sigma_y = std::sqrt(g.sigma_y);
    g.mu = g.mu_x;
    return g;
}

/// The six Haralick descriptors. Correlation is undefined (absent) when
/// either marginal is degenerate. Energy keeps the square root over the sum
/// of squared probabilities.
struct HaralickVector {
    double energy = 0;
    double entropy = 0;
    std::optional<double> correlation;
    double contrast = 0;
    double variance = 0;
    double homogeneity = 0;
};

inline HaralickVector haralick(const Glcm& g) {
    HaralickVector h;
    double sum_sq = 0.0, corr = 0.0;
    for (int i = 0; i < g.levels; ++i) {
        for (int j = 0; j < g.levels; ++j) {
            const double p = g.at(i, j);
            if (p == 0.0) continue;
            sum_sq += p * p;
            h.entropy -= p * std::log(p);
            h.contrast += (i - j) * (i - j) * p;
            h.variance += (i - g.mu) * (i - g.mu) * p;
            h.homogeneity += p / (1.0 + (i - j) * (i - j));
            corr += p * (i - g.mu_x) * (j - g.mu_y);
        }
    }
    h.energy = std::sqrt(sum_sq);
    if (g.sigma_x * g.sigma_y > 0.0) h.correlation = corr / (g.sigma_x * g.sigma_y);
    return h;
}

inline constexpr std::array<const char*, 6> kHaralickNames = {
    "energy", "entropy", "correlation", "contrast", "variance", "homogeneity"};

/// mean and max across the slice x offset collection, per feature.
/// Correlation aggregates over the slices where it is defined; NaN when it
/// never is.
struct TextureFeatures {
    std::array<double, 6> mean;
    std::array<double, 6> max;
    std::size_t n_glcms = 0;  // (slice, offset) pairs that produced a GLCM
};

inline TextureFeatures texture_features(const std::vector<Slice2D>& slices,
                                        const TextureConfig& config) {
    config.validate();
    std::optional<std::pair<double, double>> range = config.range;
    if (!range) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& s : slices)
            for (double v : s.values) {
                if (std::isnan(v)) continue;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        if (!(lo <= hi)) throw std::invalid_argument("texture_features: no present values");
        range = {lo, hi};
    }

    TextureFeatures out;
    std::array<double, 6> sum{};
    std::array<double, 6> best;
    best.fill(-std::numeric_limits<double>::infinity());
    std::size_t corr_count = 0;
    double corr_sum = 0.0, corr_best = -std::numeric_limits<double>::infinity();

    for (const auto& slice : slices) {
        bool any_present = false;
        for (double v : slice.values)
            if (!std::isnan(v)) {
                any_present = true;
                break;
            }
        if (!any_present) continue;
        LabelImage labels = quantize(slice, config.levels, range);
        for (const auto& off : config.offsets) {
            Glcm g;
            try {
                g = build_glcm(labels, off, config.symmetric, config.levels);
            } catch (const std::invalid_argument&) {
                continue;  // no valid pairs for this slice/offset
            }
            HaralickVector h = haralick(g);
            const std::array<double, 6> v = {h.energy,   h.entropy,
                                             h.correlation.value_or(0.0), h.contrast,
                                             h.variance, h.homogeneity};
            for (int i = 0; i < 6; ++i) {
                if (i == 2) continue;
                sum[i] += v[i];
                best[i] = std::max(best[i], v[i]);
            }
            if (h.correlation) {
                ++corr_count;
                corr_sum += *h.correlation;
                corr_best = std::max(corr_best, *h.correlation);
            }
            ++out.n_glcms;
        }
    }
    if (out.n_glcms == 0)
        throw std::invalid_argument("texture_features: no computable slice");
    for (int i = 0; i < 6; ++i) {
        out.mean[i] = sum[i] / static_cast<double>(out.n_glcms);
        out.max[i] = best[i];
    }
    if (corr_count > 0) {
        out.mean[2] = corr_sum / static_cast<double>(corr_count);
        out.max[2] = corr_best;
    } else {
        out.mean[2] = std::numeric_limits<double>::quiet_NaN();
        out.max[2] = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}  // namespace fetalfit
