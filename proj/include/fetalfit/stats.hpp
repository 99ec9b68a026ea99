#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fetalfit/volume.hpp"

namespace fetalfit {

namespace special {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse standard normal CDF: Acklam's rational approximation polished with
/// two Halley steps against the erfc-based CDF (full double precision).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("normal_quantile: p must be in (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    for (int it = 0; it < 2; ++it) {
        const double e = normal_cdf(x) - p;
        const double u = e / normal_pdf(x);
        x -= u / (1.0 + x * u / 2.0);
    }
    return x;
}

/// Regularized incomplete beta I_x(a, b) via the standard continued fraction
/// (modified Lentz), switching to the symmetric form for fast convergence.
inline double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    auto betacf = [](double aa, double bb, double xx) {
        const int max_iter = 500;
        const double eps = 1e-15, fpmin = 1e-300;
        const double qab = aa + bb, qap = aa + 1.0, qam = aa - 1.0;
        double cfc = 1.0;
        double dfd = 1.0 - qab * xx / qap;
        if (std::fabs(dfd) < fpmin) dfd = fpmin;
        dfd = 1.0 / dfd;
        double h = dfd;
        for (int m = 1; m <= max_iter; ++m) {
            const int m2 = 2 * m;
            double num = m * (bb - m) * xx / ((qam + m2) * (aa + m2));
            dfd = 1.0 + num * dfd;
            if (std::fabs(dfd) < fpmin) dfd = fpmin;
            cfc = 1.0 + num / cfc;
            if (std::fabs(cfc) < fpmin) cfc = fpmin;
            dfd = 1.0 / dfd;
            h *= dfd * cfc;
            num = -(aa + m) * (qab + m) * xx / ((aa + m2) * (qap + m2));
            dfd = 1.0 + num * dfd;
            if (std::fabs(dfd) < fpmin) dfd = fpmin;
            cfc = 1.0 + num / cfc;
            if (std::fabs(cfc) < fpmin) cfc = fpmin;
            dfd = 1.0 / dfd;
            const double del = dfd * cfc;
            h *= del;
            if (std::fabs(del - 1.0) < eps) break;
        }
        return h;
    };
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

/// Two-sided p for a Student t statistic with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0) throw std::invalid_argument("student_t p: df must be > 0");
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t));
}

}  // namespace special

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::optional<double> df;
};

/// Location/scale summary of one voxelwise map channel.
struct MapSummary {
    double mean = 0, median = 0, min = 0, max = 0, mode = 0, variance = 0;
};

/// Mode of continuous values: 64 equal-width bins over [min, max]; the
/// centre of the fullest bin wins, first bin on ties.
inline double binned_mode(std::span<const double> values) {
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) return lo;
    constexpr int kBins = 64;
    int counts[kBins] = {};
    for (double v : values) {
        int bin = static_cast<int>(std::floor(kBins * (v - lo) / (hi - lo)));
        bin = std::clamp(bin, 0, kBins - 1);
        ++counts[bin];
    }
    int best = 0;
    for (int i = 1; i < kBins; ++i)
        if (counts[i] > counts[best]) best = i;
    return lo + (best + 0.5) * (hi - lo) / kBins;
}

inline MapSummary summarize_values(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("summarize: no values");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    MapSummary s;
    s.min = sorted.front();
    s.max = sorted.back();
    const std::size_t n = sorted.size();
    s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double sum = 0;
    for (double v : sorted) sum += v;
    s.mean = sum / static_cast<double>(n);
    double ss = 0;
    for (double v : sorted) ss += (v - s.mean) * (v - s.mean);
    s.variance = ss / static_cast<double>(n);  // population variance
    s.mode = binned_mode(sorted);
    return s;
}

/// Summary over the present in-mask values of one parameter channel.
inline MapSummary summarize_map(const ParameterMap& map, const std::string& param) {
    auto values = map.present_values(map.param_index(param));
    if (values.empty()) throw std::invalid_argument("summarize_map: empty map");
    if (values.size() == 1)
        std::fprintf(stderr, "warning: %s/%s/%s has a single voxel; variance reported as 0\n",
                     map.organ.c_str(), map.model.c_str(), param.c_str());
    return summarize_values(values);
}

/// Plain quotient; absent (NaN) when either side is absent or the
/// denominator is zero (never +-inf in a table).
inline double organ_ratio(double numerator, double denominator) {
    if (std::isnan(numerator) || std::isnan(denominator))
        return std::numeric_limits<double>::quiet_NaN();
    if (denominator == 0.0) {
        std::fprintf(stderr, "warning: organ ratio with zero denominator reported absent\n");
        return std::numeric_limits<double>::quiet_NaN();
    }
    return numerator / denominator;
}

/// Shapiro-Wilk normality test, Royston's AS R94 formulation
/// (Blom scores, polynomial-corrected extreme weights, normalised z p-value).
inline TestResult shapiro_wilk(std::span<const double> samples) {
    const int n = static_cast<int>(samples.size());
    if (n < 3 || n > 5000)
        throw std::invalid_argument("shapiro_wilk: n must be in [3, 5000]");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    if (x.front() == x.back())
        throw std::invalid_argument("shapiro_wilk: zero sample variance");

    std::vector<double> m(n);
    double m_norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
        m[i] = special::normal_quantile((i + 1 - 0.375) / (n + 0.25));
        m_norm2 += m[i] * m[i];
    }

    std::vector<double> a(n);
    if (n == 3) {
        a = {-std::numbers::sqrt2 / 2.0, 0.0, std::numbers::sqrt2 / 2.0};
    } else {
        const double u = 1.0 / std::sqrt(static_cast<double>(n));
        const double cn = m[n - 1] / std::sqrt(m_norm2);
        const double an = cn + u * (0.221157 +
                                    u * (-0.147981 +
                                         u * (-2.071190 + u * (4.434685 + u * -2.706056))));
        double phi;
        if (n > 5) {
            const double cn1 = m[n - 2] / std::sqrt(m_norm2);
            const double an1 =
                cn1 + u * (0.042981 +
                           u * (-0.293762 + u * (-1.752461 + u * (5.682633 + u * -3.582633))));
            phi = (m_norm2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                  (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            a[n - 1] = an;
            a[0] = -an;
            a[n - 2] = an1;
            a[1] = -an1;
            for (int i = 2; i < n - 2; ++i) a[i] = m[i] / std::sqrt(phi);
        } else {
            phi = (m_norm2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
            a[n - 1] = an;
            a[0] = -an;
            for (int i = 1; i < n - 1; ++i) a[i] = m[i] / std::sqrt(phi);
        }
    }

    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        num += a[i] * x[i];
        den += (x[i] - mean) * (x[i] - mean);
    }
    const double W = std::clamp(num * num / den, 0.0, 1.0);

    double p;
    if (n == 3) {
        constexpr double stqr = 1.047198;  // asin(sqrt(3/4))
        p = 6.0 / std::numbers::pi * (std::asin(std::sqrt(W)) - stqr);
        p = std::clamp(p, 0.0, 1.0);
    } else if (n <= 11) {
        const double an = n;
        const double g = -2.273 + 0.459 * an;
        const double w = -std::log(g - std::log1p(-W));
        const double mu = 0.5440 + an * (-0.39978 + an * (0.025054 + an * -6.714e-4));
        const double sigma = std::exp(1.3822 + an * (-0.77857 + an * (0.062767 + an * -0.0020322)));
        p = 1.0 - special::normal_cdf((w - mu) / sigma);
    } else {
        const double ln_n = std::log(static_cast<double>(n));
        const double w = std::log1p(-W);
        const double mu = -1.5861 + ln_n * (-0.31082 + ln_n * (-0.083751 + ln_n * 0.0038915));
        const double sigma = std::exp(-0.4803 + ln_n * (-0.082676 + ln_n * 0.0030302));
        p = 1.0 - special::normal_cdf((w - mu) / sigma);
    }

    TestResult r;
    r.statistic = W;
    r.p_value = p;
    return r;
}

/// Two-sample t test: Welch by default, pooled (Student) behind the flag.
/// Two-sided p through the regularized incomplete beta function.
inline TestResult t_test(std::span<const double> group_a, std::span<const double> group_b,
                         bool pooled = false) {
    const double na = static_cast<double>(group_a.size());
    const double nb = static_cast<double>(group_b.size());
    if (group_a.size() < 2 || group_b.size() < 2)
        throw std::invalid_argument("t_test: both groups need n >= 2");
    auto mean_var = [](std::span<const double> v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair<double, double>{mean, ss / (static_cast<double>(v.size()) - 1.0)};
    };
    const auto [ma, va] = mean_var(group_a);
    const auto [mb, vb] = mean_var(group_b);
    if (va == 0.0 && vb == 0.0)
        throw std::invalid_argument("t_test: both groups have zero variance");

    TestResult r;
    if (pooled) {
        const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
        const double se = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
        r.statistic = (ma - mb) / se;
        r.df = na + nb - 2.0;
    } else {
        const double sa = va / na, sb = vb / nb;
        const double se = std::sqrt(sa + sb);
        r.statistic = (ma - mb) / se;
        r.df = (sa + sb) * (sa + sb) /
               (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    }
    r.p_value = r.statistic == 0.0
                    ? 1.0
                    : special::student_t_two_sided_p(r.statistic, *r.df);
    return r;
}

struct RankedFeature {
    std::string name;
    double t = 0.0;
    double p = 1.0;
    std::size_t n_control = 0;
    std::size_t n_fgr = 0;
};

/// Per-feature Welch t test between the cohorts, ranked by ascending p
/// (ties: |t| descending, then name). Absent values excluded pairwise;
/// features that cannot be tested are dropped.
inline std::vector<RankedFeature> rank_features(const FeatureTable& table,
                                                bool pooled = false) {
    table.validate();
    std::size_t n_control = 0, n_fgr = 0;
    for (const auto& s : table.subjects) (s.cohort == Cohort::control ? n_control : n_fgr)++;
    if (n_control < 2 || n_fgr < 2)
        throw std::invalid_argument("rank_features: both cohorts need n >= 2");

    std::vector<RankedFeature> out;
    for (std::size_t j = 0; j < table.n_features(); ++j) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < table.n_subjects(); ++i) {
            const double v = table.rows[i][j];
            if (std::isnan(v)) continue;
            (table.subjects[i].cohort == Cohort::control ? a : b).push_back(v);
        }
        if (a.size() < 2 || b.size() < 2) continue;
        TestResult t;
        try {
            t = t_test(a, b, pooled);
        } catch (const std::invalid_argument&) {
            continue;  // degenerate variances
        }
        out.push_back({table.feature_names[j], t.statistic, t.p_value, a.size(), b.size()});
    }
    std::sort(out.begin(), out.end(), [](const RankedFeature& x, const RankedFeature& y) {
        if (x.p != y.p) return x.p < y.p;
        if (std::fabs(x.t) != std::fabs(y.t)) return std::fabs(x.t) > std::fabs(y.t);
        return x.name < y.name;
    });
    return out;
}

inline std::vector<RankedFeature> significant_features(const std::vector<RankedFeature>& ranked,
                                                       double alpha = 0.05) {
    std::vector<RankedFeature> out;
    for (const auto& f : ranked)
        if (f.p < alpha) out.push_back(f);
    return out;
}

/// Benjamini-Hochberg adjusted p-values for an ascending-p ranked list.
inline std::vector<double> benjamini_hochberg(const std::vector<RankedFeature>& ranked) {
    const std::size_t m = ranked.size();
    std::vector<double> adj(m);
    double running = 1.0;
    for (std::size_t i = m; i-- > 0;) {
        const double q = ranked[i].p * static_cast<double>(m) / static_cast<double>(i + 1);
        running = std::min(running, q);
        adj[i] = running;
    }
    return adj;
}

}  // namespace fetalfit
