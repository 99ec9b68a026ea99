#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fetalfit/models.hpp"
#include "fetalfit/parallel.hpp"
#include "fetalfit/protocol.hpp"
#include "fetalfit/rng.hpp"
#include "fetalfit/volume.hpp"

namespace fetalfit {

struct ParamBounds {
    double lo;
    double hi;
};

struct FitConfig {
    std::vector<ParamBounds> bounds;  // empty -> default_bounds(model, max signal)
    int max_iterations = 500;
    double convergence_tol = 1e-10;  // relative SSE decrease
    double gradient_tol = 1e-10;
    double multistart_jitter = 0.2;  // relative log-normal jitter
    int restarts = 10;
    std::uint64_t seed = 0x5eedULL;
    bool allow_unconverged_init = false;
    bool record_trace = false;

    void validate(int n_params) const {
        if (!bounds.empty()) {
            if (static_cast<int>(bounds.size()) != n_params)
                throw std::invalid_argument("fit config: bounds count does not match model");
            for (const auto& b : bounds)
                if (!(b.lo < b.hi))
                    throw std::invalid_argument("fit config: requires lo < hi per parameter");
        }
        if (!(convergence_tol > 0.0))
            throw std::invalid_argument("fit config: convergence_tol must be > 0");
        if (restarts < 1) throw std::invalid_argument("fit config: restarts must be >= 1");
    }
};

struct FitResult {
    Model model = Model::t2;
    std::vector<double> params;
    double sse = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;  // accepted-step SSE values when record_trace is set
};

inline bool is_fraction_param(const std::string& name) {
    return name == "f" || name == "nu";
}

/// Invented defaults spanning published fetal/placental ranges; S0's upper
/// bound scales with the data. All configurable through FitConfig.
inline std::vector<ParamBounds> default_bounds(Model model, double max_signal) {
    std::vector<ParamBounds> out;
    for (const auto& name : param_names(model)) {
        if (name == "S0")
            out.push_back({1e-6, 10.0 * max_signal});
        else if (is_fraction_param(name))
            out.push_back({0.0, 1.0});
        else if (name == "Dstar")
            out.push_back({3e-3, 0.5});
        else if (name == "ADC")
            out.push_back({1e-4, 4e-3});
        else  // T2, T2p, T2t, T2fb
            out.push_back({10.0, 400.0});
    }
    return out;
}

/// Fixed heuristic starting point; multistart jitter handles the rest.
inline std::vector<double> heuristic_start(Model model, double max_signal) {
    std::vector<double> out;
    for (const auto& name : param_names(model)) {
        if (name == "S0")
            out.push_back(max_signal);
        else if (name == "f")
            out.push_back(0.3);
        else if (name == "nu")
            out.push_back(0.5);
        else if (name == "Dstar")
            out.push_back(0.05);
        else if (name == "ADC")
            out.push_back(0.0015);
        else
            out.push_back(100.0);
    }
    return out;
}

namespace detail {

inline double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

inline double logit(double x) { return std::log(x / (1.0 - x)); }

/// Maps each bounded parameter to an unconstrained coordinate: a logistic
/// between the bounds, taken in log-domain for the positive scale
/// parameters (this keeps the plain log-transform behaviour while still
/// respecting the declared upper bound exactly).
class BoundTransform {
public:
    BoundTransform(Model model, const std::vector<ParamBounds>& bounds) : bounds_(bounds) {
        const auto& names = param_names(model);
        log_scale_.resize(names.size());
        for (std::size_t i = 0; i < names.size(); ++i) {
            log_scale_[i] = !is_fraction_param(names[i]);
            if (log_scale_[i] && bounds[i].lo <= 0.0)
                throw std::invalid_argument("bounds for " + names[i] + " require lo > 0");
        }
    }

    std::size_t size() const { return bounds_.size(); }

    double to_external(std::size_t i, double u) const {
        const double s = sigmoid(u);
        double p;
        if (log_scale_[i]) {
            const double llo = std::log(bounds_[i].lo), lhi = std::log(bounds_[i].hi);
            p = std::exp(llo + (lhi - llo) * s);
        } else {
            p = bounds_[i].lo + (bounds_[i].hi - bounds_[i].lo) * s;
        }
        // exp/log round-trips can land one ulp outside the box
        return std::clamp(p, bounds_[i].lo, bounds_[i].hi);
    }

    double to_internal(std::size_t i, double p) const {
        double x;
        if (log_scale_[i]) {
            const double llo = std::log(bounds_[i].lo), lhi = std::log(bounds_[i].hi);
            x = (std::log(p) - llo) / (lhi - llo);
        } else {
            x = (p - bounds_[i].lo) / (bounds_[i].hi - bounds_[i].lo);
        }
        x = std::clamp(x, 1e-12, 1.0 - 1e-12);
        return std::clamp(logit(x), -kMaxInternal, kMaxInternal);
    }

    // sigmoid(15) is within 3e-7 of 1: parameters can sit essentially at a
    // bound, yet the transform never saturates to a dead (zero-gradient)
    // coordinate the optimizer could not leave again.
    static constexpr double kMaxInternal = 15.0;

    /// Clamps a parameter strictly inside its bounds so to_internal is finite.
    double clamp_inside(std::size_t i, double p) const {
        const double margin = 1e-9 * (bounds_[i].hi - bounds_[i].lo);
        return std::clamp(p, bounds_[i].lo + margin, bounds_[i].hi - margin);
    }

    const std::vector<ParamBounds>& bounds() const { return bounds_; }

private:
    std::vector<ParamBounds> bounds_;
    std::vector<char> log_scale_;
};

struct LmOutcome {
    Eigen::VectorXd u;
    double sse = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
};

/// Levenberg-Marquardt in the transformed (unconstrained) coordinates with a
/// forward-difference Jacobian. Steps are accepted only when the SSE strictly
/// decreases, so the accepted-SSE trace is monotone by construction.
inline LmOutcome lm_minimize(Model model, const BoundTransform& tf,
                             std::span<const double> bs, std::span<const double> tes,
                             std::span<const double> signal, const Eigen::VectorXd& u0,
                             const FitConfig& cfg) {
    const int k = static_cast<int>(tf.size());
    const int n = static_cast<int>(signal.size());

    std::vector<double> p(k);
    auto residuals = [&](const Eigen::VectorXd& u, Eigen::VectorXd& r) {
        for (int j = 0; j < k; ++j) p[j] = tf.to_external(j, u[j]);
        for (int i = 0; i < n; ++i)
            r[i] = eval_model(model, p, bs[i], tes[i]) - signal[i];
    };

    LmOutcome out;
    out.u = u0;
    Eigen::VectorXd r(n), r_try(n), r_bwd(n), u_try(k), g(k), delta(k);
    Eigen::MatrixXd J(n, k), A(k, k);
    residuals(out.u, r);
    out.sse = r.squaredNorm();
    if (cfg.record_trace) out.trace.push_back(out.sse);

    constexpr double kJacStep = 1e-6;
    double lambda = 1e-3;

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        out.iterations = iter + 1;
        for (int j = 0; j < k; ++j) {
            u_try = out.u;
            u_try[j] += kJacStep;
            residuals(u_try, r_try);
            u_try[j] = out.u[j] - kJacStep;
            residuals(u_try, r_bwd);
            J.col(j) = (r_try - r_bwd) / (2.0 * kJacStep);
        }
        g.noalias() = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < cfg.gradient_tol) {
            out.converged = true;
            break;
        }
        A.noalias() = J.transpose() * J;

        bool accepted = false;
        while (lambda <= 1e14) {
            Eigen::MatrixXd M = A;
            for (int j = 0; j < k; ++j) M(j, j) += lambda * (A(j, j) + 1e-12);
            delta = M.ldlt().solve(-g);
            for (int j = 0; j < k; ++j) delta[j] = std::clamp(delta[j], -6.0, 6.0);
            u_try = out.u + delta;
            for (int j = 0; j < k; ++j)
                u_try[j] = std::clamp(u_try[j], -BoundTransform::kMaxInternal,
                                      BoundTransform::kMaxInternal);
            residuals(u_try, r_try);
            const double sse_try = r_try.squaredNorm();
            if (std::isfinite(sse_try) && sse_try < out.sse) {
                const double rel = (out.sse - sse_try) / std::max(out.sse, 1e-300);
                out.u = u_try;
                r = r_try;
                out.sse = sse_try;
                if (cfg.record_trace) out.trace.push_back(out.sse);
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                if (rel < cfg.convergence_tol || out.sse < 1e-30) out.converged = true;
                break;
            }
            lambda *= 2.0;
        }
        if (!accepted) {
            // No strictly decreasing step exists at any damping: the achieved
            // relative decrease is zero, which satisfies the SSE criterion.
            out.converged = true;
            break;
        }
        if (out.converged) break;
    }
    return out;
}

}  // namespace detail

/// Mean in-mask signal per protocol sample (the ROI signal).
inline std::vector<double> roi_mean_signal(const Volume4D& vol, const OrganMask& mask) {
    std::vector<double> mean(vol.ns, 0.0);
    std::size_t count = 0;
    const std::size_t voxels = vol.spatial_count();
    for (std::size_t v = 0; v < voxels; ++v) {
        if (!mask.in(v)) continue;
        ++count;
        for (int s = 0; s < vol.ns; ++s) mean[s] += vol.data[v + voxels * s];
    }
    if (count == 0) throw std::invalid_argument("roi_mean_signal: empty mask");
    for (double& m : mean) m /= static_cast<double>(count);
    return mean;
}

/// Constrained nonlinear least squares on one signal series: fixed heuristic
/// start plus seeded log-normal multistarts, best SSE wins. Never throws for
/// non-convergence; does throw for degenerate input (no signal scale).
inline FitResult fit_roi(Model model, const AcquisitionProtocol& protocol,
                         std::span<const double> signal, const FitConfig& config) {
    const int k = param_count(model);
    config.validate(k);
    if (signal.size() != protocol.size())
        throw std::invalid_argument("fit_roi: signal length does not match protocol");
    double max_signal = 0.0;
    for (double s : signal) {
        if (!std::isfinite(s) || s < 0.0)
            throw std::invalid_argument("fit_roi: signal must be finite and >= 0");
        max_signal = std::max(max_signal, s);
    }
    if (max_signal <= 0.0)
        throw std::invalid_argument("fit_roi: degenerate input, signal is identically zero");

    const std::vector<ParamBounds> bounds =
        config.bounds.empty() ? default_bounds(model, max_signal) : config.bounds;
    detail::BoundTransform tf(model, bounds);

    std::vector<double> bs(protocol.size()), tes(protocol.size());
    for (std::size_t i = 0; i < protocol.size(); ++i) {
        bs[i] = protocol.samples[i].b;
        tes[i] = protocol.samples[i].te;
    }

    std::vector<double> start = heuristic_start(model, max_signal);
    Rng rng(config.seed);
    detail::LmOutcome best;
    int best_start = -1;
    for (int s = 0; s < config.restarts; ++s) {
        Eigen::VectorXd u0(k);
        for (int j = 0; j < k; ++j) {
            if (s >= 2 && s % 2 == 0) {
                // Every other extra start explores the whole box; jitter
                // around one heuristic point cannot reach basins far from it.
                u0[j] = detail::logit(rng.uniform(0.05, 0.95));
            } else {
                double p = start[j];
                if (s > 0) p *= std::exp(config.multistart_jitter * rng.normal());
                u0[j] = tf.to_internal(j, tf.clamp_inside(j, p));
            }
        }
        auto outcome = detail::lm_minimize(model, tf, bs, tes, signal, u0, config);
        if (outcome.sse < best.sse || best_start < 0) {
            best = std::move(outcome);
            best_start = s;
        }
    }

    FitResult result;
    result.model = model;
    result.params.resize(k);
    for (int j = 0; j < k; ++j) result.params[j] = tf.to_external(j, best.u[j]);
    result.sse = best.sse;
    result.iterations = best.iterations;
    result.converged = best.converged;
    result.trace = std::move(best.trace);
    return result;
}

/// Independent per-voxel fits, each initialised at the ROI estimate
/// (single start, no jitter). Out-of-mask voxels stay absent; per-voxel
/// failures are logged, never thrown. Output is identical for any thread
/// count: voxels write disjoint slots only.
inline ParameterMap fit_voxelwise(Model model, const AcquisitionProtocol& protocol,
                                  const Volume4D& volume, const OrganMask& mask,
                                  const FitResult& roi_init, const FitConfig& config) {
    const int k = param_count(model);
    config.validate(k);
    if (static_cast<int>(roi_init.params.size()) != k)
        throw std::invalid_argument("fit_voxelwise: roi_init does not match model");
    if (!roi_init.converged && !config.allow_unconverged_init)
        throw std::invalid_argument(
            "fit_voxelwise: ROI initialiser did not converge (set allow_unconverged_init)");
    mask.validate_against(volume);

    double max_signal = 0.0;
    const std::size_t voxels = volume.spatial_count();
    std::vector<std::size_t> active;
    for (std::size_t v = 0; v < voxels; ++v) {
        if (!mask.in(v)) continue;
        active.push_back(v);
        for (int s = 0; s < volume.ns; ++s)
            max_signal = std::max(max_signal, static_cast<double>(volume.data[v + voxels * s]));
    }
    const std::vector<ParamBounds> bounds =
        config.bounds.empty() ? default_bounds(model, std::max(max_signal, 1.0)) : config.bounds;
    detail::BoundTransform tf(model, bounds);

    std::vector<double> bs(protocol.size()), tes(protocol.size());
    for (std::size_t i = 0; i < protocol.size(); ++i) {
        bs[i] = protocol.samples[i].b;
        tes[i] = protocol.samples[i].te;
    }
    Eigen::VectorXd u0(k);
    for (int j = 0; j < k; ++j)
        u0[j] = tf.to_internal(j, tf.clamp_inside(j, roi_init.params[j]));

    ParameterMap map;
    map.model = to_string(model);
    map.organ = to_string(mask.organ);
    map.param_names = param_names(model);
    map.nx = volume.nx;
    map.ny = volume.ny;
    map.nz = volume.nz;
    map.np = k;
    map.data.assign(voxels * static_cast<std::size_t>(k), kAbsent);
    map.residual.assign(voxels, kAbsent);

    std::vector<std::string> failure_codes(active.size());
    std::vector<std::uint8_t> unconverged(active.size(), 0);

    parallel_for(active.size(), [&](std::size_t i) {
        const std::size_t v = active[i];
        std::vector<double> signal(volume.ns);
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (int s = 0; s < volume.ns; ++s) {
            signal[s] = volume.data[v + voxels * s];
            lo = std::min(lo, signal[s]);
            hi = std::max(hi, signal[s]);
        }
        if (hi <= 0.0) {
            failure_codes[i] = "degenerate_signal";
            return;
        }
        FitConfig voxel_cfg = config;
        voxel_cfg.restarts = 1;
        auto outcome = detail::lm_minimize(model, tf, bs, tes, signal, u0, voxel_cfg);
        if (!std::isfinite(outcome.sse)) {
            failure_codes[i] = "non_finite_objective";
            return;
        }
        for (int j = 0; j < k; ++j)
            map.data[map.index(v, j)] = static_cast<float>(tf.to_external(j, outcome.u[j]));
        map.residual[v] = static_cast<float>(outcome.sse);
        if (!outcome.converged) unconverged[i] = 1;
    });

    for (std::size_t i = 0; i < active.size(); ++i) {
        if (!failure_codes[i].empty()) map.failures.emplace_back(active[i], failure_codes[i]);
        map.not_converged += unconverged[i];
    }
    return map;
}

}  // namespace fetalfit
