#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fetalfit/protocol.hpp"
#include "fetalfit/rng.hpp"

namespace fetalfit {

/// Fixed relaxation constants at 1.5 T: maternal blood and trophoblast space.
inline constexpr double kT2MaternalBloodMs = 240.0;
inline constexpr double kT2TrophoblastMs = 46.0;

enum class Model { t2, adc, ivim, t2ivim, extivim, decide };

inline constexpr std::array<Model, 6> kAllModels = {
    Model::t2, Model::adc, Model::ivim, Model::t2ivim, Model::extivim, Model::decide};

inline const char* to_string(Model m) {
    switch (m) {
        case Model::t2: return "t2";
        case Model::adc: return "adc";
        case Model::ivim: return "ivim";
        case Model::t2ivim: return "t2ivim";
        case Model::extivim: return "extivim";
        case Model::decide: return "decide";
    }
    return "?";
}

inline Model parse_model(const std::string& s) {
    if (s == "t2") return Model::t2;
    if (s == "adc") return Model::adc;
    if (s == "ivim") return Model::ivim;
    if (s == "t2ivim") return Model::t2ivim;
    if (s == "extivim") return Model::extivim;
    if (s == "decide") return Model::decide;
    throw std::invalid_argument("unknown model: " + s);
}

// Mono-exponential T2 decay: S = S0 exp(-te/T2).
struct T2DecayParams {
    double s0;
    double t2;  // ms
};

// Mono-exponential diffusion decay: S = S0 exp(-b ADC).
struct AdcDecayParams {
    double s0;
    double adc;  // mm^2/s
};

// Bi-exponential perfusion/diffusion split.
struct StandardIvimParams {
    double s0;
    double f;      // perfusion fraction
    double dstar;  // pseudo-diffusion, mm^2/s
    double adc;    // mm^2/s
};

// Standard IVIM under a single shared T2 weighting.
struct T2IvimParams {
    double s0;
    double t2;  // ms
    double f;
    double dstar;
    double adc;
};

// Separate blood (T2p) and tissue (T2t) relaxation per compartment.
struct ExtIvimParams {
    double s0;
    double f;
    double dstar;
    double t2p;  // ms
    double t2t;  // ms
    double adc;
};

// Three placental compartments: fetal capillaries (f, D*, T2fb), maternal
// blood and trophoblast space split by nu with fixed T2 constants.
struct DecideParams {
    double s0;
    double f;
    double dstar;
    double t2fb;  // ms
    double nu;    // maternal blood volume fraction
    double adc;
};

namespace detail {
// Relaxation rate 1/T2 with the T2 -> infinity limit mapped to rate 0.
inline double rate(double t2_ms) {
    return std::isinf(t2_ms) ? 0.0 : 1.0 / t2_ms;
}
}  // namespace detail

inline double eval_t2(const T2DecayParams& p, double te) {
    return p.s0 * std::exp(-te * detail::rate(p.t2));
}

inline double eval_adc(const AdcDecayParams& p, double b) {
    return p.s0 * std::exp(-b * p.adc);
}

inline double eval_standard_ivim(const StandardIvimParams& p, double b) {
    return p.s0 * (p.f * std::exp(-b * p.dstar) + (1.0 - p.f) * std::exp(-b * p.adc));
}

inline double eval_t2_ivim(const T2IvimParams& p, double b, double te) {
    return std::exp(-te * detail::rate(p.t2)) *
           eval_standard_ivim({p.s0, p.f, p.dstar, p.adc}, b);
}

inline double eval_ext_ivim(const ExtIvimParams& p, double b, double te) {
    return p.s0 * (p.f * std::exp(-b * p.dstar - te * detail::rate(p.t2p)) +
                   (1.0 - p.f) * std::exp(-b * p.adc - te * detail::rate(p.t2t)));
}

inline double eval_decide(const DecideParams& p, double b, double te) {
    const double tissue = p.nu * std::exp(-te / kT2MaternalBloodMs) +
                          (1.0 - p.nu) * std::exp(-te / kT2TrophoblastMs);
    return p.s0 * (p.f * std::exp(-b * p.dstar - te * detail::rate(p.t2fb)) +
                   (1.0 - p.f) * std::exp(-b * p.adc) * tissue);
}

inline int param_count(Model m) {
    switch (m) {
        case Model::t2:
        case Model::adc: return 2;
        case Model::ivim: return 4;
        case Model::t2ivim: return 5;
        case Model::extivim:
        case Model::decide: return 6;
    }
    return 0;
}

inline const std::vector<std::string>& param_names(Model m) {
    static const std::vector<std::string> t2 = {"S0", "T2"};
    static const std::vector<std::string> adc = {"S0", "ADC"};
    static const std::vector<std::string> ivim = {"S0", "f", "Dstar", "ADC"};
    static const std::vector<std::string> t2ivim = {"S0", "T2", "f", "Dstar", "ADC"};
    static const std::vector<std::string> extivim = {"S0", "f", "Dstar", "T2p", "T2t", "ADC"};
    static const std::vector<std::string> decide = {"S0", "f", "Dstar", "T2fb", "nu", "ADC"};
    switch (m) {
        case Model::t2: return t2;
        case Model::adc: return adc;
        case Model::ivim: return ivim;
        case Model::t2ivim: return t2ivim;
        case Model::extivim: return extivim;
        case Model::decide: return decide;
    }
    return t2;
}

/// Evaluates any model from its flat parameter vector (ordered as
/// param_names). This is the single entry point the fitting engine and the
/// phantom generator share.
inline double eval_model(Model m, std::span<const double> p, double b, double te) {
    switch (m) {
        case Model::t2: return eval_t2({p[0], p[1]}, te);
        case Model::adc: return eval_adc({p[0], p[1]}, b);
        case Model::ivim: return eval_standard_ivim({p[0], p[1], p[2], p[3]}, b);
        case Model::t2ivim: return eval_t2_ivim({p[0], p[1], p[2], p[3], p[4]}, b, te);
        case Model::extivim:
            return eval_ext_ivim({p[0], p[1], p[2], p[3], p[4], p[5]}, b, te);
        case Model::decide:
            return eval_decide({p[0], p[1], p[2], p[3], p[4], p[5]}, b, te);
    }
    throw std::invalid_argument("eval_model: unknown model");
}

inline std::vector<double> simulate_series(Model m, std::span<const double> p,
                                           const AcquisitionProtocol& protocol) {
    std::vector<double> out(protocol.size());
    for (std::size_t i = 0; i < protocol.size(); ++i)
        out[i] = eval_model(m, p, protocol.samples[i].b, protocol.samples[i].te);
    return out;
}

/// Magnitude-MRI (Rician) corruption: each sample s becomes
/// sqrt((s + n1)^2 + n2^2) with n1, n2 ~ N(0, sigma). Deterministic per seed.
inline std::vector<double> add_rician_noise(std::span<const double> clean, double sigma,
                                            std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_rician_noise: sigma must be >= 0");
    std::vector<double> out(clean.begin(), clean.end());
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (double& s : out) {
        const double n1 = rng.normal(0.0, sigma);
        const double n2 = rng.normal(0.0, sigma);
        s = std::hypot(s + n1, n2);
    }
    return out;
}

}  // namespace fetalfit
