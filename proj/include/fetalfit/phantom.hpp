#pragma once

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fetalfit/dataset_io.hpp"
#include "fetalfit/fitting.hpp"
#include "fetalfit/models.hpp"
#include "fetalfit/rng.hpp"
#include "fetalfit/volume.hpp"

namespace fetalfit {

/// Per-parameter generating distribution: cohort-level means with relative
/// subject-to-subject and voxel-to-voxel spreads.
struct ParamDistribution {
    double control_mean = 0.0;
    double fgr_mean = 0.0;
    double subject_spread = 0.08;
    double voxel_spread = 0.15;
};

struct OrganSpec {
    Organ organ = Organ::placenta;
    Model generating_model = Model::extivim;
    std::vector<std::pair<std::string, ParamDistribution>> params;  // ordered as param_names
};

struct Box {
    int x0, x1, y0, y1, z0, z1;  // half-open
    std::size_t volume() const {
        return static_cast<std::size_t>(std::max(0, x1 - x0)) * std::max(0, y1 - y0) *
               std::max(0, z1 - z0);
    }
    bool overlaps(const Box& o) const {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1 && z0 < o.z1 && o.z0 < z1;
    }
};

/// Fixed proportional layout of the four organ boxes on the grid.
inline Box organ_box(Organ organ, int nx, int ny, int nz) {
    auto r = [](double f, int n) { return static_cast<int>(std::lround(f * n)); };
    const int z0 = r(0.12, nz), z1 = r(0.62, nz);
    switch (organ) {
        case Organ::placenta: return {r(0.03, nx), r(0.47, nx), r(0.03, ny), r(0.41, ny), z0, z1};
        case Organ::liver: return {r(0.53, nx), r(0.78, nx), r(0.03, ny), r(0.28, ny), z0, z1};
        case Organ::brain: return {r(0.53, nx), r(0.78, nx), r(0.34, ny), r(0.59, ny), z0, z1};
        case Organ::lungs: return {r(0.03, nx), r(0.28, nx), r(0.47, ny), r(0.66, ny), z0, z1};
    }
    throw std::invalid_argument("organ_box: unknown organ");
}

/// Plausible generating values tuned to the qualitative cohort directions:
/// FGR placenta and liver carry lower f, D* and T2 than control; brain and
/// lungs draw identically for both cohorts. Distribution centres, not claims
/// of measured values.
inline std::vector<OrganSpec> default_organ_specs() {
    std::vector<OrganSpec> specs;
    {
        OrganSpec s;
        s.organ = Organ::placenta;
        s.generating_model = Model::decide;
        s.params = {{"S0", {100.0, 100.0, 0.05, 0.10}}, {"f", {0.35, 0.22}},
                    {"Dstar", {0.06, 0.035}},           {"T2fb", {160.0, 128.0}},
                    {"nu", {0.40, 0.40}},               {"ADC", {1.8e-3, 1.6e-3}}};
        specs.push_back(std::move(s));
    }
    {
        OrganSpec s;
        s.organ = Organ::liver;
        s.generating_model = Model::extivim;
        s.params = {{"S0", {90.0, 90.0, 0.05, 0.10}}, {"f", {0.25, 0.15}},
                    {"Dstar", {0.05, 0.035}},         {"T2p", {140.0, 112.0}},
                    {"T2t", {80.0, 64.0}},            {"ADC", {1.5e-3, 1.5e-3}}};
        specs.push_back(std::move(s));
    }
    {
        OrganSpec s;
        s.organ = Organ::brain;
        s.generating_model = Model::extivim;
        s.params = {{"S0", {110.0, 110.0, 0.05, 0.10}}, {"f", {0.10, 0.10}},
                    {"Dstar", {0.045, 0.045}},          {"T2p", {150.0, 150.0}},
                    {"T2t", {120.0, 120.0}},            {"ADC", {1.1e-3, 1.1e-3}}};
        specs.push_back(std::move(s));
    }
    {
        OrganSpec s;
        s.organ = Organ::lungs;
        s.generating_model = Model::extivim;
        s.params = {{"S0", {80.0, 80.0, 0.05, 0.10}}, {"f", {0.12, 0.12}},
                    {"Dstar", {0.045, 0.045}},        {"T2p", {130.0, 130.0}},
                    {"T2t", {70.0, 70.0}},            {"ADC", {2.2e-3, 2.2e-3}}};
        specs.push_back(std::move(s));
    }
    return specs;
}

struct CohortConfig {
    int n_control = 12;
    int n_fgr = 12;
    int nx = 32, ny = 32, nz = 8;
    double snr = 30.0;  // <= 0 disables noise
    std::uint64_t seed = 1;
    std::vector<OrganSpec> organs = default_organ_specs();
    AcquisitionProtocol protocol = AcquisitionProtocol::default_protocol();
    double ga_noise_sd = 1.0;       // weeks
    double weight_noise_sd = 120.0; // grams

    void validate() const {
        if (n_control < 1 || n_fgr < 1)
            throw std::invalid_argument("phantom: cohort sizes must be >= 1");
        protocol.validate();
        if (organs.empty()) throw std::invalid_argument("phantom: no organ specs");
        std::vector<Box> boxes;
        for (const auto& o : organs) {
            Box b = organ_box(o.organ, nx, ny, nz);
            if (b.volume() < 8 || b.x1 > nx || b.y1 > ny || b.z1 > nz)
                throw std::invalid_argument("phantom: dims too small to place 4 organs");
            for (const auto& prev : boxes)
                if (b.overlaps(prev))
                    throw std::invalid_argument("phantom: organ regions overlap");
            boxes.push_back(b);
            if (o.params.size() != param_names(o.generating_model).size())
                throw std::invalid_argument("phantom: param list does not match model");
            for (std::size_t j = 0; j < o.params.size(); ++j)
                if (o.params[j].first != param_names(o.generating_model)[j])
                    throw std::invalid_argument("phantom: param order must match model");
            // fixed effect directions in the affected organs
            if (o.organ == Organ::placenta || o.organ == Organ::liver) {
                for (const auto& [name, dist] : o.params) {
                    const bool directed =
                        name == "f" || name == "Dstar" || name.rfind("T2", 0) == 0;
                    if (directed && !(dist.fgr_mean < dist.control_mean))
                        throw std::invalid_argument(
                            "phantom: FGR " + std::string(to_string(o.organ)) + " " + name +
                            " mean must be below control");
                }
            }
        }
    }
};

namespace phantom_detail {

/// Smooth unit-variance field over a box: white noise, separable box blur,
/// then normalised over the box.
inline std::vector<double> smooth_field(const Box& b, Rng& rng) {
    const int sx = b.x1 - b.x0, sy = b.y1 - b.y0, sz = b.z1 - b.z0;
    const std::size_t n = static_cast<std::size_t>(sx) * sy * sz;
    std::vector<double> f(n);
    for (auto& v : f) v = rng.normal();
    auto idx = [&](int x, int y, int z) {
        return (static_cast<std::size_t>(z) * sy + y) * sx + x;
    };
    std::vector<double> tmp(n);
    for (int pass = 0; pass < 2; ++pass) {
        // x, then y, then z: 3-point box blur with clamped ends
        for (int z = 0; z < sz; ++z)
            for (int y = 0; y < sy; ++y)
                for (int x = 0; x < sx; ++x) {
                    const int xm = std::max(0, x - 1), xp = std::min(sx - 1, x + 1);
                    tmp[idx(x, y, z)] =
                        (f[idx(xm, y, z)] + f[idx(x, y, z)] + f[idx(xp, y, z)]) / 3.0;
                }
        f.swap(tmp);
        for (int z = 0; z < sz; ++z)
            for (int y = 0; y < sy; ++y)
                for (int x = 0; x < sx; ++x) {
                    const int ym = std::max(0, y - 1), yp = std::min(sy - 1, y + 1);
                    tmp[idx(x, y, z)] =
                        (f[idx(x, ym, z)] + f[idx(x, y, z)] + f[idx(x, yp, z)]) / 3.0;
                }
        f.swap(tmp);
        for (int z = 0; z < sz; ++z)
            for (int y = 0; y < sy; ++y)
                for (int x = 0; x < sx; ++x) {
                    const int zm = std::max(0, z - 1), zp = std::min(sz - 1, z + 1);
                    tmp[idx(x, y, z)] =
                        (f[idx(x, y, zm)] + f[idx(x, y, z)] + f[idx(x, y, zp)]) / 3.0;
                }
        f.swap(tmp);
    }
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : f) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& v : f) v = (v - mean) / sd;
    return f;
}

/// Clip margin rule shared with the recoverability checks: at least 5% of
/// each bound's range away from both ends.
inline std::pair<double, double> margin_interval(const ParamBounds& b) {
    const double m = 0.05 * (b.hi - b.lo);
    return {b.lo + m, b.hi - m};
}

}  // namespace phantom_detail

/// One synthetic subject: smooth per-organ truth fields, forward simulation
/// through the organ's generating model, Rician noise, severity-linked
/// outcome labels. Bit-deterministic per (config, subject_seed).
inline Dataset generate_subject(Cohort cohort, const CohortConfig& config,
                                std::uint64_t subject_seed, const std::string& id) {
    config.validate();
    Rng rng(subject_seed);

    Dataset ds;
    ds.protocol = config.protocol;
    ds.volume.nx = config.nx;
    ds.volume.ny = config.ny;
    ds.volume.nz = config.nz;
    ds.volume.ns = static_cast<int>(config.protocol.size());
    const std::size_t voxels = ds.volume.spatial_count();
    ds.volume.data.assign(voxels * config.protocol.size(), 0.0f);

    double placenta_mean_f = 0.0;

    for (const auto& spec : config.organs) {
        const Box box = organ_box(spec.organ, config.nx, config.ny, config.nz);
        const auto& names = param_names(spec.generating_model);
        const int np = static_cast<int>(names.size());

        // subject-level organ means
        std::vector<double> subject_mean(np);
        for (int j = 0; j < np; ++j) {
            const auto& dist = spec.params[j].second;
            const double base = cohort == Cohort::control ? dist.control_mean : dist.fgr_mean;
            const double z = std::clamp(rng.normal(), -2.5, 2.5);
            subject_mean[j] = base * (1.0 + dist.subject_spread * z);
        }
        const double s0_mean = subject_mean[0];
        auto bounds = default_bounds(spec.generating_model, 1.5 * s0_mean);

        // smooth voxel fields per parameter
        std::vector<std::vector<double>> fields(np);
        for (int j = 0; j < np; ++j) fields[j] = phantom_detail::smooth_field(box, rng);

        OrganMask mask;
        mask.organ = spec.organ;
        mask.nx = config.nx;
        mask.ny = config.ny;
        mask.nz = config.nz;
        mask.data.assign(voxels, 0);

        ParameterMap truth;
        truth.model = to_string(spec.generating_model);
        truth.organ = to_string(spec.organ);
        truth.param_names = names;
        truth.nx = config.nx;
        truth.ny = config.ny;
        truth.nz = config.nz;
        truth.np = np;
        truth.data.assign(voxels * static_cast<std::size_t>(np), kAbsent);
        truth.residual.assign(voxels, kAbsent);

        const double sigma = config.snr > 0.0 ? s0_mean / config.snr : 0.0;
        const int sx = box.x1 - box.x0, sy = box.y1 - box.y0;
        double organ_f_sum = 0.0;
        std::size_t organ_f_count = 0;
        std::vector<double> p(np);
        for (int z = box.z0; z < box.z1; ++z) {
            for (int y = box.y0; y < box.y1; ++y) {
                for (int x = box.x0; x < box.x1; ++x) {
                    const std::size_t v = ds.volume.spatial_index(x, y, z);
                    mask.data[v] = 1;
                    const std::size_t fi =
                        (static_cast<std::size_t>(z - box.z0) * sy + (y - box.y0)) * sx +
                        (x - box.x0);
                    for (int j = 0; j < np; ++j) {
                        const auto& dist = spec.params[j].second;
                        double val = subject_mean[j] * (1.0 + dist.voxel_spread * fields[j][fi]);
                        const auto [lo, hi] = phantom_detail::margin_interval(bounds[j]);
                        p[j] = std::clamp(val, lo, hi);
                        truth.data[truth.index(v, j)] = static_cast<float>(p[j]);
                        if (names[j] == "f") {
                            organ_f_sum += p[j];
                            ++organ_f_count;
                        }
                    }
                    auto series = simulate_series(spec.generating_model, p, config.protocol);
                    if (sigma > 0.0)
                        series = add_rician_noise(series, sigma, derive_seed(subject_seed, v));
                    for (std::size_t s = 0; s < series.size(); ++s)
                        ds.volume.data[v + voxels * s] = static_cast<float>(series[s]);
                }
            }
        }
        if (spec.organ == Organ::placenta && organ_f_count > 0)
            placenta_mean_f = organ_f_sum / static_cast<double>(organ_f_count);

        ds.masks.push_back(std::move(mask));
        ds.truths.emplace(to_string(spec.organ), std::move(truth));
    }

    // outcome labels: noisy monotone functions of the true placental f
    SubjectRecord r;
    r.id = id;
    r.cohort = cohort;
    double ga = 26.0 + 14.0 * (placenta_mean_f - 0.15) / 0.25;
    ga = std::clamp(ga, 26.0, 41.0);
    ga += config.ga_noise_sd * std::clamp(rng.normal(), -2.5, 2.5);
    ga = std::clamp(ga, 25.0, 41.8);
    r.ga_at_delivery = ga;
    const double scan_hi = std::min(34.0, ga - 2.0);
    r.ga_at_scan = scan_hi <= 24.0 ? scan_hi : rng.uniform(24.0, scan_hi);
    r.scan_to_delivery = r.ga_at_delivery - r.ga_at_scan;
    double w = 3600.0 / (1.0 + std::exp(-0.2 * (ga - 34.0)));
    if (cohort == Cohort::fgr) w *= 0.82;
    w += config.weight_noise_sd * std::clamp(rng.normal(), -2.5, 2.5);
    r.baby_weight = std::max(300.0, w);
    ds.subject = r;
    return ds;
}

/// Writes n_control + n_fgr subject directories under root. Per-subject
/// seeds are split off the cohort seed, so generation order (or future
/// parallelisation) cannot change any subject's content.
inline std::vector<fs::path> generate_cohort(const CohortConfig& config, const fs::path& root) {
    config.validate();
    fs::create_directories(root);
    std::vector<fs::path> dirs;
    char name[16];
    for (int i = 0; i < config.n_control + config.n_fgr; ++i) {
        const bool control = i < config.n_control;
        std::snprintf(name, sizeof(name), "%c%02d", control ? 'c' : 'f',
                      control ? i + 1 : i - config.n_control + 1);
        Dataset ds = generate_subject(control ? Cohort::control : Cohort::fgr, config,
                                      derive_seed(config.seed, static_cast<std::uint64_t>(i)),
                                      name);
        const fs::path dir = root / name;
        write_dataset(dir, ds);
        dirs.push_back(dir);
    }
    return dirs;
}

inline nlohmann::json cohort_config_to_json(const CohortConfig& c) {
    nlohmann::json organs = nlohmann::json::array();
    for (const auto& o : c.organs) {
        nlohmann::json params = nlohmann::json::array();
        for (const auto& [name, d] : o.params)
            params.push_back({{"name", name},
                              {"control_mean", d.control_mean},
                              {"fgr_mean", d.fgr_mean},
                              {"subject_spread", d.subject_spread},
                              {"voxel_spread", d.voxel_spread}});
        organs.push_back({{"organ", to_string(o.organ)},
                          {"model", to_string(o.generating_model)},
                          {"params", params}});
    }
    nlohmann::json j = protocol_to_json(c.protocol);
    return {{"n_control", c.n_control}, {"n_fgr", c.n_fgr},
            {"dims", {c.nx, c.ny, c.nz}}, {"snr", c.snr},
            {"seed", c.seed},             {"organs", organs},
            {"protocol", j},              {"ga_noise_sd", c.ga_noise_sd},
            {"weight_noise_sd", c.weight_noise_sd}};
}

inline CohortConfig cohort_config_from_json(const nlohmann::json& j) {
    CohortConfig c;
    c.n_control = j.value("n_control", c.n_control);
    c.n_fgr = j.value("n_fgr", c.n_fgr);
    if (j.contains("dims")) {
        c.nx = j["dims"].at(0).get<int>();
        c.ny = j["dims"].at(1).get<int>();
        c.nz = j["dims"].at(2).get<int>();
    }
    c.snr = j.value("snr", c.snr);
    c.seed = j.value("seed", c.seed);
    c.ga_noise_sd = j.value("ga_noise_sd", c.ga_noise_sd);
    c.weight_noise_sd = j.value("weight_noise_sd", c.weight_noise_sd);
    if (j.contains("protocol")) c.protocol = protocol_from_json(j["protocol"]);
    if (j.contains("organs")) {
        c.organs.clear();
        for (const auto& oj : j["organs"]) {
            OrganSpec o;
            o.organ = parse_organ(oj.at("organ").get<std::string>());
            o.generating_model = parse_model(oj.at("model").get<std::string>());
            for (const auto& pj : oj.at("params")) {
                ParamDistribution d;
                d.control_mean = pj.at("control_mean").get<double>();
                d.fgr_mean = pj.at("fgr_mean").get<double>();
                d.subject_spread = pj.value("subject_spread", d.subject_spread);
                d.voxel_spread = pj.value("voxel_spread", d.voxel_spread);
                o.params.emplace_back(pj.at("name").get<std::string>(), d);
            }
            c.organs.push_back(std::move(o));
        }
    }
    c.validate();
    return c;
}

}  // namespace fetalfit
