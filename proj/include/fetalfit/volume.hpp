#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fetalfit/protocol.hpp"

namespace fetalfit {

enum class Organ { placenta, liver, brain, lungs };

inline const char* to_string(Organ o) {
    switch (o) {
        case Organ::placenta: return "placenta";
        case Organ::liver: return "liver";
        case Organ::brain: return "brain";
        case Organ::lungs: return "lungs";
    }
    return "?";
}

inline Organ parse_organ(const std::string& s) {
    if (s == "placenta") return Organ::placenta;
    if (s == "liver") return Organ::liver;
    if (s == "brain") return Organ::brain;
    if (s == "lungs") return Organ::lungs;
    throw std::invalid_argument("unknown organ: " + s);
}

inline constexpr std::array<Organ, 4> kAllOrgans = {
    Organ::placenta, Organ::liver, Organ::brain, Organ::lungs};

enum class Cohort { control, fgr };

inline const char* to_string(Cohort c) {
    return c == Cohort::control ? "control" : "fgr";
}

inline Cohort parse_cohort(const std::string& s) {
    if (s == "control") return Cohort::control;
    if (s == "fgr") return Cohort::fgr;
    throw std::invalid_argument("unknown cohort: " + s);
}

/// 4D signal grid: one intensity per voxel per protocol sample.
/// Storage is x-fastest, then y, z, sample (matching the on-disk layout).
struct Volume4D {
    int nx = 0, ny = 0, nz = 0, ns = 0;
    std::array<double, 3> voxel_size = {1.9, 1.9, 6.0};  // mm
    std::vector<float> data;

    std::size_t spatial_count() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
    std::size_t index(int x, int y, int z, int s) const {
        return ((static_cast<std::size_t>(s) * nz + z) * ny + y) * nx + x;
    }
    std::size_t spatial_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
    float at(int x, int y, int z, int s) const { return data[index(x, y, z, s)]; }
    float& at(int x, int y, int z, int s) { return data[index(x, y, z, s)]; }

    /// Signal series for one voxel across all samples.
    std::vector<double> series(std::size_t spatial_idx) const {
        std::vector<double> out(ns);
        const std::size_t stride = spatial_count();
        for (int s = 0; s < ns; ++s) out[s] = data[spatial_idx + stride * s];
        return out;
    }

    void validate(const AcquisitionProtocol& protocol) const {
        if (nx <= 0 || ny <= 0 || nz <= 0 || ns <= 0)
            throw std::invalid_argument("volume: non-positive dims");
        if (static_cast<std::size_t>(ns) != protocol.size())
            throw std::invalid_argument("volume: ns does not match protocol sample count");
        if (data.size() != spatial_count() * static_cast<std::size_t>(ns))
            throw std::invalid_argument("volume: data size does not match dims");
        for (float v : data)
            if (!std::isfinite(v) || v < 0.0f)
                throw std::invalid_argument("volume: intensities must be finite and >= 0");
    }
};

/// Binary per-organ voxel membership over the spatial grid of a Volume4D.
struct OrganMask {
    Organ organ = Organ::placenta;
    int nx = 0, ny = 0, nz = 0;
    std::vector<std::uint8_t> data;

    std::size_t spatial_count() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
    bool in(std::size_t spatial_idx) const { return data[spatial_idx] != 0; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }

    void validate_against(const Volume4D& vol) const {
        if (nx != vol.nx || ny != vol.ny || nz != vol.nz)
            throw std::invalid_argument(std::string("mask ") + to_string(organ) +
                                        ": dims do not match volume");
        if (data.size() != spatial_count())
            throw std::invalid_argument("mask: data size does not match dims");
        for (auto v : data)
            if (v > 1) throw std::invalid_argument("mask: values must be 0/1");
        if (count() == 0) throw std::invalid_argument("mask: no voxels set");
    }
};

inline constexpr float kAbsent = std::numeric_limits<float>::quiet_NaN();

inline bool is_absent(double v) { return std::isnan(v); }

/// Per-voxel fitted parameter values for one model over one organ.
/// Out-of-mask voxels hold NaN in every channel, never zero.
struct ParameterMap {
    std::string model;
    std::string organ;
    std::vector<std::string> param_names;
    int nx = 0, ny = 0, nz = 0, np = 0;
    std::vector<float> data;       // np frames, x-fastest within each frame
    std::vector<float> residual;   // per-voxel SSE, NaN outside mask
    std::vector<std::pair<std::size_t, std::string>> failures;
    std::size_t not_converged = 0;

    std::size_t spatial_count() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
    std::size_t index(std::size_t spatial_idx, int param) const {
        return spatial_count() * static_cast<std::size_t>(param) + spatial_idx;
    }
    float value(std::size_t spatial_idx, int param) const {
        return data[index(spatial_idx, param)];
    }
    bool present(std::size_t spatial_idx) const {
        return !std::isnan(data[spatial_idx]);
    }

    /// In-mask (present) values of one parameter channel.
    std::vector<double> present_values(int param) const {
        std::vector<double> out;
        const std::size_t n = spatial_count();
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            float v = data[index(i, param)];
            if (!std::isnan(v)) out.push_back(v);
        }
        return out;
    }

    int param_index(const std::string& name) const {
        for (std::size_t i = 0; i < param_names.size(); ++i)
            if (param_names[i] == name) return static_cast<int>(i);
        throw std::invalid_argument("parameter map has no parameter " + name);
    }
};

/// Per-subject clinical labels.
struct SubjectRecord {
    std::string id;
    Cohort cohort = Cohort::control;
    double ga_at_scan = 0.0;       // weeks
    double ga_at_delivery = 0.0;   // weeks
    double scan_to_delivery = 0.0; // weeks
    double baby_weight = 0.0;      // grams

    void validate() const {
        if (id.empty()) throw std::invalid_argument("subject: empty id");
        if (std::fabs(scan_to_delivery - (ga_at_delivery - ga_at_scan)) > 1e-9)
            throw std::invalid_argument("subject " + id +
                                        ": scan_to_delivery != ga_at_delivery - ga_at_scan");
        if (ga_at_scan < 20.0 || ga_at_scan > 42.0)
            throw std::invalid_argument("subject " + id + ": ga_at_scan outside [20, 42] weeks");
    }
};

/// Subject x feature matrix. Absent entries are NaN in memory and empty
/// cells in CSV.
struct FeatureTable {
    std::vector<std::string> feature_names;
    std::vector<SubjectRecord> subjects;
    std::vector<std::vector<double>> rows;

    std::size_t n_subjects() const { return rows.size(); }
    std::size_t n_features() const { return feature_names.size(); }

    void add_row(SubjectRecord subject, std::vector<double> values) {
        if (values.size() != feature_names.size())
            throw std::invalid_argument("feature table: row width mismatch");
        subjects.push_back(std::move(subject));
        rows.push_back(std::move(values));
    }

    void validate() const {
        if (subjects.size() != rows.size())
            throw std::invalid_argument("feature table: label/row count mismatch");
        for (const auto& r : rows)
            if (r.size() != feature_names.size())
                throw std::invalid_argument("feature table: not rectangular");
    }

    int feature_index(const std::string& name) const {
        for (std::size_t i = 0; i < feature_names.size(); ++i)
            if (feature_names[i] == name) return static_cast<int>(i);
        return -1;
    }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i][j];
        return out;
    }
};

}  // namespace fetalfit
