#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fetalfit/models.hpp"
#include "fetalfit/protocol.hpp"
#include "fetalfit/volume.hpp"

namespace fetalfit {

namespace fs = std::filesystem;
using nlohmann::json;

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

static_assert(std::endian::native == std::endian::little,
              "raw volume format is little-endian; big-endian hosts are unsupported");

/// One on-disk subject: sidecar, raw 4D volume, per-organ masks, labels and
/// (for phantoms) per-organ ground-truth maps.
struct Dataset {
    AcquisitionProtocol protocol;
    Volume4D volume;
    std::vector<OrganMask> masks;
    SubjectRecord subject;
    std::map<std::string, ParameterMap> truths;  // organ name -> truth map

    const OrganMask& mask(Organ o) const {
        for (const auto& m : masks)
            if (m.organ == o) return m;
        throw io_error(std::string("dataset has no mask for ") + to_string(o));
    }
    bool has_mask(Organ o) const {
        for (const auto& m : masks)
            if (m.organ == o) return true;
        return false;
    }
};

namespace detail {

inline void write_raw_f32(const fs::path& path, const std::vector<float>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw io_error("write failed: " + path.string());
}

inline std::vector<float> read_raw_f32(const fs::path& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw io_error("missing file: " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count * sizeof(float))
        throw io_error(path.string() + ": size " + std::to_string(bytes) +
                       " bytes does not match declared dims (" +
                       std::to_string(expected_count * sizeof(float)) + " expected)");
    std::vector<float> data(expected_count);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw io_error("read failed: " + path.string());
    return data;
}

inline void write_raw_u8(const fs::path& path, const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw io_error("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_raw_u8(const fs::path& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw io_error("missing file: " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count)
        throw io_error(path.string() + ": size does not match declared dims");
    std::vector<std::uint8_t> data(expected_count);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    return data;
}

inline json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("missing file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw io_error(path.string() + ": " + e.what());
    }
    return j;
}

inline void save_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for write: " + path.string());
    out << j.dump(2) << "\n";
}

// Shortest representation that round-trips a double through text.
inline std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline json protocol_to_json(const AcquisitionProtocol& p) {
    json samples = json::array();
    for (const auto& s : p.samples) samples.push_back({s.b, s.te});
    return {{"samples", samples}, {"field_strength", p.field_strength}};
}

inline AcquisitionProtocol protocol_from_json(const json& j) {
    AcquisitionProtocol p;
    for (const auto& s : j.at("samples"))
        p.samples.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    p.field_strength = j.value("field_strength", 1.5);
    return p;
}

inline json subject_to_json(const SubjectRecord& r) {
    return {{"id", r.id},
            {"cohort", to_string(r.cohort)},
            {"ga_at_scan", r.ga_at_scan},
            {"ga_at_delivery", r.ga_at_delivery},
            {"scan_to_delivery", r.scan_to_delivery},
            {"baby_weight", r.baby_weight}};
}

inline SubjectRecord subject_from_json(const json& j) {
    SubjectRecord r;
    r.id = j.at("id").get<std::string>();
    r.cohort = parse_cohort(j.at("cohort").get<std::string>());
    r.ga_at_scan = j.at("ga_at_scan").get<double>();
    r.ga_at_delivery = j.at("ga_at_delivery").get<double>();
    r.scan_to_delivery = j.at("scan_to_delivery").get<double>();
    r.baby_weight = j.at("baby_weight").get<double>();
    return r;
}

inline void write_parameter_map(const fs::path& dir, const ParameterMap& map) {
    fs::create_directories(dir);
    const std::string stem = "param_" + map.organ + "_" + map.model;
    std::vector<float> payload = map.data;
    payload.insert(payload.end(), map.residual.begin(), map.residual.end());
    detail::write_raw_f32(dir / (stem + ".f32"), payload);
    json failures = json::array();
    for (const auto& [idx, code] : map.failures) failures.push_back({idx, code});
    detail::save_json(dir / (stem + ".json"),
                      {{"model", map.model},
                       {"organ", map.organ},
                       {"param_names", map.param_names},
                       {"dims", {map.nx, map.ny, map.nz, map.np}},
                       {"residual_frame", true},
                       {"not_converged", map.not_converged},
                       {"failures", failures}});
}

inline ParameterMap read_parameter_map(const fs::path& dir, const std::string& organ,
                                       const std::string& model) {
    const std::string stem = "param_" + organ + "_" + model;
    json j = detail::load_json(dir / (stem + ".json"));
    ParameterMap map;
    map.model = j.at("model").get<std::string>();
    map.organ = j.at("organ").get<std::string>();
    map.param_names = j.at("param_names").get<std::vector<std::string>>();
    map.nx = j.at("dims").at(0).get<int>();
    map.ny = j.at("dims").at(1).get<int>();
    map.nz = j.at("dims").at(2).get<int>();
    map.np = j.at("dims").at(3).get<int>();
    if (map.np != static_cast<int>(map.param_names.size()))
        throw io_error(stem + ": param_names/np mismatch");
    const std::size_t voxels = map.spatial_count();
    auto payload = detail::read_raw_f32(dir / (stem + ".f32"), voxels * (map.np + 1));
    map.data.assign(payload.begin(), payload.begin() + static_cast<long>(voxels * map.np));
    map.residual.assign(payload.begin() + static_cast<long>(voxels * map.np), payload.end());
    map.not_converged = j.value("not_converged", 0u);
    for (const auto& f : j.value("failures", json::array()))
        map.failures.emplace_back(f.at(0).get<std::size_t>(), f.at(1).get<std::string>());
    return map;
}

/// Writes a full subject directory: protocol.json, signal.f32, mask_<organ>.u8,
/// subject.json, and truth_<organ>.{f32,json} when truth maps are present.
inline void write_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    json sidecar = protocol_to_json(ds.protocol);
    sidecar["dims"] = {ds.volume.nx, ds.volume.ny, ds.volume.nz, ds.volume.ns};
    sidecar["voxel_size"] = {ds.volume.voxel_size[0], ds.volume.voxel_size[1],
                             ds.volume.voxel_size[2]};
    detail::save_json(dir / "protocol.json", sidecar);
    detail::write_raw_f32(dir / "signal.f32", ds.volume.data);
    for (const auto& m : ds.masks)
        detail::write_raw_u8(dir / ("mask_" + std::string(to_string(m.organ)) + ".u8"), m.data);
    detail::save_json(dir / "subject.json", subject_to_json(ds.subject));
    for (const auto& [organ, truth] : ds.truths) {
        std::vector<float> payload = truth.data;
        payload.insert(payload.end(), truth.residual.begin(), truth.residual.end());
        detail::write_raw_f32(dir / ("truth_" + organ + ".f32"), payload);
        detail::save_json(dir / ("truth_" + organ + ".json"),
                          {{"model", truth.model},
                           {"organ", truth.organ},
                           {"param_names", truth.param_names},
                           {"dims", {truth.nx, truth.ny, truth.nz, truth.np}}});
    }
}

/// Reads and fully validates a subject directory. Every type invariant is
/// enforced here; downstream code can assume clean objects.
inline Dataset read_dataset(const fs::path& dir) {
    Dataset ds;
    json sidecar = detail::load_json(dir / "protocol.json");
    ds.protocol = protocol_from_json(sidecar);
    try {
        ds.protocol.validate();
    } catch (const std::invalid_argument& e) {
        throw io_error(dir.string() + ": " + e.what());
    }

    ds.volume.nx = sidecar.at("dims").at(0).get<int>();
    ds.volume.ny = sidecar.at("dims").at(1).get<int>();
    ds.volume.nz = sidecar.at("dims").at(2).get<int>();
    ds.volume.ns = sidecar.at("dims").at(3).get<int>();
    if (sidecar.contains("voxel_size"))
        for (int i = 0; i < 3; ++i)
            ds.volume.voxel_size[i] = sidecar["voxel_size"].at(i).get<double>();
    if (ds.volume.nx <= 0 || ds.volume.ny <= 0 || ds.volume.nz <= 0 || ds.volume.ns <= 0)
        throw io_error("protocol.json: invalid dims");
    ds.volume.data = detail::read_raw_f32(
        dir / "signal.f32", ds.volume.spatial_count() * static_cast<std::size_t>(ds.volume.ns));
    try {
        ds.volume.validate(ds.protocol);
    } catch (const std::invalid_argument& e) {
        throw io_error(dir.string() + ": " + e.what());
    }

    for (Organ o : kAllOrgans) {
        const fs::path mpath = dir / ("mask_" + std::string(to_string(o)) + ".u8");
        if (!fs::exists(mpath)) continue;
        OrganMask m;
        m.organ = o;
        m.nx = ds.volume.nx;
        m.ny = ds.volume.ny;
        m.nz = ds.volume.nz;
        m.data = detail::read_raw_u8(mpath, m.spatial_count());
        try {
            m.validate_against(ds.volume);
        } catch (const std::invalid_argument& e) {
            throw io_error(mpath.string() + ": " + e.what());
        }
        ds.masks.push_back(std::move(m));
    }
    if (ds.masks.empty()) throw io_error(dir.string() + ": no organ masks found");

    ds.subject = subject_from_json(detail::load_json(dir / "subject.json"));
    ds.subject.validate();

    for (Organ o : kAllOrgans) {
        const std::string organ = to_string(o);
        const fs::path tpath = dir / ("truth_" + organ + ".json");
        if (!fs::exists(tpath)) continue;
        json tj = detail::load_json(tpath);
        ParameterMap truth;
        truth.model = tj.at("model").get<std::string>();
        truth.organ = organ;
        truth.param_names = tj.at("param_names").get<std::vector<std::string>>();
        truth.nx = tj.at("dims").at(0).get<int>();
        truth.ny = tj.at("dims").at(1).get<int>();
        truth.nz = tj.at("dims").at(2).get<int>();
        truth.np = tj.at("dims").at(3).get<int>();
        if (truth.nx != ds.volume.nx || truth.ny != ds.volume.ny || truth.nz != ds.volume.nz)
            throw io_error(tpath.string() + ": dims do not match volume");
        const std::size_t voxels = truth.spatial_count();
        auto payload = detail::read_raw_f32(dir / ("truth_" + organ + ".f32"),
                                            voxels * (truth.np + 1));
        truth.data.assign(payload.begin(), payload.begin() + static_cast<long>(voxels * truth.np));
        truth.residual.assign(payload.begin() + static_cast<long>(voxels * truth.np),
                              payload.end());
        ds.truths.emplace(organ, std::move(truth));
    }
    return ds;
}

/// Lists subject subdirectories (those holding a protocol.json), sorted by name.
inline std::vector<fs::path> list_subject_dirs(const fs::path& root) {
    std::vector<fs::path> out;
    if (!fs::is_directory(root)) throw io_error("not a directory: " + root.string());
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "protocol.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline const std::vector<std::string>& label_columns() {
    static const std::vector<std::string> cols = {"id",
                                                  "cohort",
                                                  "ga_at_scan",
                                                  "ga_at_delivery",
                                                  "scan_to_delivery",
                                                  "baby_weight"};
    return cols;
}

/// CSV: UTF-8, comma delimiter, '.' decimal, mandatory header of label
/// columns followed by feature names. Absent values are empty cells; numeric
/// cells carry enough digits to round-trip exactly.
inline void write_feature_table(const FeatureTable& table, const fs::path& path) {
    table.validate();
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for write: " + path.string());
    for (std::size_t i = 0; i < label_columns().size(); ++i)
        out << (i ? "," : "") << label_columns()[i];
    for (const auto& name : table.feature_names) {
        if (name.find(',') != std::string::npos || name.find('"') != std::string::npos ||
            name.find('\n') != std::string::npos)
            throw io_error("feature name not CSV-safe: " + name);
        out << "," << name;
    }
    out << "\n";
    for (std::size_t i = 0; i < table.n_subjects(); ++i) {
        const auto& s = table.subjects[i];
        out << s.id << "," << to_string(s.cohort) << "," << detail::format_value(s.ga_at_scan)
            << "," << detail::format_value(s.ga_at_delivery) << ","
            << detail::format_value(s.scan_to_delivery) << ","
            << detail::format_value(s.baby_weight);
        for (double v : table.rows[i]) {
            out << ",";
            if (!std::isnan(v)) out << detail::format_value(v);
        }
        out << "\n";
    }
    if (!out) throw io_error("write failed: " + path.string());
}

inline FeatureTable read_feature_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("missing file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw io_error(path.string() + ": empty file");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        cells.push_back(cur);
        return cells;
    };
    auto header = split(line);
    const auto& labels = label_columns();
    if (header.size() < labels.size())
        throw io_error(path.string() + ": header missing label columns");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (header[i] != labels[i])
            throw io_error(path.string() + ": expected label column " + labels[i]);
    FeatureTable table;
    table.feature_names.assign(header.begin() + static_cast<long>(labels.size()), header.end());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != header.size())
            throw io_error(path.string() + ":" + std::to_string(lineno) + ": ragged row");
        SubjectRecord r;
        r.id = cells[0];
        r.cohort = parse_cohort(cells[1]);
        r.ga_at_scan = std::stod(cells[2]);
        r.ga_at_delivery = std::stod(cells[3]);
        r.scan_to_delivery = std::stod(cells[4]);
        r.baby_weight = std::stod(cells[5]);
        std::vector<double> values;
        values.reserve(table.feature_names.size());
        for (std::size_t j = labels.size(); j < cells.size(); ++j)
            values.push_back(cells[j].empty() ? std::numeric_limits<double>::quiet_NaN()
                                              : std::stod(cells[j]));
        table.add_row(std::move(r), std::move(values));
    }
    return table;
}

}  // namespace fetalfit
