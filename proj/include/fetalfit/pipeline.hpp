#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fetalfit/dataset_io.hpp"
#include "fetalfit/fitting.hpp"
#include "fetalfit/ml.hpp"
#include "fetalfit/models.hpp"
#include "fetalfit/stats.hpp"
#include "fetalfit/texture.hpp"
#include "fetalfit/volume.hpp"

namespace fetalfit {

// ---------------------------------------------------------------------------
// feature naming

enum class FeatureKind { summary, ratio, texture };

inline const std::array<const char*, 6> kSummaryStats = {"mean",  "median",   "min",
                                                         "max",   "mode",     "variance"};

inline std::string feature_name(const std::string& organ, const std::string& model,
                                const std::string& param, const std::string& stat) {
    return organ + "/" + model + "/" + param + "/" + stat;
}

inline std::vector<std::string> split_feature_name(const std::string& name) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : name) {
        if (c == '/') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

inline FeatureKind classify_feature(const std::string& name) {
    auto parts = split_feature_name(name);
    if (parts.size() != 4) throw std::invalid_argument("bad feature name: " + name);
    if (parts[0].find("_over_") != std::string::npos) return FeatureKind::ratio;
    for (const char* h : kHaralickNames)
        if (parts[3].rfind(std::string(h) + "_", 0) == 0) return FeatureKind::texture;
    return FeatureKind::summary;
}

/// summaries = map summaries + organ ratios (the model-fitting feature
/// family); haralick = texture features; combined = everything.
inline bool in_family(FeatureKind kind, const std::string& family) {
    if (family == "combined") return true;
    if (family == "summaries") return kind != FeatureKind::texture;
    if (family == "haralick") return kind == FeatureKind::texture;
    throw std::invalid_argument("unknown feature family: " + family);
}

// display strings for the ranked-feature CSV
inline std::string display_model(const std::string& m) {
    if (m == "t2") return "T2 Fitting";
    if (m == "adc") return "ADC Fitting";
    if (m == "ivim") return "Standard IVIM";
    if (m == "t2ivim") return "T2 Dependent IVIM";
    if (m == "extivim") return "Extended 2xT2 Dependent IVIM";
    if (m == "decide") return "DECIDE Model (Voxelwise Measurements)";
    if (m == "b0") return "b=0 Volume";
    return m;
}

inline std::string display_param(const std::string& p) {
    if (p == "f") return "Perfusion Fraction";
    if (p == "Dstar") return "D*";
    if (p == "nu") return "Maternal Blood Volume";
    if (p == "T2p") return "Blood T2";
    if (p == "T2t") return "Tissue T2";
    if (p == "T2fb") return "Fetal Blood T2";
    if (p == "signal") return "-";
    return p;  // S0, ADC, T2
}

inline std::string display_stat(const std::string& s) {
    auto cap = [](std::string w) {
        if (!w.empty()) w[0] = static_cast<char>(std::toupper(w[0]));
        return w;
    };
    const auto sep = s.find('_');
    if (sep == std::string::npos) return cap(s);
    // texture stats are "<feature>_<mean|max>": reads as "Mean Energy"
    return cap(s.substr(sep + 1)) + " " + cap(s.substr(0, sep));
}

inline std::string display_organ(const std::string& o) {
    auto cap = [](std::string s) {
        if (!s.empty()) s[0] = static_cast<char>(std::toupper(s[0]));
        return s;
    };
    const auto sep = o.find("_over_");
    if (sep != std::string::npos)
        return cap(o.substr(0, sep)) + "/" + cap(o.substr(sep + 6));
    return cap(o);
}

// ---------------------------------------------------------------------------
// per-subject feature extraction

struct FeatureOptions {
    bool summaries = true;
    bool ratios = true;
    bool texture = true;
    bool texture_b0 = true;
    std::vector<std::string> texture_params = {"f", "Dstar"};
    TextureConfig texture_config;
};

/// Axial slices of one map channel restricted to the mask (absent = NaN).
inline std::vector<Slice2D> map_slices(const ParameterMap& map, int param) {
    std::vector<Slice2D> out;
    for (int z = 0; z < map.nz; ++z) {
        Slice2D s;
        s.rows = map.ny;
        s.cols = map.nx;
        s.values.resize(static_cast<std::size_t>(map.ny) * map.nx);
        for (int y = 0; y < map.ny; ++y)
            for (int x = 0; x < map.nx; ++x) {
                const std::size_t v = (static_cast<std::size_t>(z) * map.ny + y) * map.nx + x;
                s.values[static_cast<std::size_t>(y) * map.nx + x] = map.value(v, param);
            }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<Slice2D> volume_frame_slices(const Volume4D& vol, const OrganMask& mask,
                                                std::size_t frame) {
    std::vector<Slice2D> out;
    const std::size_t voxels = vol.spatial_count();
    for (int z = 0; z < vol.nz; ++z) {
        Slice2D s;
        s.rows = vol.ny;
        s.cols = vol.nx;
        s.values.resize(static_cast<std::size_t>(vol.ny) * vol.nx);
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                const std::size_t v = vol.spatial_index(x, y, z);
                s.values[static_cast<std::size_t>(y) * vol.nx + x] =
                    mask.in(v) ? vol.data[v + voxels * frame]
                               : std::numeric_limits<double>::quiet_NaN();
            }
        out.push_back(std::move(s));
    }
    return out;
}

/// Features of one subject given its fitted maps, in a deterministic order:
/// map summaries, organ ratios, then texture. Returns (names, values) pairs;
/// the order depends only on the map set, so cohort tables stay rectangular.
inline std::vector<std::pair<std::string, double>> extract_subject_features(
    const Dataset& ds, const std::vector<ParameterMap>& maps, const FeatureOptions& opt) {
    std::vector<std::pair<std::string, double>> out;

    if (opt.summaries) {
        for (const auto& map : maps) {
            for (int j = 0; j < map.np; ++j) {
                auto values = map.present_values(j);
                if (values.empty()) {
                    for (const char* stat : kSummaryStats)
                        out.emplace_back(
                            feature_name(map.organ, map.model, map.param_names[j], stat),
                            std::numeric_limits<double>::quiet_NaN());
                    continue;
                }
                MapSummary s = summarize_values(values);
                const double stats[6] = {s.mean, s.median, s.min, s.max, s.mode, s.variance};
                for (int k = 0; k < 6; ++k)
                    out.emplace_back(
                        feature_name(map.organ, map.model, map.param_names[j], kSummaryStats[k]),
                        stats[k]);
            }
        }
    }

    if (opt.ratios) {
        // Liver/Lungs and Placenta/Lungs perfusion-fraction ratios, median and mean
        auto find_map = [&](const std::string& organ, const std::string& model)
            -> const ParameterMap* {
            for (const auto& m : maps)
                if (m.organ == organ && m.model == model) return &m;
            return nullptr;
        };
        std::set<std::string> models;
        for (const auto& m : maps) models.insert(m.model);
        for (const auto& model : models) {
            const ParameterMap* lungs = find_map("lungs", model);
            if (!lungs) continue;
            bool lungs_has_f = false;
            for (const auto& n : lungs->param_names) lungs_has_f |= n == "f";
            if (!lungs_has_f) continue;
            MapSummary lungs_s;
            auto lungs_vals = lungs->present_values(lungs->param_index("f"));
            if (lungs_vals.empty()) continue;
            lungs_s = summarize_values(lungs_vals);
            for (const char* num_organ : {"liver", "placenta"}) {
                const ParameterMap* num = find_map(num_organ, model);
                if (!num) continue;
                auto vals = num->present_values(num->param_index("f"));
                if (vals.empty()) continue;
                MapSummary num_s = summarize_values(vals);
                out.emplace_back(
                    feature_name(std::string(num_organ) + "_over_lungs", model, "f", "median"),
                    organ_ratio(num_s.median, lungs_s.median));
                out.emplace_back(
                    feature_name(std::string(num_organ) + "_over_lungs", model, "f", "mean"),
                    organ_ratio(num_s.mean, lungs_s.mean));
            }
        }
    }

    if (opt.texture) {
        auto add_texture = [&](const std::string& organ, const std::string& model,
                               const std::string& param, const std::vector<Slice2D>& slices) {
            TextureFeatures t;
            bool ok = true;
            try {
                t = texture_features(slices, opt.texture_config);
            } catch (const std::invalid_argument&) {
                ok = false;
            }
            for (int k = 0; k < 6; ++k) {
                const std::string base = std::string(kHaralickNames[k]);
                out.emplace_back(feature_name(organ, model, param, base + "_mean"),
                                 ok ? t.mean[k] : std::numeric_limits<double>::quiet_NaN());
                out.emplace_back(feature_name(organ, model, param, base + "_max"),
                                 ok ? t.max[k] : std::numeric_limits<double>::quiet_NaN());
            }
        };
        for (const auto& map : maps) {
            for (int j = 0; j < map.np; ++j) {
                const std::string& pname = map.param_names[j];
                if (std::find(opt.texture_params.begin(), opt.texture_params.end(), pname) ==
                    opt.texture_params.end())
                    continue;
                add_texture(map.organ, map.model, pname, map_slices(map, j));
            }
        }
        if (opt.texture_b0) {
            const std::size_t frame = ds.protocol.b0_lowest_te_index();
            for (const auto& mask : ds.masks)
                add_texture(to_string(mask.organ), "b0", "signal",
                            volume_frame_slices(ds.volume, mask, frame));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// fitting orchestration

struct RoiFitLog {
    std::string organ, model;
    FitResult result;
};

/// ROI-then-voxelwise fits for the requested model/organ grid. DECIDE runs
/// only on the placenta unless decide_everywhere is set (it prints a warning
/// upstream; the original use of that model is placenta-specific).
inline std::vector<ParameterMap> fit_subject(const Dataset& ds,
                                             const std::vector<Model>& models,
                                             const std::vector<Organ>& organs,
                                             const FitConfig& base_config,
                                             bool decide_everywhere,
                                             std::vector<RoiFitLog>* roi_log = nullptr) {
    std::vector<ParameterMap> maps;
    for (Organ organ : organs) {
        if (!ds.has_mask(organ)) continue;
        const auto& mask = ds.mask(organ);
        for (Model model : models) {
            if (model == Model::decide && organ != Organ::placenta && !decide_everywhere)
                continue;
            FitConfig cfg = base_config;
            auto mean_signal = roi_mean_signal(ds.volume, mask);
            FitResult roi = fit_roi(model, ds.protocol, mean_signal, cfg);
            if (roi_log) roi_log->push_back({to_string(organ), to_string(model), roi});
            cfg.allow_unconverged_init = true;  // voxel fits still start from the best ROI point
            maps.push_back(fit_voxelwise(model, ds.protocol, ds.volume, mask, roi, cfg));
        }
    }
    return maps;
}

// ---------------------------------------------------------------------------
// cohort feature table and ranked-feature CSV

inline FeatureTable build_feature_table(
    const std::vector<std::pair<Dataset, std::vector<ParameterMap>>>& subjects,
    const FeatureOptions& opt) {
    FeatureTable table;
    bool first = true;
    for (const auto& [ds, maps] : subjects) {
        auto features = extract_subject_features(ds, maps, opt);
        if (first) {
            for (const auto& [name, value] : features) table.feature_names.push_back(name);
            first = false;
        }
        if (features.size() != table.feature_names.size())
            throw std::invalid_argument("feature extraction: inconsistent feature sets");
        std::vector<double> row(features.size());
        for (std::size_t j = 0; j < features.size(); ++j) {
            if (features[j].first != table.feature_names[j])
                throw std::invalid_argument("feature extraction: inconsistent feature order");
            row[j] = features[j].second;
        }
        table.add_row(ds.subject, std::move(row));
    }
    return table;
}

/// Ranked significance table with the published column set.
inline void write_ranked_csv(const std::vector<RankedFeature>& ranked,
                             const std::filesystem::path& path,
                             const std::vector<double>* bh_adjusted = nullptr) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for write: " + path.string());
    out << "Model Fitting Technique,Parameter,Average Metric,Pairwise Group Comparison,Organ,"
           "T Statistic,P-Value";
    if (bh_adjusted) out << ",BH Adjusted P-Value";
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        auto parts = split_feature_name(ranked[i].name);
        std::snprintf(buf, sizeof(buf), "%.9g", ranked[i].t);
        out << display_model(parts[1]) << "," << display_param(parts[2]) << ","
            << display_stat(parts[3]) << ",Control vs FGR," << display_organ(parts[0]) << ","
            << buf;
        std::snprintf(buf, sizeof(buf), "%.9g", ranked[i].p);
        out << "," << buf;
        if (bh_adjusted) {
            std::snprintf(buf, sizeof(buf), "%.9g", (*bh_adjusted)[i]);
            out << "," << buf;
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// ML experiment wiring

struct ExperimentConfig {
    std::string task = "classify";      // classify | ga | interval | weight
    std::string features = "summaries"; // summaries | haralick | combined
    TrainConfig train;
    double significance_alpha = 0.05;
    bool run_rfecv = true;

    Task ml_task() const {
        return task == "classify" ? Task::classification : Task::regression;
    }
};

struct ExperimentResult {
    LinearModel model;
    std::vector<std::string> selected_features;
    EvalReport test_report;
    CvResult cv;
    std::vector<std::string> train_ids, test_ids;
    std::vector<std::pair<double, double>> scatter;  // (truth, prediction) on test
    RfecvResult rfecv_info;
    bool significance_filter_empty = false;
};

inline double experiment_target(const SubjectRecord& s, const std::string& task) {
    if (task == "ga") return s.ga_at_delivery;
    if (task == "interval") return s.scan_to_delivery;
    if (task == "weight") return s.baby_weight;
    throw std::invalid_argument("unknown task: " + task);
}

/// The full supervised pipeline on one feature table: stratified 80/20
/// split, train-side significance filter (p < alpha between cohorts),
/// train-side RFECV, final fit, held-out evaluation and k-fold CV. Nothing
/// from the test split reaches standardisation, imputation, selection or
/// hyperparameters.
inline ExperimentResult run_experiment(const FeatureTable& table, const ExperimentConfig& cfg) {
    table.validate();
    cfg.train.validate();
    const bool classify = cfg.ml_task() == Task::classification;

    std::vector<int> labels;
    for (const auto& s : table.subjects)
        labels.push_back(s.cohort == Cohort::control ? kControlLabel : kFgrLabel);

    auto split = train_test_split(labels, cfg.train);

    // family filter
    std::vector<int> family_cols;
    for (std::size_t j = 0; j < table.n_features(); ++j)
        if (in_family(classify_feature(table.feature_names[j]), cfg.features))
            family_cols.push_back(static_cast<int>(j));
    if (family_cols.empty()) throw std::invalid_argument("no features in family " + cfg.features);

    // significance filter: Welch t between cohorts on the training rows only
    ExperimentResult result;
    std::vector<int> kept_cols;
    {
        FeatureTable train_table;
        for (int j : family_cols) train_table.feature_names.push_back(table.feature_names[j]);
        for (int i : split.train) {
            std::vector<double> row;
            for (int j : family_cols) row.push_back(table.rows[i][j]);
            train_table.add_row(table.subjects[i], std::move(row));
        }
        auto ranked = rank_features(train_table);
        std::set<std::string> significant;
        for (const auto& f : ranked)
            if (f.p < cfg.significance_alpha) significant.insert(f.name);
        for (int j : family_cols)
            if (significant.count(table.feature_names[j])) kept_cols.push_back(j);
        if (kept_cols.empty()) {
            result.significance_filter_empty = true;
            kept_cols = family_cols;
        }
    }

    // matrices, imputation on training medians
    auto build = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
        Eigen::MatrixXd m(rows.size(), cols.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j) m(i, j) = table.rows[rows[i]][cols[j]];
        return m;
    };
    Eigen::MatrixXd x_train = build(split.train, kept_cols);
    Eigen::MatrixXd x_test = build(split.test, kept_cols);
    median_impute(x_train, x_test);

    std::vector<int> y_train, y_test;
    std::vector<double> t_train, t_test;
    for (int i : split.train) {
        y_train.push_back(labels[i]);
        if (!classify) t_train.push_back(experiment_target(table.subjects[i], cfg.task));
        result.train_ids.push_back(table.subjects[i].id);
    }
    for (int i : split.test) {
        y_test.push_back(labels[i]);
        if (!classify) t_test.push_back(experiment_target(table.subjects[i], cfg.task));
        result.test_ids.push_back(table.subjects[i].id);
    }

    // RFECV on the training split
    std::vector<int> model_cols = kept_cols;
    if (cfg.run_rfecv && kept_cols.size() > 1) {
        result.rfecv_info = rfecv(x_train, y_train, t_train, cfg.ml_task(), cfg.train);
        std::vector<int> chosen;
        Eigen::MatrixXd x_train_sel(x_train.rows(), result.rfecv_info.selected.size());
        Eigen::MatrixXd x_test_sel(x_test.rows(), result.rfecv_info.selected.size());
        for (std::size_t k = 0; k < result.rfecv_info.selected.size(); ++k) {
            const int j = result.rfecv_info.selected[k];
            chosen.push_back(kept_cols[j]);
            x_train_sel.col(static_cast<Eigen::Index>(k)) = x_train.col(j);
            x_test_sel.col(static_cast<Eigen::Index>(k)) = x_test.col(j);
        }
        model_cols = chosen;
        x_train = x_train_sel;
        x_test = x_test_sel;
    }
    for (int j : model_cols) result.selected_features.push_back(table.feature_names[j]);

    if (classify) {
        result.model = train_logistic(x_train, y_train, cfg.train, result.selected_features);
        result.test_report = evaluate_classifier(result.model, x_test, y_test);
        result.cv = kfold_cv(x_train, y_train, {}, Task::classification, cfg.train);
        for (Eigen::Index i = 0; i < x_test.rows(); ++i)
            result.scatter.emplace_back(
                y_test[i], predict_logistic(result.model, x_test.row(i).transpose()).probability);
    } else {
        result.model = train_linear(x_train, t_train, cfg.train, result.selected_features);
        result.test_report = evaluate_regressor(result.model, x_test, t_test);
        result.cv = kfold_cv(x_train, y_train, t_train, Task::regression, cfg.train);
        for (Eigen::Index i = 0; i < x_test.rows(); ++i)
            result.scatter.emplace_back(
                t_test[i], predict_linear(result.model, x_test.row(i).transpose()));
    }
    return result;
}

/// Applies a saved model to a table: selects the model's features by name,
/// imputes nothing (absent -> feature median is unavailable; absent values
/// are replaced by the stored center, which is the standardised zero point).
inline std::vector<double> apply_model(const LinearModel& model, const FeatureTable& table,
                                       std::vector<int>* predicted_labels = nullptr) {
    std::vector<int> cols;
    for (const auto& name : model.feature_names) {
        const int j = table.feature_index(name);
        if (j < 0) throw std::invalid_argument("table lacks model feature " + name);
        cols.push_back(j);
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < table.n_subjects(); ++i) {
        Eigen::VectorXd x(cols.size());
        for (std::size_t k = 0; k < cols.size(); ++k) {
            double v = table.rows[i][cols[k]];
            if (std::isnan(v)) v = model.center[static_cast<Eigen::Index>(k)];
            x[static_cast<Eigen::Index>(k)] = v;
        }
        if (model.task == Task::classification) {
            auto p = predict_logistic(model, x);
            out.push_back(p.probability);
            if (predicted_labels) predicted_labels->push_back(p.label);
        } else {
            out.push_back(predict_linear(model, x));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVG scatter plot (predicted vs true)

inline void write_scatter_svg(const std::filesystem::path& path,
                              const std::vector<std::pair<double, double>>& points,
                              const std::string& title, const std::string& x_label,
                              const std::string& y_label) {
    if (points.empty()) throw std::invalid_argument("scatter plot: no points");
    double lo = points[0].first, hi = points[0].first;
    for (const auto& [a, b] : points) {
        lo = std::min({lo, a, b});
        hi = std::max({hi, a, b});
    }
    if (lo == hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;

    const int w = 640, h = 480, ml = 70, mr = 20, mt = 40, mb = 55;
    auto sx = [&](double v) { return ml + (v - lo) / (hi - lo) * (w - ml - mr); };
    auto sy = [&](double v) { return h - mb - (v - lo) / (hi - lo) * (h - mt - mb); };

    std::ofstream out(path);
    if (!out) throw io_error("cannot open for write: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";
    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    char buf[32];
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        std::snprintf(buf, sizeof(buf), "%.3g", v);
        out << "<text x=\"" << sx(v) << "\" y=\"" << h - mb + 18
            << "\" text-anchor=\"middle\" font-size=\"11\">" << buf << "</text>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << sy(v) + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";
        out << "<line x1=\"" << sx(v) << "\" y1=\"" << h - mb << "\" x2=\"" << sx(v) << "\" y2=\""
            << h - mb + 5 << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy(v) << "\" x2=\"" << ml << "\" y2=\""
            << sy(v) << "\" stroke=\"black\"/>\n";
    }
    // identity line
    out << "<line x1=\"" << sx(lo) << "\" y1=\"" << sy(lo) << "\" x2=\"" << sx(hi) << "\" y2=\""
        << sy(hi) << "\" stroke=\"#999\" stroke-dasharray=\"5,4\"/>\n";
    for (const auto& [truth, pred] : points)
        out << "<circle cx=\"" << sx(truth) << "\" cy=\"" << sy(pred)
            << "\" r=\"4\" fill=\"#1f77b4\" fill-opacity=\"0.8\"/>\n";
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 14
        << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
    out << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
        << (mt + h - mb) / 2 << ")\">" << y_label << "</text>\n";
    out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// run manifest

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

class ManifestWriter {
public:
    ManifestWriter(std::filesystem::path out_dir, std::string command, nlohmann::json config,
                   std::uint64_t seed)
        : dir_(std::move(out_dir)),
          command_(std::move(command)),
          config_(std::move(config)),
          seed_(seed),
          start_(std::chrono::steady_clock::now()) {}

    void add_input(const std::filesystem::path& p) { inputs_.push_back(p.string()); }
    void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }

    /// Written on success and on failure alike.
    void write(const std::string& status, const std::string& error = "") const {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        char hash[32];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(config_.dump())));
        nlohmann::json j = {{"command", command_},
                            {"version", FETALFIT_VERSION},
                            {"config", config_},
                            {"config_hash", hash},
                            {"seed", seed_},
                            {"inputs", inputs_},
                            {"outputs", outputs_},
                            {"wall_time_s", wall},
                            {"status", status}};
        if (!error.empty()) j["error"] = error;
        std::filesystem::create_directories(dir_);
        detail::save_json(dir_ / "manifest.json", j);
    }

private:
    std::filesystem::path dir_;
    std::string command_;
    nlohmann::json config_;
    std::uint64_t seed_;
    std::vector<std::string> inputs_, outputs_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace fetalfit
