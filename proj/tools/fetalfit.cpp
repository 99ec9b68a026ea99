// fetalfit - multi-compartment diffusion-relaxation MRI analysis pipeline:
// phantom simulation, model fitting, texture and cohort statistics, and
// elastic-net classification/regression.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fetalfit/dataset_io.hpp"
#include "fetalfit/fitting.hpp"
#include "fetalfit/ml.hpp"
#include "fetalfit/phantom.hpp"
#include "fetalfit/pipeline.hpp"
#include "fetalfit/stats.hpp"

namespace fs = std::filesystem;
using namespace fetalfit;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kPartialFailure = 1;
constexpr int kUsageError = 2;

std::vector<Model> parse_models(const std::string& arg) {
    if (arg == "all")
        return {Model::t2,     Model::adc,     Model::ivim,
                Model::t2ivim, Model::extivim, Model::decide};
    return {parse_model(arg)};
}

std::vector<Organ> parse_organs(const std::string& arg) {
    if (arg == "all") return {Organ::placenta, Organ::liver, Organ::brain, Organ::lungs};
    return {parse_organ(arg)};
}

/// Table 3 / classifier defaults per (task, feature family).
TrainConfig default_train_config(const std::string& task, const std::string& features) {
    TrainConfig cfg;
    if (task == "classify") {
        cfg.strength = features == "haralick" ? 0.25 : 0.001;
        cfg.l1_ratio = 0.0;
    } else if (task == "ga") {
        if (features == "haralick") {
            cfg.strength = 0.49;
            cfg.l1_ratio = 1.0;
        } else if (features == "combined") {
            cfg.strength = 44.98;
            cfg.l1_ratio = 0.0;
        } else {
            cfg.strength = 33.93;
            cfg.l1_ratio = 0.0;
        }
    } else if (task == "interval") {
        if (features == "haralick") {
            cfg.strength = 1.15;
            cfg.l1_ratio = 1.0;
        } else if (features == "combined") {
            cfg.strength = 7.20e-3;
            cfg.l1_ratio = 0.31;
        } else {
            cfg.strength = 59.64;
            cfg.l1_ratio = 0.0;
        }
    } else if (task == "weight") {
        if (features == "haralick") {
            cfg.strength = 25.6;
            cfg.l1_ratio = 0.92;
        } else if (features == "combined") {
            cfg.strength = 3.56;
            cfg.l1_ratio = 1.0;
        } else {
            cfg.strength = 2.32e-3;
            cfg.l1_ratio = 0.16;
        }
    } else {
        throw std::invalid_argument("unknown task: " + task);
    }
    return cfg;
}

struct SimulateOpts {
    std::string out;
    std::uint64_t seed = 1;
    int n_control = 12, n_fgr = 12;
    std::vector<int> dims;
    double snr = 30.0;
    std::string config_path;
};

int run_simulate(const SimulateOpts& o) {
    CohortConfig cfg;
    if (!o.config_path.empty()) cfg = cohort_config_from_json(detail::load_json(o.config_path));
    cfg.seed = o.seed;
    cfg.n_control = o.n_control;
    cfg.n_fgr = o.n_fgr;
    cfg.snr = o.snr;
    if (!o.dims.empty()) {
        cfg.nx = o.dims[0];
        cfg.ny = o.dims[1];
        cfg.nz = o.dims[2];
    }
    ManifestWriter manifest(o.out, "simulate", cohort_config_to_json(cfg), cfg.seed);
    if (!o.config_path.empty()) manifest.add_input(o.config_path);
    try {
        auto dirs = generate_cohort(cfg, o.out);
        for (const auto& d : dirs) manifest.add_output(d);
        detail::save_json(fs::path(o.out) / "cohort.json", cohort_config_to_json(cfg));
        manifest.write("ok");
        std::cout << "wrote " << dirs.size() << " subjects to " << o.out << "\n";
        return kOk;
    } catch (const std::invalid_argument& e) {
        manifest.write("error", e.what());
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        manifest.write("error", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kPartialFailure;
    }
}

struct FitOpts {
    std::string dataset;
    std::string out;  // defaults to dataset
    std::string model = "all";
    std::string organ = "all";
    bool allow_decide_all = false;
    std::uint64_t seed = 0x5eedULL;
    int restarts = 10;
};

int run_fit(const FitOpts& o) {
    const fs::path out_root = o.out.empty() ? fs::path(o.dataset) : fs::path(o.out);
    json cfg_json = {{"model", o.model},
                     {"organ", o.organ},
                     {"allow_decide_all", o.allow_decide_all},
                     {"restarts", o.restarts}};
    ManifestWriter manifest(out_root, "fit", cfg_json, o.seed);
    manifest.add_input(o.dataset);
    try {
        const auto models = parse_models(o.model);
        const auto organs = parse_organs(o.organ);
        if (o.model == "decide" && o.organ != "placenta" && o.organ != "all" &&
            !o.allow_decide_all) {
            manifest.write("error", "decide outside the placenta requires --allow-decide-all");
            std::cerr << "the DECIDE model targets the placenta; pass --allow-decide-all to fit "
                         "it elsewhere\n";
            return kUsageError;
        }
        if (o.allow_decide_all &&
            std::find(models.begin(), models.end(), Model::decide) != models.end())
            std::cerr << "warning: fitting DECIDE outside the placenta; the model's compartments "
                         "are placenta-specific\n";

        auto subject_dirs = list_subject_dirs(o.dataset);
        if (subject_dirs.empty()) throw io_error("no subjects found in " + o.dataset);
        int failures = 0;
        for (const auto& dir : subject_dirs) {
            try {
                Dataset ds = read_dataset(dir);
                FitConfig cfg;
                cfg.seed = o.seed;
                cfg.restarts = o.restarts;
                std::vector<RoiFitLog> roi_log;
                auto maps = fit_subject(ds, models, organs, cfg, o.allow_decide_all, &roi_log);
                const fs::path subject_out = out_root / dir.filename();
                json roi_json = json::array();
                for (const auto& log : roi_log)
                    roi_json.push_back({{"organ", log.organ},
                                        {"model", log.model},
                                        {"params", log.result.params},
                                        {"sse", log.result.sse},
                                        {"iterations", log.result.iterations},
                                        {"converged", log.result.converged}});
                for (const auto& map : maps) {
                    write_parameter_map(subject_out, map);
                    manifest.add_output(subject_out /
                                        ("param_" + map.organ + "_" + map.model + ".f32"));
                }
                detail::save_json(subject_out / "roi_fits.json", roi_json);
                std::cout << dir.filename().string() << ": " << maps.size() << " maps\n";
            } catch (const std::exception& e) {
                std::cerr << dir.filename().string() << ": failed: " << e.what() << "\n";
                ++failures;
            }
        }
        manifest.write(failures == 0 ? "ok" : "partial");
        return failures == 0 ? kOk : kPartialFailure;
    } catch (const std::invalid_argument& e) {
        manifest.write("error", e.what());
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        manifest.write("error", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kPartialFailure;
    }
}

struct FeaturesOpts {
    std::string dataset;
    std::string maps;  // defaults to dataset
    std::string out;
    bool no_texture = false;
    bool no_ratios = false;
    bool no_shapiro = false;
    std::vector<std::string> texture_params = {"f", "Dstar"};
    int levels = 16;
};

int run_features(const FeaturesOpts& o) {
    json cfg_json = {{"no_texture", o.no_texture},
                     {"no_ratios", o.no_ratios},
                     {"levels", o.levels},
                     {"texture_params", o.texture_params}};
    ManifestWriter manifest(fs::path(o.out).parent_path(), "features", cfg_json, 0);
    manifest.add_input(o.dataset);
    try {
        const fs::path maps_root = o.maps.empty() ? fs::path(o.dataset) : fs::path(o.maps);
        FeatureOptions opt;
        opt.texture = !o.no_texture;
        opt.texture_b0 = !o.no_texture;
        opt.ratios = !o.no_ratios;
        opt.texture_params = o.texture_params;
        opt.texture_config.levels = o.levels;

        auto subject_dirs = list_subject_dirs(o.dataset);
        if (subject_dirs.empty()) throw io_error("no subjects found in " + o.dataset);
        std::vector<std::pair<Dataset, std::vector<ParameterMap>>> subjects;
        std::ofstream shapiro;
        if (!o.no_shapiro) {
            shapiro.open(fs::path(o.out).string() + ".shapiro.csv");
            shapiro << "subject,organ,model,parameter,W,p\n";
        }
        for (const auto& dir : subject_dirs) {
            Dataset ds = read_dataset(dir);
            std::vector<ParameterMap> maps;
            const fs::path map_dir = maps_root / dir.filename();
            for (Organ organ : kAllOrgans)
                for (Model model : kAllModels) {
                    const std::string stem = "param_" + std::string(to_string(organ)) + "_" +
                                             to_string(model);
                    if (fs::exists(map_dir / (stem + ".json")))
                        maps.push_back(
                            read_parameter_map(map_dir, to_string(organ), to_string(model)));
                }
            if (maps.empty()) throw io_error("no parameter maps for " + dir.string());
            if (shapiro.is_open()) {
                for (const auto& map : maps)
                    for (int j = 0; j < map.np; ++j) {
                        auto values = map.present_values(j);
                        if (values.size() < 3 || values.size() > 5000) continue;
                        try {
                            auto r = shapiro_wilk(values);
                            shapiro << ds.subject.id << "," << map.organ << "," << map.model
                                    << "," << map.param_names[j] << "," << r.statistic << ","
                                    << r.p_value << "\n";
                        } catch (const std::invalid_argument&) {
                            // constant map, no test
                        }
                    }
            }
            subjects.emplace_back(std::move(ds), std::move(maps));
        }
        FeatureTable table = build_feature_table(subjects, opt);
        write_feature_table(table, o.out);
        manifest.add_output(o.out);
        manifest.write("ok");
        std::cout << "wrote " << table.n_subjects() << " x " << table.n_features()
                  << " feature table to " << o.out << "\n";
        return kOk;
    } catch (const std::invalid_argument& e) {
        manifest.write("error", e.what());
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        manifest.write("error", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kPartialFailure;
    }
}

struct StatsOpts {
    std::string table;
    std::string out;
    bool pooled = false;
    bool bh = false;
};

int run_stats(const StatsOpts& o) {
    json cfg_json = {{"pooled", o.pooled}, {"bh", o.bh}};
    ManifestWriter manifest(fs::path(o.out).parent_path(), "stats", cfg_json, 0);
    manifest.add_input(o.table);
    try {
        FeatureTable table = read_feature_table(o.table);
        auto ranked = rank_features(table, o.pooled);
        if (o.bh) {
            auto adj = benjamini_hochberg(ranked);
            write_ranked_csv(ranked, o.out, &adj);
        } else {
            write_ranked_csv(ranked, o.out);
        }
        manifest.add_output(o.out);
        manifest.write("ok");
        const auto sig = significant_features(ranked);
        std::cout << ranked.size() << " features ranked, " << sig.size() << " with p < 0.05\n";
        return kOk;
    } catch (const std::invalid_argument& e) {
        manifest.write("error", e.what());
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        manifest.write("error", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kPartialFailure;
    }
}

struct TrainOpts {
    std::string table;
    std::string task = "classify";
    std::string features = "summaries";
    std::string out;
    double strength = -1.0;  // <0: task default
    double l1_ratio = -1.0;
    std::uint64_t seed = 0x5eedULL;
    int folds = 5;
    bool no_rfecv = false;
};

const char* task_label(const std::string& task) {
    if (task == "ga") return "GA at delivery (weeks)";
    if (task == "interval") return "scan-to-delivery interval (weeks)";
    if (task == "weight") return "baby weight (g)";
    return "class";
}

void write_eval_csv(const fs::path& path, const std::string& task,
                    const EvalReport& r, const CvResult* cv) {
    std::ofstream out(path);
    out << "task,metric,value\n";
    if (r.accuracy) out << task << ",test_accuracy," << *r.accuracy << "\n";
    if (r.sensitivity) out << task << ",test_sensitivity," << *r.sensitivity << "\n";
    if (r.specificity) out << task << ",test_specificity," << *r.specificity << "\n";
    if (r.rmse) out << task << ",test_rmse," << *r.rmse << "\n";
    out << task << ",tp," << r.tp << "\n" << task << ",tn," << r.tn << "\n"
        << task << ",fp," << r.fp << "\n" << task << ",fn," << r.fn << "\n";
    if (cv) {
        out << task << ",cv_mean," << cv->mean << "\n";
        out << task << ",cv_stdev," << cv->stdev << "\n";
    }
}

json eval_to_json(const EvalReport& r) {
    json j;
    if (r.accuracy) j["accuracy"] = *r.accuracy;
    if (r.sensitivity) j["sensitivity"] = *r.sensitivity;
    if (r.specificity) j["specificity"] = *r.specificity;
    if (r.rmse) j["rmse"] = *r.rmse;
    j["confusion"] = {{"tp", r.tp}, {"tn", r.tn}, {"fp", r.fp}, {"fn", r.fn}};
    return j;
}

int run_train(const TrainOpts& o) {
    ExperimentConfig cfg;
    cfg.task = o.task;
    cfg.features = o.features;
    cfg.train = default_train_config(o.task, o.features);
    if (o.strength >= 0.0) cfg.train.strength = o.strength;
    if (o.l1_ratio >= 0.0) cfg.train.l1_ratio = o.l1_ratio;
    cfg.train.seed = o.seed;
    cfg.train.folds = o.folds;
    cfg.run_rfecv = !o.no_rfecv;

    json cfg_json = {{"task", o.task},
                     {"features", o.features},
                     {"strength", cfg.train.strength},
                     {"l1_ratio", cfg.train.l1_ratio},
                     {"rfecv", cfg.run_rfecv}};
    ManifestWriter manifest(o.out, "train", cfg_json, o.seed);
    manifest.add_input(o.table);
    try {
        FeatureTable table = read_feature_table(o.table);
        auto result = run_experiment(table, cfg);
        fs::create_directories(o.out);

        json model_json = model_to_json(result.model);
        model_json["task_target"] = o.task;
        model_json["train_subjects"] = result.train_ids;
        model_json["test_subjects"] = result.test_ids;
        model_json["config"] = cfg_json;
        detail::save_json(fs::path(o.out) / "model.json", model_json);
        manifest.add_output(fs::path(o.out) / "model.json");

        json eval_json = {{"task", o.task},
                          {"features", o.features},
                          {"test", eval_to_json(result.test_report)},
                          {"cv",
                           {{"fold_scores", result.cv.fold_scores},
                            {"mean", result.cv.mean},
                            {"stdev", result.cv.stdev}}},
                          {"selected_features", result.selected_features},
                          {"significance_filter_empty", result.significance_filter_empty}};
        detail::save_json(fs::path(o.out) / "eval.json", eval_json);
        manifest.add_output(fs::path(o.out) / "eval.json");
        write_eval_csv(fs::path(o.out) / "eval.csv", o.task, result.test_report, &result.cv);
        manifest.add_output(fs::path(o.out) / "eval.csv");

        {
            std::ofstream csv(fs::path(o.out) / "predictions.csv");
            csv << "subject,truth,prediction\n";
            for (std::size_t i = 0; i < result.test_ids.size(); ++i)
                csv << result.test_ids[i] << "," << result.scatter[i].first << ","
                    << result.scatter[i].second << "\n";
            manifest.add_output(fs::path(o.out) / "predictions.csv");
        }
        if (cfg.ml_task() == Task::regression) {
            write_scatter_svg(fs::path(o.out) / "scatter.svg", result.scatter,
                              std::string("Test predictions: ") + task_label(o.task),
                              "true value", "predicted value");
            manifest.add_output(fs::path(o.out) / "scatter.svg");
        }
        manifest.write("ok");
        if (cfg.ml_task() == Task::classification) {
            std::cout << "test accuracy " << *result.test_report.accuracy << ", cv "
                      << result.cv.mean << " +- " << result.cv.stdev << " ("
                      << result.selected_features.size() << " features)\n";
        } else {
            std::cout << "test rmse " << *result.test_report.rmse << ", cv " << result.cv.mean
                      << " +- " << result.cv.stdev << " (" << result.selected_features.size()
                      << " features)\n";
        }
        return kOk;
    } catch (const std::invalid_argument& e) {
        manifest.write("error", e.what());
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        manifest.write("error", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kPartialFailure;
    }
}

struct EvaluateOpts {
    std::string model;
    std::string table;
    std::string out;
};

int run_evaluate(const EvaluateOpts& o) {
    ManifestWriter manifest(o.out, "evaluate", {{"model", o.model}}, 0);
    manifest.add_input(o.model);
    manifest.add_input(o.table);
    try {
        json model_json = detail::load_json(o.model);
        LinearModel model = model_from_json(model_json);
        const std::string task = model_json.value("task_target", "classify");
        FeatureTable table = read_feature_table(o.table);

        std::vector<int> predicted_labels;
        auto predictions = apply_model(model, table, &predicted_labels);
        fs::create_directories(o.out);
        std::ofstream csv(fs::path(o.out) / "predictions.csv");
        csv << "subject,truth,prediction\n";

        EvalReport report;
        if (model.task == Task::classification) {
            int correct = 0;
            for (std::size_t i = 0; i < table.n_subjects(); ++i) {
                const int truth =
                    table.subjects[i].cohort == Cohort::control ? kControlLabel : kFgrLabel;
                csv << table.subjects[i].id << "," << truth << "," << predicted_labels[i]
                    << "\n";
                correct += predicted_labels[i] == truth;
                if (truth == kFgrLabel)
                    (predicted_labels[i] == kFgrLabel ? report.tp : report.fn)++;
                else
                    (predicted_labels[i] == kControlLabel ? report.tn : report.fp)++;
            }
            report.accuracy =
                static_cast<double>(correct) / static_cast<double>(table.n_subjects());
            if (report.tp + report.fn > 0)
                report.sensitivity = static_cast<double>(report.tp) / (report.tp + report.fn);
            if (report.tn + report.fp > 0)
                report.specificity = static_cast<double>(report.tn) / (report.tn + report.fp);
        } else {
            double se = 0.0;
            for (std::size_t i = 0; i < table.n_subjects(); ++i) {
                const double truth = experiment_target(table.subjects[i], task);
                csv << table.subjects[i].id << "," << truth << "," << predictions[i] << "\n";
                se += (predictions[i] - truth) * (predictions[i] - truth);
            }
            report.rmse = std::sqrt(se / static_cast<double>(table.n_subjects()));
        }
        detail::save_json(fs::path(o.out) / "eval.json",
                          {{"task", task}, {"metrics", eval_to_json(report)}});
        manifest.add_output(fs::path(o.out) / "eval.json");
        write_eval_csv(fs::path(o.out) / "eval.csv", task, report, nullptr);
        manifest.add_output(fs::path(o.out) / "eval.csv");
        manifest.add_output(fs::path(o.out) / "predictions.csv");
        manifest.write("ok");
        std::cout << "evaluated " << table.n_subjects() << " subjects\n";
        return kOk;
    } catch (const std::invalid_argument& e) {
        manifest.write("error", e.what());
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        manifest.write("error", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kPartialFailure;
    }
}

struct ReportOpts {
    std::string dir;
    std::string out;
};

int run_report(const ReportOpts& o) {
    ManifestWriter manifest(fs::path(o.out).parent_path(), "report", {{"dir", o.dir}}, 0);
    manifest.add_input(o.dir);
    try {
        json report = json::array();
        for (const auto& entry : fs::recursive_directory_iterator(o.dir)) {
            if (!entry.is_regular_file()) continue;
            const auto name = entry.path().filename().string();
            if (name == "eval.json" || name == "manifest.json") {
                json j = detail::load_json(entry.path());
                j["_path"] = entry.path().string();
                report.push_back(std::move(j));
            }
        }
        detail::save_json(o.out, report);
        manifest.add_output(o.out);
        manifest.write("ok");
        std::cout << "aggregated " << report.size() << " artifacts into " << o.out << "\n";
        return kOk;
    } catch (const std::exception& e) {
        manifest.write("error", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kPartialFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fetal multi-organ diffusion-relaxation MRI analysis"};
    app.set_version_flag("--version", std::string(FETALFIT_VERSION));
    app.require_subcommand(1);

    SimulateOpts sim;
    auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic phantom cohort");
    sim_cmd->add_option("--out", sim.out, "output dataset directory")->required();
    sim_cmd->add_option("--seed", sim.seed, "cohort seed");
    sim_cmd->add_option("--n-control", sim.n_control, "control subjects");
    sim_cmd->add_option("--n-fgr", sim.n_fgr, "FGR subjects");
    sim_cmd->add_option("--dims", sim.dims, "grid dims nx ny nz")->expected(3);
    sim_cmd->add_option("--snr", sim.snr, "signal-to-noise ratio (<=0: noiseless)");
    sim_cmd->add_option("--config", sim.config_path, "cohort config JSON");

    FitOpts fit;
    auto* fit_cmd = app.add_subcommand("fit", "ROI + voxelwise model fitting");
    fit_cmd->add_option("--dataset", fit.dataset, "dataset directory")->required();
    fit_cmd->add_option("--out", fit.out, "output directory (default: dataset)");
    fit_cmd->add_option("--model", fit.model, "t2|adc|ivim|t2ivim|extivim|decide|all");
    fit_cmd->add_option("--organ", fit.organ, "placenta|liver|brain|lungs|all");
    fit_cmd->add_flag("--allow-decide-all", fit.allow_decide_all,
                      "allow DECIDE outside the placenta");
    fit_cmd->add_option("--seed", fit.seed, "multistart seed");
    fit_cmd->add_option("--restarts", fit.restarts, "ROI fit restarts");

    FeaturesOpts feat;
    auto* feat_cmd = app.add_subcommand("features", "map summaries, ratios and texture");
    feat_cmd->add_option("--dataset", feat.dataset, "dataset directory")->required();
    feat_cmd->add_option("--maps", feat.maps, "parameter map directory (default: dataset)");
    feat_cmd->add_option("--out", feat.out, "output CSV path")->required();
    feat_cmd->add_flag("--no-texture", feat.no_texture, "skip Haralick features");
    feat_cmd->add_flag("--no-ratios", feat.no_ratios, "skip organ-ratio features");
    feat_cmd->add_flag("--no-shapiro", feat.no_shapiro, "skip per-map Shapiro-Wilk report");
    feat_cmd->add_option("--texture-params", feat.texture_params,
                         "map parameters to run texture on");
    feat_cmd->add_option("--levels", feat.levels, "grey-level count");
    auto* tex_cmd = app.add_subcommand("texture", "alias of features");
    tex_cmd->add_option("--dataset", feat.dataset, "dataset directory")->required();
    tex_cmd->add_option("--maps", feat.maps, "parameter map directory (default: dataset)");
    tex_cmd->add_option("--out", feat.out, "output CSV path")->required();
    tex_cmd->add_flag("--no-texture", feat.no_texture, "skip Haralick features");
    tex_cmd->add_flag("--no-ratios", feat.no_ratios, "skip organ-ratio features");
    tex_cmd->add_flag("--no-shapiro", feat.no_shapiro, "skip per-map Shapiro-Wilk report");
    tex_cmd->add_option("--texture-params", feat.texture_params,
                        "map parameters to run texture on");
    tex_cmd->add_option("--levels", feat.levels, "grey-level count");

    StatsOpts stats;
    auto* stats_cmd = app.add_subcommand("stats", "cohort significance ranking");
    stats_cmd->add_option("--table", stats.table, "feature table CSV")->required();
    stats_cmd->add_option("--out", stats.out, "ranked CSV path")->required();
    stats_cmd->add_flag("--pooled", stats.pooled, "pooled (Student) t-test instead of Welch");
    stats_cmd->add_flag("--bh", stats.bh, "append Benjamini-Hochberg adjusted p-values");

    TrainOpts train;
    auto* train_cmd = app.add_subcommand("train", "train and evaluate a model");
    train_cmd->add_option("--table", train.table, "feature table CSV")->required();
    train_cmd->add_option("--task", train.task, "classify|ga|interval|weight");
    train_cmd->add_option("--features", train.features, "summaries|haralick|combined");
    train_cmd->add_option("--out", train.out, "output directory")->required();
    train_cmd->add_option("--strength", train.strength, "C or alpha (default: task preset)");
    train_cmd->add_option("--l1-ratio", train.l1_ratio, "l1 mixing (default: task preset)");
    train_cmd->add_option("--seed", train.seed, "split/fold seed");
    train_cmd->add_option("--folds", train.folds, "cross-validation folds");
    train_cmd->add_flag("--no-rfecv", train.no_rfecv, "skip recursive feature elimination");

    EvaluateOpts ev;
    auto* eval_cmd = app.add_subcommand("evaluate", "apply a saved model to a table");
    eval_cmd->add_option("--model", ev.model, "model.json path")->required();
    eval_cmd->add_option("--table", ev.table, "feature table CSV")->required();
    eval_cmd->add_option("--out", ev.out, "output directory")->required();

    ReportOpts rep;
    auto* rep_cmd = app.add_subcommand("report", "aggregate eval/manifest artifacts");
    rep_cmd->add_option("--dir", rep.dir, "directory to scan")->required();
    rep_cmd->add_option("--out", rep.out, "aggregated JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    if (sim_cmd->parsed()) return run_simulate(sim);
    if (fit_cmd->parsed()) return run_fit(fit);
    if (feat_cmd->parsed() || tex_cmd->parsed()) return run_features(feat);
    if (stats_cmd->parsed()) return run_stats(stats);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_evaluate(ev);
    if (rep_cmd->parsed()) return run_report(rep);
    return kUsageError;
}
