#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "fetalfit/phantom.hpp"
#include "fetalfit/pipeline.hpp"

using namespace fetalfit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* suffix) {
    auto p = fs::temp_directory_path() / (std::string("fetalfit_pipe_") + suffix);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

CohortConfig tiny_config() {
    CohortConfig c;
    c.n_control = 2;
    c.n_fgr = 2;
    c.nx = 16;
    c.ny = 16;
    c.nz = 6;
    c.seed = 4;
    return c;
}

/// A subject whose "fitted" maps are its own truth maps; cheap and exact.
std::pair<Dataset, std::vector<ParameterMap>> truth_subject(Cohort cohort, std::uint64_t seed,
                                                            const std::string& id) {
    auto ds = generate_subject(cohort, tiny_config(), seed, id);
    std::vector<ParameterMap> maps;
    for (Organ o : kAllOrgans) maps.push_back(ds.truths.at(to_string(o)));
    return {std::move(ds), std::move(maps)};
}

}  // namespace

TEST_CASE("feature names classify into kinds and families") {
    CHECK(classify_feature("placenta/decide/f/mean") == FeatureKind::summary);
    CHECK(classify_feature("liver_over_lungs/ivim/f/median") == FeatureKind::ratio);
    CHECK(classify_feature("placenta/extivim/Dstar/energy_mean") == FeatureKind::texture);
    CHECK(classify_feature("liver/b0/signal/contrast_max") == FeatureKind::texture);
    CHECK(classify_feature("placenta/t2/T2/variance") == FeatureKind::summary);

    CHECK(in_family(FeatureKind::summary, "summaries"));
    CHECK(in_family(FeatureKind::ratio, "summaries"));
    CHECK_FALSE(in_family(FeatureKind::texture, "summaries"));
    CHECK(in_family(FeatureKind::texture, "haralick"));
    CHECK_FALSE(in_family(FeatureKind::summary, "haralick"));
    CHECK(in_family(FeatureKind::texture, "combined"));
    CHECK_THROWS_AS(in_family(FeatureKind::summary, "bogus"), std::invalid_argument);
    CHECK_THROWS_AS(classify_feature("not-a-feature"), std::invalid_argument);
}

TEST_CASE("display names match the published table vocabulary") {
    CHECK(display_model("ivim") == "Standard IVIM");
    CHECK(display_model("t2ivim") == "T2 Dependent IVIM");
    CHECK(display_model("extivim") == "Extended 2xT2 Dependent IVIM");
    CHECK(display_model("decide") == "DECIDE Model (Voxelwise Measurements)");
    CHECK(display_model("b0") == "b=0 Volume");
    CHECK(display_param("f") == "Perfusion Fraction");
    CHECK(display_param("Dstar") == "D*");
    CHECK(display_param("T2t") == "Tissue T2");
    CHECK(display_param("signal") == "-");
    CHECK(display_stat("median") == "Median");
    CHECK(display_stat("energy_mean") == "Mean Energy");
    CHECK(display_stat("contrast_max") == "Max Contrast");
    CHECK(display_organ("placenta") == "Placenta");
    CHECK(display_organ("liver_over_lungs") == "Liver/Lungs");
}

TEST_CASE("feature extraction column arithmetic") {
    auto [ds, maps] = truth_subject(Cohort::control, 42, "c01");
    // decide (6 params) + 3 x extivim (6 params) = 24 parameter channels
    int total_params = 0;
    for (const auto& m : maps) total_params += m.np;
    REQUIRE(total_params == 24);

    SECTION("summaries only: 6 statistics per parameter channel") {
        FeatureOptions opt;
        opt.ratios = false;
        opt.texture = false;
        auto features = extract_subject_features(ds, maps, opt);
        CHECK(features.size() == 6u * 24u);
    }
    SECTION("texture adds 12 columns per selected map") {
        FeatureOptions base;
        base.ratios = false;
        base.texture = false;
        const auto n0 = extract_subject_features(ds, maps, base).size();
        FeatureOptions with = base;
        with.texture = true;
        with.texture_b0 = false;
        with.texture_params = {"f"};  // each of the 4 maps has exactly one f channel
        const auto n1 = extract_subject_features(ds, maps, with).size();
        CHECK(n1 - n0 == 4u * 12u);
        with.texture_b0 = true;  // adds one 12-column block per organ mask
        const auto n2 = extract_subject_features(ds, maps, with).size();
        CHECK(n2 - n1 == 4u * 12u);
    }
    SECTION("ratio features exist for models shared with the lungs") {
        FeatureOptions opt;
        opt.texture = false;
        auto features = extract_subject_features(ds, maps, opt);
        int ratios = 0;
        for (const auto& [name, v] : features)
            ratios += classify_feature(name) == FeatureKind::ratio;
        // liver and lungs share extivim; the placenta map is decide-only here
        CHECK(ratios == 2);
    }
    SECTION("summary values match direct computation") {
        FeatureOptions opt;
        opt.ratios = false;
        opt.texture = false;
        auto features = extract_subject_features(ds, maps, opt);
        const auto& placenta = maps[0];
        auto s = summarize_values(placenta.present_values(placenta.param_index("f")));
        bool checked = false;
        for (const auto& [name, v] : features) {
            if (name == "placenta/decide/f/mean") {
                CHECK(v == Approx(s.mean));
                checked = true;
            }
            if (name == "placenta/decide/f/variance") CHECK(v == Approx(s.variance));
        }
        CHECK(checked);
    }
}

TEST_CASE("build_feature_table keeps a rectangular, ordered table") {
    std::vector<std::pair<Dataset, std::vector<ParameterMap>>> subjects;
    subjects.push_back(truth_subject(Cohort::control, 1, "c01"));
    subjects.push_back(truth_subject(Cohort::fgr, 2, "f01"));
    FeatureOptions opt;
    auto table = build_feature_table(subjects, opt);
    CHECK(table.n_subjects() == 2);
    CHECK(table.n_features() > 100);
    CHECK_NOTHROW(table.validate());
    CHECK(table.subjects[0].id == "c01");
    CHECK(table.subjects[1].cohort == Cohort::fgr);
}

TEST_CASE("ranked CSV carries the published column set") {
    auto dir = temp_dir("ranked");
    FeatureTable t;
    t.feature_names = {"placenta/extivim/Dstar/mean", "liver_over_lungs/ivim/f/median"};
    Rng rng(5);
    for (int i = 0; i < 12; ++i) {
        SubjectRecord r;
        r.id = "s" + std::to_string(i);
        r.cohort = i < 6 ? Cohort::control : Cohort::fgr;
        r.ga_at_scan = 28;
        r.ga_at_delivery = 33;
        r.scan_to_delivery = 5;
        r.baby_weight = 2000;
        const double shift = r.cohort == Cohort::fgr ? 2.0 : 0.0;
        t.add_row(r, {rng.normal() + shift, rng.normal()});
    }
    auto ranked = rank_features(t);
    write_ranked_csv(ranked, dir / "ranked.csv");
    std::ifstream in(dir / "ranked.csv");
    std::string header, first;
    REQUIRE(std::getline(in, header));
    CHECK(header ==
          "Model Fitting Technique,Parameter,Average Metric,Pairwise Group Comparison,Organ,"
          "T Statistic,P-Value");
    REQUIRE(std::getline(in, first));
    CHECK(first.find("Extended 2xT2 Dependent IVIM,D*,Mean,Control vs FGR,Placenta,") == 0);
}

namespace {
// 12 control + 11 FGR mirrors the clinical case count: the 80/20 split then
// lands on 18 train (9 + 9, balanced) / 5 test.
FeatureTable experiment_table(int n_control, int n_fgr, std::uint64_t seed) {
    FeatureTable t;
    t.feature_names = {"placenta/decide/f/mean",     "placenta/decide/Dstar/mean",
                       "liver/extivim/f/median",     "brain/extivim/ADC/mean",
                       "lungs/extivim/T2p/variance", "placenta/extivim/Dstar/energy_mean",
                       "placenta/b0/signal/contrast_max"};
    Rng rng(seed);
    for (int i = 0; i < n_control + n_fgr; ++i) {
        SubjectRecord r;
        r.id = (i < n_control ? "c" : "f") + std::to_string(i % n_control);
        r.cohort = i < n_control ? Cohort::control : Cohort::fgr;
        const bool fgr = r.cohort == Cohort::fgr;
        const double severity = fgr ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0);
        r.ga_at_scan = 28.0;
        r.ga_at_delivery = 28.0 + 10.0 * severity + rng.normal(0.0, 0.3);
        r.scan_to_delivery = r.ga_at_delivery - r.ga_at_scan;
        r.baby_weight = 800.0 + 2200.0 * severity + rng.normal(0.0, 60.0);
        std::vector<double> row(7);
        row[0] = 0.15 + 0.25 * severity + rng.normal(0.0, 0.01);  // placental f
        row[1] = 0.02 + 0.05 * severity + rng.normal(0.0, 0.003); // placental D*
        row[2] = 0.1 + 0.15 * severity + rng.normal(0.0, 0.01);   // liver f
        row[3] = rng.normal(1.2e-3, 1e-4);                        // noise
        row[4] = rng.normal(30.0, 5.0);                           // noise
        row[5] = 0.3 + 0.2 * severity + rng.normal(0.0, 0.02);    // texture, informative
        row[6] = rng.normal(2.0, 0.5);                            // texture, noise
        t.add_row(r, row);
    }
    return t;
}
}  // namespace

TEST_CASE("run_experiment trains, selects and evaluates") {
    auto table = experiment_table(12, 11, 99);
    ExperimentConfig cfg;
    cfg.task = "classify";
    cfg.features = "summaries";
    cfg.train = TrainConfig{};
    cfg.train.strength = 0.001;

    auto result = run_experiment(table, cfg);
    CHECK(result.train_ids.size() == 18);
    CHECK(result.test_ids.size() == 5);
    REQUIRE(result.test_report.accuracy.has_value());
    CHECK(*result.test_report.accuracy == 1.0);
    CHECK(result.cv.mean >= 0.9);
    // texture features must not leak into the summaries family
    for (const auto& name : result.selected_features)
        CHECK(classify_feature(name) != FeatureKind::texture);

    SECTION("regression task") {
        ExperimentConfig reg = cfg;
        reg.task = "ga";
        reg.train.strength = 1.0;
        auto r2 = run_experiment(table, reg);
        REQUIRE(r2.test_report.rmse.has_value());
        CHECK(*r2.test_report.rmse < 3.0);
        CHECK(r2.scatter.size() == 5);
    }
    SECTION("haralick family uses texture columns only") {
        ExperimentConfig har = cfg;
        har.features = "haralick";
        auto r3 = run_experiment(table, har);
        for (const auto& name : r3.selected_features)
            CHECK(classify_feature(name) == FeatureKind::texture);
    }
}

TEST_CASE("test subjects cannot influence the trained model") {
    auto table = experiment_table(12, 11, 123);
    ExperimentConfig cfg;
    cfg.task = "classify";
    cfg.features = "combined";
    cfg.train.strength = 0.01;

    auto base = run_experiment(table, cfg);

    // corrupt every test subject's features; the trained model must not move
    FeatureTable corrupted = table;
    Rng rng(5);
    for (std::size_t i = 0; i < table.n_subjects(); ++i) {
        const auto& id = table.subjects[i].id;
        if (std::find(base.test_ids.begin(), base.test_ids.end(), id) == base.test_ids.end())
            continue;
        for (auto& v : corrupted.rows[i]) v = rng.normal(100.0, 50.0);
    }
    auto poked = run_experiment(corrupted, cfg);
    CHECK(poked.train_ids == base.train_ids);
    REQUIRE(poked.model.weights.size() == base.model.weights.size());
    for (Eigen::Index j = 0; j < base.model.weights.size(); ++j)
        CHECK(poked.model.weights[j] == base.model.weights[j]);
    CHECK(poked.model.intercept == base.model.intercept);
    CHECK(poked.selected_features == base.selected_features);
}

TEST_CASE("experiment is reproducible from the seed") {
    auto table = experiment_table(12, 11, 7);
    ExperimentConfig cfg;
    cfg.task = "weight";
    cfg.train.strength = 0.1;
    auto a = run_experiment(table, cfg);
    auto b = run_experiment(table, cfg);
    CHECK(a.test_ids == b.test_ids);
    CHECK(*a.test_report.rmse == *b.test_report.rmse);
    for (Eigen::Index j = 0; j < a.model.weights.size(); ++j)
        CHECK(a.model.weights[j] == b.model.weights[j]);
}

TEST_CASE("apply_model matches in-process predictions after JSON round-trip") {
    auto table = experiment_table(10, 10, 31);
    ExperimentConfig cfg;
    cfg.task = "classify";
    cfg.train.strength = 0.05;
    auto result = run_experiment(table, cfg);

    auto j = model_to_json(result.model);
    auto reloaded = model_from_json(j);
    std::vector<int> labels_a, labels_b;
    auto pa = apply_model(result.model, table, &labels_a);
    auto pb = apply_model(reloaded, table, &labels_b);
    CHECK(pa == pb);
    CHECK(labels_a == labels_b);
}

TEST_CASE("scatter svg is written with points and axes") {
    auto dir = temp_dir("svg");
    std::vector<std::pair<double, double>> pts = {{30.0, 31.0}, {35.0, 34.2}, {28.0, 29.5}};
    write_scatter_svg(dir / "s.svg", pts, "test", "true", "predicted");
    std::ifstream in(dir / "s.svg");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.find("<svg") == 0);
    CHECK(content.find("<circle") != std::string::npos);
    CHECK(std::count(content.begin(), content.end(), '\n') > 10);
    CHECK_THROWS_AS(write_scatter_svg(dir / "t.svg", {}, "t", "x", "y"), std::invalid_argument);
}

TEST_CASE("manifest records config hash, inputs and outputs") {
    auto dir = temp_dir("manifest");
    ManifestWriter m(dir, "test", {{"alpha", 1.5}}, 42);
    m.add_input("/input/a");
    m.add_output("/output/b");
    m.write("ok");
    auto j = detail::load_json(dir / "manifest.json");
    CHECK(j.at("command") == "test");
    CHECK(j.at("seed") == 42);
    CHECK(j.at("status") == "ok");
    CHECK(j.at("inputs").size() == 1);
    CHECK(j.at("outputs").size() == 1);
    CHECK(j.at("config_hash").get<std::string>().size() == 16);
    CHECK(j.contains("wall_time_s"));
    CHECK(j.at("version") == FETALFIT_VERSION);

    // written on failure too
    ManifestWriter f(dir, "test", {}, 0);
    f.write("error", "boom");
    auto jf = detail::load_json(dir / "manifest.json");
    CHECK(jf.at("status") == "error");
    CHECK(jf.at("error") == "boom");
}
