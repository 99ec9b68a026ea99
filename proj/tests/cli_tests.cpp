// End-to-end checks of the fetalfit CLI: every subcommand, exit codes,
// determinism and the documented file surfaces. Invoked by ctest with the
// binary path as argv[1].

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

#define EXPECT(cond)                                                              \
    do {                                                                          \
        if (!(cond)) {                                                            \
            std::cerr << "FAIL " << __FILE__ << ":" << __LINE__ << "  " << #cond \
                      << "\n";                                                    \
            ++g_failures;                                                         \
        }                                                                         \
    } while (0)

std::string g_cli;

int run(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t file_hash(const fs::path& p) { return std::hash<std::string>{}(slurp(p)); }

std::size_t tree_hash(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::size_t h = 0;
    for (const auto& f : files)
        h ^= file_hash(f) + 0x9e3779b9 + (h << 6) + (h >> 2);
    return h;
}

std::size_t count_columns(const fs::path& csv) {
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    return static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_tests <path-to-fetalfit>\n";
        return 1;
    }
    g_cli = argv[1];
    const fs::path work = fs::temp_directory_path() / "fetalfit_cli_tests";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string w = work.string();

    // --- usage errors ----------------------------------------------------
    EXPECT(run("simulate") == 2);                 // missing --out
    EXPECT(run("definitely-not-a-command") == 2); // unknown subcommand
    EXPECT(run("--version") == 0);

    // --- simulate ---------------------------------------------------------
    EXPECT(run("simulate --out " + w + "/a --seed 7 --n-control 2 --n-fgr 2 --dims 16 16 6") ==
           0);
    EXPECT(run("simulate --out " + w + "/b --seed 7 --n-control 2 --n-fgr 2 --dims 16 16 6") ==
           0);
    {
        std::size_t subjects = 0;
        for (const auto& e : fs::directory_iterator(work / "a"))
            subjects += e.is_directory();
        EXPECT(subjects == 4);
        // identical seeds give identical trees (ignore the manifests: wall time)
        fs::remove(work / "a" / "manifest.json");
        fs::remove(work / "b" / "manifest.json");
        EXPECT(tree_hash(work / "a") == tree_hash(work / "b"));
    }
    EXPECT(run("simulate --out " + w + "/tiny --n-control 1 --n-fgr 1 --dims 16 16 6") == 0);
    {
        std::size_t subjects = 0;
        for (const auto& e : fs::directory_iterator(work / "tiny"))
            subjects += e.is_directory();
        EXPECT(subjects == 2);
    }
    // config error: grid too small for the organ layout
    EXPECT(run("simulate --out " + w + "/bad --dims 4 4 2") == 2);
    {
        auto j = nlohmann::json::parse(slurp(work / "bad" / "manifest.json"));
        EXPECT(j.at("status") == "error");  // manifest written even on failure
    }

    // --- fit ---------------------------------------------------------------
    // all six models on the placenta of a single-subject dataset
    EXPECT(run("simulate --out " + w + "/one --seed 3 --n-control 1 --n-fgr 1 --dims 16 16 6") ==
           0);
    EXPECT(run("fit --dataset " + w + "/one --model all --organ placenta") == 0);
    {
        std::size_t maps = 0;
        for (const auto& e : fs::directory_iterator(work / "one" / "c01"))
            if (e.path().extension() == ".f32" &&
                e.path().filename().string().rfind("param_", 0) == 0)
                ++maps;
        EXPECT(maps == 6);  // six models
        EXPECT(fs::exists(work / "one" / "c01" / "roi_fits.json"));
    }
    // decide for the liver is flag-gated
    EXPECT(run("fit --dataset " + w + "/one --model decide --organ liver") == 2);
    EXPECT(run("fit --dataset " + w + "/one --model decide --organ liver --allow-decide-all") ==
           0);
    // rerunning a fit reproduces identical map bytes
    EXPECT(run("fit --dataset " + w + "/one --model ivim --organ liver --out " + w + "/m1") == 0);
    EXPECT(run("fit --dataset " + w + "/one --model ivim --organ liver --out " + w + "/m2") == 0);
    EXPECT(file_hash(work / "m1" / "c01" / "param_liver_ivim.f32") ==
           file_hash(work / "m2" / "c01" / "param_liver_ivim.f32"));

    // --- features ----------------------------------------------------------
    EXPECT(run("fit --dataset " + w + "/a --model ivim --organ all") == 0);
    EXPECT(run("fit --dataset " + w + "/a --model adc --organ all") == 0);
    EXPECT(run("features --dataset " + w + "/a --out " + w + "/f_plain.csv --no-texture "
               "--no-ratios --no-shapiro") == 0);
    {
        // ivim (4 params) + adc (2 params) on 4 organs, 6 statistics each,
        // plus the 6 label columns
        EXPECT(count_columns(work / "f_plain.csv") == 6u + 6u * (4u + 2u) * 4u);
    }
    EXPECT(run("features --dataset " + w + "/a --out " + w + "/f_tex.csv --no-ratios "
               "--no-shapiro --texture-params f") == 0);
    {
        // texture adds 12 columns per f map (4 organs) and per b0 block (4 organs)
        EXPECT(count_columns(work / "f_tex.csv") ==
               count_columns(work / "f_plain.csv") + 12u * 4u + 12u * 4u);
    }
    EXPECT(run("features --dataset " + w + "/a --out " + w + "/f1.csv") == 0);
    EXPECT(run("features --dataset " + w + "/a --out " + w + "/f2.csv") == 0);
    EXPECT(file_hash(work / "f1.csv") == file_hash(work / "f2.csv"));
    EXPECT(fs::exists(work / "f1.csv.shapiro.csv"));
    // texture alias behaves like features
    EXPECT(run("texture --dataset " + w + "/a --out " + w + "/f3.csv") == 0);
    EXPECT(file_hash(work / "f1.csv") == file_hash(work / "f3.csv"));

    // --- stats ---------------------------------------------------------------
    EXPECT(run("stats --table " + w + "/f1.csv --out " + w + "/ranked.csv") == 0);
    {
        std::ifstream in(work / "ranked.csv");
        std::string header;
        std::getline(in, header);
        EXPECT(header ==
               "Model Fitting Technique,Parameter,Average Metric,Pairwise Group Comparison,"
               "Organ,T Statistic,P-Value");
    }
    EXPECT(run("stats --table " + w + "/f1.csv --out " + w + "/ranked_bh.csv --bh") == 0);
    EXPECT(count_columns(work / "ranked_bh.csv") == 8);

    // --- train / evaluate / report -------------------------------------------
    // a feature table large enough for a 3-fold stratified experiment
    EXPECT(run("simulate --out " + w + "/coh --seed 5 --n-control 6 --n-fgr 6 --dims 16 16 6") ==
           0);
    EXPECT(run("fit --dataset " + w + "/coh --model ivim --organ all") == 0);
    EXPECT(run("features --dataset " + w + "/coh --out " + w + "/coh.csv --no-shapiro") == 0);
    EXPECT(run("train --table " + w + "/coh.csv --task classify --features summaries --out " +
               w + "/clf --seed 2 --folds 3") == 0);
    EXPECT(fs::exists(work / "clf" / "model.json"));
    EXPECT(fs::exists(work / "clf" / "eval.json"));
    EXPECT(fs::exists(work / "clf" / "predictions.csv"));
    EXPECT(fs::exists(work / "clf" / "eval.csv"));
    EXPECT(run("train --table " + w + "/coh.csv --task ga --features summaries --out " + w +
               "/ga --seed 2 --folds 3") == 0);
    EXPECT(fs::exists(work / "ga" / "scatter.svg"));
    {
        auto j = nlohmann::json::parse(slurp(work / "ga" / "eval.json"));
        EXPECT(j.at("test").contains("rmse"));
    }
    // haralick family path runs end-to-end
    EXPECT(run("train --table " + w + "/coh.csv --task classify --features haralick --out " + w +
               "/clf_h --seed 2 --folds 3") == 0);

    // evaluating a reloaded model is deterministic
    EXPECT(run("evaluate --model " + w + "/clf/model.json --table " + w + "/coh.csv --out " + w +
               "/ev1") == 0);
    EXPECT(run("evaluate --model " + w + "/clf/model.json --table " + w + "/coh.csv --out " + w +
               "/ev2") == 0);
    EXPECT(file_hash(work / "ev1" / "predictions.csv") ==
           file_hash(work / "ev2" / "predictions.csv"));

    EXPECT(run("report --dir " + w + " --out " + w + "/report.json") == 0);
    {
        auto j = nlohmann::json::parse(slurp(work / "report.json"));
        EXPECT(j.is_array());
        EXPECT(j.size() >= 4);
    }

    // unreadable table is a config error
    EXPECT(run("stats --table " + w + "/nonexistent.csv --out " + w + "/x.csv") == 1);

    if (g_failures == 0) {
        std::cout << "cli_tests: all checks passed\n";
        return 0;
    }
    std::cerr << "cli_tests: " << g_failures << " failures\n";
    return 1;
}
