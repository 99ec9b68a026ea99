#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "fetalfit/dataset_io.hpp"
#include "fetalfit/rng.hpp"

using namespace fetalfit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* suffix) {
    auto p = fs::temp_directory_path() / (std::string("fetalfit_test_") + suffix);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Dataset make_small_dataset() {
    Dataset ds;
    ds.protocol.samples = {{0.0, 80.0}, {0.0, 160.0}, {500.0, 80.0}, {500.0, 160.0}};
    ds.volume.nx = 3;
    ds.volume.ny = 2;
    ds.volume.nz = 2;
    ds.volume.ns = 4;
    Rng rng(5);
    ds.volume.data.resize(ds.volume.spatial_count() * 4);
    for (auto& v : ds.volume.data) v = static_cast<float>(rng.uniform(0.0, 100.0));

    OrganMask m;
    m.organ = Organ::placenta;
    m.nx = 3;
    m.ny = 2;
    m.nz = 2;
    m.data.assign(m.spatial_count(), 0);
    m.data[0] = m.data[3] = m.data[7] = 1;
    ds.masks.push_back(m);

    ds.subject = {"s01", Cohort::fgr, 28.0, 32.5, 4.5, 1450.0};
    return ds;
}

}  // namespace

TEST_CASE("dataset write/read round-trips bit-identically") {
    auto dir = temp_dir("roundtrip");
    Dataset ds = make_small_dataset();
    write_dataset(dir, ds);
    Dataset back = read_dataset(dir);

    CHECK(back.volume.data == ds.volume.data);
    CHECK(back.volume.nx == ds.volume.nx);
    CHECK(back.volume.voxel_size == ds.volume.voxel_size);
    REQUIRE(back.masks.size() == 1);
    CHECK(back.masks[0].data == ds.masks[0].data);
    CHECK(back.subject.id == ds.subject.id);
    CHECK(back.subject.cohort == ds.subject.cohort);
    CHECK(back.subject.baby_weight == ds.subject.baby_weight);
    REQUIRE(back.protocol.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back.protocol.samples[i].b == ds.protocol.samples[i].b);
        CHECK(back.protocol.samples[i].te == ds.protocol.samples[i].te);
    }
}

TEST_CASE("dataset read rejects frame-count mismatch") {
    auto dir = temp_dir("mismatch");
    Dataset ds = make_small_dataset();
    write_dataset(dir, ds);
    // Truncate one frame off the raw payload; the sidecar still declares 4.
    auto raw = detail::read_raw_f32(dir / "signal.f32", ds.volume.data.size());
    raw.resize(ds.volume.spatial_count() * 3);
    detail::write_raw_f32(dir / "signal.f32", raw);
    CHECK_THROWS_AS(read_dataset(dir), io_error);
}

TEST_CASE("dataset read rejects non-finite intensities") {
    auto dir = temp_dir("nonfinite");
    Dataset ds = make_small_dataset();
    ds.volume.data[5] = std::numeric_limits<float>::quiet_NaN();
    write_dataset(dir, ds);
    CHECK_THROWS_AS(read_dataset(dir), io_error);
}

TEST_CASE("dataset read rejects mask size mismatch instead of truncating") {
    auto dir = temp_dir("masksize");
    Dataset ds = make_small_dataset();
    write_dataset(dir, ds);
    std::vector<std::uint8_t> small(ds.masks[0].spatial_count() - 1, 1);
    detail::write_raw_u8(dir / "mask_placenta.u8", small);
    CHECK_THROWS_AS(read_dataset(dir), io_error);
}

TEST_CASE("dataset read rejects degenerate protocols") {
    auto dir = temp_dir("badprotocol");
    Dataset ds = make_small_dataset();
    for (auto& s : ds.protocol.samples) s.te = 80.0;  // one distinct te
    write_dataset(dir, ds);
    CHECK_THROWS_AS(read_dataset(dir), io_error);
}

TEST_CASE("missing file reported") {
    auto dir = temp_dir("missing");
    CHECK_THROWS_AS(read_dataset(dir), io_error);
}

TEST_CASE("subject record invariants") {
    SubjectRecord r{"x", Cohort::control, 28.0, 33.0, 5.0, 2000.0};
    CHECK_NOTHROW(r.validate());
    r.scan_to_delivery = 5.1;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r.scan_to_delivery = 5.0;
    r.ga_at_scan = 15.0;
    r.ga_at_delivery = 20.0;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}

TEST_CASE("parameter map round-trip preserves absents and failures") {
    auto dir = temp_dir("parammap");
    ParameterMap map;
    map.model = "ivim";
    map.organ = "liver";
    map.param_names = {"S0", "f", "Dstar", "ADC"};
    map.nx = 2;
    map.ny = 2;
    map.nz = 1;
    map.np = 4;
    map.data.assign(map.spatial_count() * 4, kAbsent);
    map.residual.assign(map.spatial_count(), kAbsent);
    map.data[map.index(1, 0)] = 10.f;
    map.data[map.index(1, 1)] = 0.25f;
    map.data[map.index(1, 2)] = 0.05f;
    map.data[map.index(1, 3)] = 0.002f;
    map.residual[1] = 1e-4f;
    map.failures.emplace_back(2, "degenerate_signal");
    map.not_converged = 1;

    write_parameter_map(dir, map);
    auto back = read_parameter_map(dir, "liver", "ivim");
    CHECK(back.param_names == map.param_names);
    CHECK(back.present(1));
    CHECK_FALSE(back.present(0));
    CHECK(back.value(1, 2) == 0.05f);
    CHECK(back.residual[1] == 1e-4f);
    REQUIRE(back.failures.size() == 1);
    CHECK(back.failures[0].first == 2);
    CHECK(back.failures[0].second == "degenerate_signal");
    CHECK(back.not_converged == 1);
    CHECK(back.param_index("Dstar") == 2);
    CHECK_THROWS_AS(back.param_index("zzz"), std::invalid_argument);
}

TEST_CASE("feature table CSV") {
    auto dir = temp_dir("csv");
    SECTION("empty table yields header-only CSV") {
        FeatureTable t;
        t.feature_names = {"a/b/c/mean", "a/b/c/max"};
        write_feature_table(t, dir / "empty.csv");
        std::ifstream in(dir / "empty.csv");
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line ==
              "id,cohort,ga_at_scan,ga_at_delivery,scan_to_delivery,baby_weight,a/b/c/mean,"
              "a/b/c/max");
        CHECK_FALSE(std::getline(in, line));
        auto back = read_feature_table(dir / "empty.csv");
        CHECK(back.n_subjects() == 0);
        CHECK(back.feature_names == t.feature_names);
    }
    SECTION("one subject, two features") {
        FeatureTable t;
        t.feature_names = {"f1", "f2"};
        t.add_row({"s1", Cohort::control, 28.0, 33.0, 5.0, 2000.0}, {1.5, -2.25});
        write_feature_table(t, dir / "one.csv");
        auto back = read_feature_table(dir / "one.csv");
        REQUIRE(back.n_subjects() == 1);
        CHECK(back.rows[0] == std::vector<double>{1.5, -2.25});
        CHECK(back.subjects[0].cohort == Cohort::control);
    }
    SECTION("23x137 round trip with absents is value-exact") {
        FeatureTable t;
        for (int j = 0; j < 137; ++j) t.feature_names.push_back("f" + std::to_string(j));
        Rng rng(7);
        for (int i = 0; i < 23; ++i) {
            SubjectRecord r;
            r.id = "s" + std::to_string(i);
            r.cohort = (i % 2) ? Cohort::fgr : Cohort::control;
            r.ga_at_scan = rng.uniform(24.0, 34.0);
            r.ga_at_delivery = r.ga_at_scan + rng.uniform(1.0, 10.0);
            r.scan_to_delivery = r.ga_at_delivery - r.ga_at_scan;
            r.baby_weight = rng.uniform(500.0, 3500.0);
            std::vector<double> row(137);
            for (auto& v : row)
                v = (rng.uniform() < 0.05) ? std::numeric_limits<double>::quiet_NaN()
                                           : rng.normal(0.0, 100.0);
            t.add_row(r, row);
        }
        write_feature_table(t, dir / "big.csv");
        auto back = read_feature_table(dir / "big.csv");
        REQUIRE(back.n_subjects() == 23);
        REQUIRE(back.n_features() == 137);
        for (int i = 0; i < 23; ++i) {
            CHECK(back.subjects[i].ga_at_scan == t.subjects[i].ga_at_scan);
            CHECK(back.subjects[i].baby_weight == t.subjects[i].baby_weight);
            for (int j = 0; j < 137; ++j) {
                if (std::isnan(t.rows[i][j]))
                    CHECK(std::isnan(back.rows[i][j]));
                else
                    CHECK(back.rows[i][j] == t.rows[i][j]);
            }
        }
    }
    SECTION("non-rectangular table rejected") {
        FeatureTable t;
        t.feature_names = {"f1", "f2"};
        CHECK_THROWS_AS(t.add_row({"s1", Cohort::control, 28, 33, 5, 2000}, {1.0}),
                        std::invalid_argument);
        t.add_row({"s1", Cohort::control, 28, 33, 5, 2000}, {1.0, 2.0});
        t.rows[0].pop_back();
        CHECK_THROWS_AS(write_feature_table(t, dir / "bad.csv"), std::invalid_argument);
    }
}
