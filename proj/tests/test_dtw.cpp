#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "icutraj/dtw.hpp"
#include "icutraj/rng.hpp"
#include "oracles.hpp"

using namespace icutraj;

namespace {
std::vector<double> random_series(Rng& rng, size_t min_len, size_t max_len) {
    size_t len = min_len + rng.uniform_int(max_len - min_len + 1);
    std::vector<double> s(len);
    for (auto& v : s) v = rng.next_double();
    return s;
}
}  // namespace

TEST_CASE("dtw distance on hand fixtures") {
    CHECK(dtw::distance(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
    CHECK(dtw::distance(std::vector<double>{1, 3}, std::vector<double>{2, 2, 2}) == 3.0);
    CHECK(dtw::distance(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 2.0);
}

TEST_CASE("dtw identity, symmetry, non-negativity") {
    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
        auto a = random_series(rng, 1, 12);
        auto b = random_series(rng, 1, 12);
        CHECK(dtw::distance(a, a) == 0.0);
        double ab = dtw::distance(a, b);
        CHECK(ab == dtw::distance(b, a));
        CHECK(ab >= 0.0);
    }
}

TEST_CASE("dtw is invariant to repeating a matched point") {
    std::vector<double> single{0.37};
    for (int reps = 1; reps <= 6; ++reps) {
        std::vector<double> repeated(reps, 0.37);
        CHECK(dtw::distance(single, repeated) == 0.0);
    }
}

TEST_CASE("dtw rejects empty input and too-narrow bands") {
    std::vector<double> empty;
    std::vector<double> one{1.0};
    CHECK_THROWS(dtw::distance(empty, one));
    CHECK_THROWS(dtw::distance(one, empty));
    std::vector<double> a{1, 2, 3, 4, 5};
    std::vector<double> b{1, 2};
    CHECK_THROWS(dtw::distance(a, b, 2));  // |5 - 2| = 3 > 2
}

TEST_CASE("banded dtw equals unbanded when the band is wide enough") {
    Rng rng(11);
    for (int t = 0; t < 30; ++t) {
        auto a = random_series(rng, 2, 15);
        auto b = random_series(rng, 2, 15);
        int wide = static_cast<int>(std::max(a.size(), b.size())) - 1;
        CHECK(dtw::distance(a, b, wide) == dtw::distance(a, b));
    }
}

TEST_CASE("dtw equals full-matrix oracle exactly") {
    Rng rng(13);
    for (int t = 0; t < 200; ++t) {
        auto a = random_series(rng, 1, 20);
        auto b = random_series(rng, 1, 20);
        CHECK(dtw::distance(a, b) == oracles::dtw_full_matrix(a, b));
    }
}

TEST_CASE("feature matrix: single patient and hand values") {
    std::vector<std::string> one_id = {"a"};
    auto m1 = dtw::feature_distance_matrix({{1.0, 2.0}}, one_id, "heart_rate");
    CHECK(m1.n == 1);
    CHECK(m1.at(0, 0) == 0.0);

    std::vector<std::vector<double>> series = {{1, 2, 3}, {1, 3}, {2, 2, 2}};
    std::vector<std::string> ids = {"a", "b", "c"};
    auto m = dtw::feature_distance_matrix(series, ids, "x");
    CHECK(m.at(0, 1) == dtw::distance(series[0], series[1]));
    CHECK(m.at(1, 2) == 3.0);
    CHECK(m.at(0, 2) == dtw::distance(series[0], series[2]));
    for (int i = 0; i < 3; ++i) {
        CHECK(m.at(i, i) == 0.0);
        for (int j = 0; j < 3; ++j) CHECK(m.at(i, j) == m.at(j, i));
    }
}

TEST_CASE("feature matrix equals brute-force pairwise recomputation") {
    Rng rng(17);
    const int n = 20;
    std::vector<std::vector<double>> series;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
        series.push_back(random_series(rng, 1, 10));
        ids.push_back("p" + std::to_string(i));
    }
    auto m = dtw::feature_distance_matrix(series, ids, "x");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            CHECK(m.at(i, j) == (i == j ? 0.0 : oracles::dtw_full_matrix(series[i], series[j])));
}

TEST_CASE("feature matrix rejects empty trajectories") {
    std::vector<std::vector<double>> series = {{1.0}, {}};
    std::vector<std::string> ids = {"a", "b"};
    CHECK_THROWS(dtw::feature_distance_matrix(series, ids, "x"));
}

TEST_CASE("parallel matrix computation is bit-identical to serial") {
    Rng rng(23);
    const int n = 40;
    std::vector<std::vector<double>> series;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
        series.push_back(random_series(rng, 3, 40));
        ids.push_back("p" + std::to_string(i));
    }
    auto serial = dtw::feature_distance_matrix(series, ids, "x", std::nullopt, 1);
    for (int threads : {2, 3, 7}) {
        auto parallel = dtw::feature_distance_matrix(series, ids, "x", std::nullopt, threads);
        CHECK(serial.values == parallel.values);
    }
}

TEST_CASE("total matrix sums element-wise") {
    std::vector<std::string> ids = {"a", "b", "c"};
    auto zero = dtw::DistanceMatrix::zeros(3, "z", ids);
    auto total_zero = dtw::total_distance_matrix(std::vector<dtw::DistanceMatrix>(8, zero));
    for (double v : total_zero.values) CHECK(v == 0.0);
    CHECK(total_zero.feature_tag == "total");

    Rng rng(29);
    auto m = dtw::DistanceMatrix::zeros(3, "m", ids);
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            double v = rng.next_double();
            m.set(i, j, v);
            m.set(j, i, v);
        }
    auto twice = m;
    for (auto& v : twice.values) v *= 2.0;
    auto total = dtw::total_distance_matrix({m, twice});
    for (size_t k = 0; k < total.values.size(); ++k) CHECK(total.values[k] == 3.0 * m.values[k]);

    // Scalar-loop oracle on random fixtures.
    std::vector<dtw::DistanceMatrix> mats;
    for (int f = 0; f < 5; ++f) {
        auto mf = dtw::DistanceMatrix::zeros(3, "f" + std::to_string(f), ids);
        for (auto& v : mf.values) v = rng.next_double();
        mats.push_back(std::move(mf));
    }
    auto sum = dtw::total_distance_matrix(mats);
    for (size_t k = 0; k < sum.values.size(); ++k) {
        double expect = 0.0;
        for (const auto& mf : mats) expect += mf.values[k];
        CHECK(sum.values[k] == expect);
    }
}

TEST_CASE("total matrix rejects mismatched inputs") {
    auto a = dtw::DistanceMatrix::zeros(3, "a", {"x", "y", "z"});
    auto b = dtw::DistanceMatrix::zeros(2, "b", {"x", "y"});
    CHECK_THROWS(dtw::total_distance_matrix({a, b}));
    auto c = dtw::DistanceMatrix::zeros(3, "c", {"x", "z", "y"});
    CHECK_THROWS(dtw::total_distance_matrix({a, c}));
}

TEST_CASE("matrix file round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "icutraj_dtw_test";
    std::filesystem::create_directories(dir);
    Rng rng(31);
    auto m = dtw::DistanceMatrix::zeros(4, "heart_rate", {"a", "b", "c", "d"});
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            double v = rng.next_double();
            m.set(i, j, v);
            m.set(j, i, v);
        }
    auto path = (dir / "m.tcdm").string();
    dtw::write_matrix(path, m);
    auto back = dtw::read_matrix(path);
    CHECK(back.n == m.n);
    CHECK(back.feature_tag == m.feature_tag);
    CHECK(back.values == m.values);

    auto index_path = (dir / "index.txt").string();
    dtw::write_patient_index(index_path, m.patient_index);
    CHECK(dtw::read_patient_index(index_path) == m.patient_index);
    std::filesystem::remove_all(dir);
}
