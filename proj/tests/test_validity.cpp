#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "icutraj/hdbscan.hpp"
#include "icutraj/rng.hpp"
#include "icutraj/validity.hpp"
#include "oracles.hpp"

using namespace icutraj;
using namespace icutraj::validity;

namespace {

struct Fixture {
    std::vector<double> coords;  // 1-d or 2-d
    int n = 0;
    int dims = 1;
    std::vector<int> labels;
    dtw::DistanceMatrix matrix() const { return hdbscan::euclidean_matrix(coords, n, dims); }
};

Fixture hand_fixture() {
    // Clusters {0, 1} and {10, 11} on the line.
    Fixture f;
    f.coords = {0.0, 1.0, 10.0, 11.0};
    f.n = 4;
    f.labels = {0, 0, 1, 1};
    return f;
}

Fixture random_fixture(Rng& rng, int n, int k, int dims = 2) {
    Fixture f;
    f.n = n;
    f.dims = dims;
    for (int i = 0; i < n; ++i) {
        int c = static_cast<int>(rng.uniform_int(k));
        f.labels.push_back(c);
        for (int d = 0; d < dims; ++d) f.coords.push_back(c * 3.0 + rng.uniform(-2.0, 2.0));
    }
    // Guarantee at least two distinct labels.
    f.labels[0] = 0;
    f.labels[1] = 1;
    return f;
}

}  // namespace

TEST_CASE("hand values on the {0,1}/{10,11} fixture") {
    auto f = hand_fixture();
    // s(0): a = 1, b = (10 + 11)/2 = 10.5 -> (10.5 - 1)/10.5 = 0.90476.
    // The inner points have b = (9 + 10)/2 = 9.5 -> s = 8.5/9.5, so the mean
    // over the four points is (9.5/10.5 + 8.5/9.5)/2.
    const double expected_mean = (9.5 / 10.5 + 8.5 / 9.5) / 2.0;
    CHECK(silhouette(f.matrix(), f.labels) == doctest::Approx(expected_mean).epsilon(1e-9));
    CHECK(silhouette(f.matrix(), f.labels) ==
          doctest::Approx(oracles::silhouette_brute(f.matrix().values, f.n, f.labels))
              .epsilon(1e-12));
    // Grand mean 5.5, centroids 0.5 and 10.5: between-SS = 2*25 + 2*25 = 100,
    // within-SS = 1.0, so CH = (100/1)/(1.0/2) = 200.
    CHECK(calinski_harabasz(f.coords, f.n, f.dims, f.labels) == doctest::Approx(200.0).epsilon(1e-9));
    // Scatter 0.5 each, centroid gap 10 -> DB = 0.1.
    CHECK(davies_bouldin(f.coords, f.n, f.dims, f.labels) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("coincident clusters degenerate sensibly") {
    Fixture f;
    f.coords = {0.0, 1.0, 0.0, 1.0};
    f.n = 4;
    f.labels = {0, 0, 1, 1};
    CHECK(silhouette(f.matrix(), f.labels) <= 0.0);
    CHECK(std::isinf(davies_bouldin(f.coords, f.n, f.dims, f.labels)));

    Fixture same;
    same.coords = {2.0, 2.0, 2.0, 2.0};
    same.n = 4;
    same.labels = {0, 0, 1, 1};
    CHECK(std::isinf(calinski_harabasz(same.coords, same.n, same.dims, same.labels)));
}

TEST_CASE("indices reject degenerate label sets") {
    auto f = hand_fixture();
    std::vector<int> one_cluster = {0, 0, 0, 0};
    CHECK_THROWS(silhouette(f.matrix(), one_cluster));
    CHECK_THROWS(calinski_harabasz(f.coords, f.n, f.dims, one_cluster));
    CHECK_THROWS(davies_bouldin(f.coords, f.n, f.dims, one_cluster));
    std::vector<int> all_distinct = {0, 1, 2, 3};
    CHECK_THROWS(calinski_harabasz(f.coords, f.n, f.dims, all_distinct));  // n == k
}

TEST_CASE("indices match brute-force oracles on random fixtures") {
    Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        auto f = random_fixture(rng, 20 + static_cast<int>(rng.uniform_int(20)),
                                2 + static_cast<int>(rng.uniform_int(3)));
        auto m = f.matrix();
        CHECK(silhouette(m, f.labels) ==
              doctest::Approx(oracles::silhouette_brute(m.values, f.n, f.labels)).epsilon(1e-9));
        CHECK(calinski_harabasz(f.coords, f.n, f.dims, f.labels) ==
              doctest::Approx(oracles::calinski_harabasz_brute(f.coords, f.n, f.dims, f.labels))
                  .epsilon(1e-9));
        CHECK(davies_bouldin(f.coords, f.n, f.dims, f.labels) ==
              doctest::Approx(oracles::davies_bouldin_brute(f.coords, f.n, f.dims, f.labels))
                  .epsilon(1e-9));
        // Silhouette stays in [-1, 1].
        double s = silhouette(m, f.labels);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("indices are invariant under isometry") {
    Rng rng(73);
    auto f = random_fixture(rng, 30, 3, 2);
    // Rotate by a fixed angle and translate.
    const double c = std::cos(0.7), s = std::sin(0.7);
    Fixture g = f;
    for (int i = 0; i < f.n; ++i) {
        double x = f.coords[2 * i], y = f.coords[2 * i + 1];
        g.coords[2 * i] = c * x - s * y + 42.0;
        g.coords[2 * i + 1] = s * x + c * y - 17.0;
    }
    CHECK(silhouette(g.matrix(), g.labels) ==
          doctest::Approx(silhouette(f.matrix(), f.labels)).epsilon(1e-9));
    CHECK(calinski_harabasz(g.coords, g.n, g.dims, g.labels) ==
          doctest::Approx(calinski_harabasz(f.coords, f.n, f.dims, f.labels)).epsilon(1e-9));
    CHECK(davies_bouldin(g.coords, g.n, g.dims, g.labels) ==
          doctest::Approx(davies_bouldin(f.coords, f.n, f.dims, f.labels)).epsilon(1e-9));
}

TEST_CASE("adjusted rand index basics") {
    std::vector<int> a = {0, 0, 1, 1};
    CHECK(adjusted_rand_index(a, a) == 1.0);
    std::vector<int> swapped = {1, 1, 0, 0};
    CHECK(adjusted_rand_index(a, swapped) == 1.0);
    std::vector<int> cross = {0, 1, 0, 1};
    CHECK(adjusted_rand_index(a, cross) ==
          doctest::Approx(oracles::ari_pair_counting(a, cross)).epsilon(1e-12));
    std::vector<int> three = {0, 0, 1};
    CHECK_THROWS(adjusted_rand_index(a, three));
}

TEST_CASE("ARI matches the pair-counting oracle and permutation invariance") {
    Rng rng(79);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 15 + static_cast<int>(rng.uniform_int(15));
        std::vector<int> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = static_cast<int>(rng.uniform_int(4)) - 1;  // includes -1 noise labels
            b[i] = static_cast<int>(rng.uniform_int(4)) - 1;
        }
        CHECK(adjusted_rand_index(a, b) ==
              doctest::Approx(oracles::ari_pair_counting(a, b)).epsilon(1e-12));
        // Permuting labels of one side changes nothing.
        std::vector<int> permuted(n);
        for (int i = 0; i < n; ++i) permuted[i] = b[i] >= 0 ? (b[i] + 1) % 3 : -1;
        CHECK(adjusted_rand_index(a, b) == doctest::Approx(adjusted_rand_index(a, permuted)).epsilon(1e-12));
    }
}

TEST_CASE("match_labels on identical and permuted partitions") {
    std::vector<int> ref = {0, 0, 1, 1, 2, 2};
    auto m1 = match_labels(ref, ref);
    CHECK(m1.consistency_fraction == 1.0);
    for (const auto& [from, to] : m1.mapping) CHECK(from == to);

    std::vector<int> swapped = {2, 2, 0, 0, 1, 1};
    auto m2 = match_labels(ref, swapped);
    CHECK(m2.consistency_fraction == 1.0);
    CHECK(m2.mapping.at(2) == 0);
    CHECK(m2.mapping.at(0) == 1);
    CHECK(m2.mapping.at(1) == 2);
}

TEST_CASE("match_labels hand fixture: one reassigned point out of ten") {
    std::vector<int> ref = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    std::vector<int> other = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};  // point 4 moved
    auto m = match_labels(ref, other);
    CHECK(m.consistency_fraction == doctest::Approx(0.9));
    CHECK(m.mapping.at(0) == 0);
    CHECK(m.mapping.at(1) == 1);
}

TEST_CASE("match_labels equals brute-force permutation search") {
    Rng rng(83);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 20;
        std::vector<int> ref(n), other(n);
        for (int i = 0; i < n; ++i) {
            ref[i] = static_cast<int>(rng.uniform_int(4)) - 1;
            other[i] = static_cast<int>(rng.uniform_int(4)) - 1;
        }
        auto m = match_labels(ref, other);
        // Count matches from the mapping over non-noise pairs plus
        // noise-noise agreements, and compare the achieved overlap against
        // exhaustive search.
        double overlap = 0.0;
        for (int i = 0; i < n; ++i) {
            if (other[i] >= 0 && m.mapping.count(other[i]) && m.mapping.at(other[i]) == ref[i])
                overlap += 1.0;
        }
        CHECK(overlap == doctest::Approx(oracles::best_overlap_bruteforce(ref, other)));
    }
}

TEST_CASE("consistency equals 1 when ARI is 1 without noise") {
    Rng rng(89);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 24;
        std::vector<int> ref(n), other(n);
        for (int i = 0; i < n; ++i) ref[i] = static_cast<int>(rng.uniform_int(3));
        // A pure relabeling of ref.
        int perm[3] = {2, 0, 1};
        for (int i = 0; i < n; ++i) other[i] = perm[ref[i]];
        CHECK(adjusted_rand_index(ref, other) == 1.0);
        CHECK(match_labels(ref, other).consistency_fraction == 1.0);
    }
}

TEST_CASE("sweep over a planted 3-blob embedding") {
    Rng rng(97);
    std::vector<double> coords;
    const int per = 30;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per; ++i) {
            coords.push_back(c * 30.0 + rng.uniform(-1, 1));
            coords.push_back(c * 10.0 + rng.uniform(-1, 1));
        }
    const int n = 3 * per;

    SUBCASE("single-value grid selects that value") {
        auto sweep = sweep_parameter(coords, n, 2, {10});
        REQUIRE(sweep.rows.size() == 1);
        CHECK(sweep.selected == 10);
        CHECK(sweep.rows[0].n_clusters == 3);
    }
    SUBCASE("grid with degenerate values records sentinels and still selects") {
        auto sweep = sweep_parameter(coords, n, 2, {5, 10, 89});
        REQUIRE(sweep.rows.size() == 3);
        CHECK(sweep.selected.has_value());
        // min_samples = 89 of 90 points cannot form two clusters.
        CHECK(sweep.rows[2].n_clusters < 2);
        CHECK(sweep.rows[2].silhouette == -2.0);
    }
    SUBCASE("all-degenerate grid reports no selection") {
        auto sweep = sweep_parameter(coords, n, 2, {89});
        CHECK(!sweep.selected.has_value());
    }
    CHECK_THROWS(sweep_parameter(coords, n, 2, {}));
}
