#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icutraj::dtw {

/// Symmetric pairwise distance matrix, tagged with the vital it was computed
/// from ("total" for the summed matrix). Immutable once built.
struct DistanceMatrix {
    int n = 0;
    std::string feature_tag;
    std::vector<std::string> patient_index;
    std::vector<double> values;  // n*n row-major

    double at(int i, int j) const { return values[static_cast<size_t>(i) * n + j]; }
    void set(int i, int j, double v) { values[static_cast<size_t>(i) * n + j] = v; }

    static DistanceMatrix zeros(int n, std::string tag, std::vector<std::string> index);
};

/// DTW distance with absolute-difference local cost, unconstrained by default.
/// `band` is a Sakoe-Chiba half-width: cells with |i - j| > band are excluded.
/// Throws std::invalid_argument on empty input or a band narrower than the
/// length difference (no alignment path exists).
double distance(std::span<const double> a, std::span<const double> b,
                std::optional<int> band = std::nullopt);

/// Pairwise DTW over all patients for one feature. Pairs are sharded over
/// `n_threads` workers (0 = hardware concurrency); every pair is written to
/// its own slot so the result is identical for any thread count.
DistanceMatrix feature_distance_matrix(const std::vector<std::vector<double>>& series,
                                       const std::vector<std::string>& patient_index,
                                       const std::string& feature_tag,
                                       std::optional<int> band = std::nullopt,
                                       int n_threads = 1);

/// Element-wise sum of per-feature matrices; tag becomes "total".
/// Throws on dimension or patient-index mismatch.
DistanceMatrix total_distance_matrix(const std::vector<DistanceMatrix>& per_feature);

/// Binary matrix file: magic "TCDM", version u32, n u32, length-prefixed
/// feature tag, then n*n little-endian float64 row-major. The patient index
/// goes to a sidecar text file, one id per line.
void write_matrix(const std::string& path, const DistanceMatrix& m);
DistanceMatrix read_matrix(const std::string& path);
void write_patient_index(const std::string& path, const std::vector<std::string>& index);
std::vector<std::string> read_patient_index(const std::string& path);

}  // namespace icutraj::dtw
