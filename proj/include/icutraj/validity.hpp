#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icutraj/dtw.hpp"

namespace icutraj::validity {

/// Mean over points of (b - a) / max(a, b). Noise must be excluded by the
/// caller; singleton-cluster points contribute 0. Throws with < 2 clusters.
double silhouette(const dtw::DistanceMatrix& distances, std::span<const int> labels);

/// ((between-cluster SS)/(k-1)) / ((within-cluster SS)/(n-k)); +infinity when
/// the within-cluster SS is zero. Throws with < 2 clusters or n == k.
double calinski_harabasz(const std::vector<double>& coords, int n, int dims,
                         std::span<const int> labels);

/// Mean over clusters of max_j (s_i + s_j) / d(c_i, c_j); +infinity when
/// centroids coincide. Throws with < 2 clusters.
double davies_bouldin(const std::vector<double>& coords, int n, int dims,
                      std::span<const int> labels);

/// Pair-counting adjusted Rand index; every distinct label (including -1) is
/// its own category. Throws on length mismatch.
double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b);

struct LabelMatch {
    std::map<int, int> mapping;  // other label -> reference label (noise never mapped)
    double consistency_fraction = 0.0;
};

/// Maximum-overlap one-to-one assignment between the two labelings
/// (Hungarian algorithm on the negated contingency matrix). The fraction
/// counts patients whose mapped label equals the reference one; noise maps
/// to noise.
LabelMatch match_labels(std::span<const int> reference, std::span<const int> other);

struct ValiditySweepRow {
    int min_samples_value = 0;
    int n_clusters = 0;
    double silhouette = 0.0;
    double calinski_harabasz = 0.0;
    double davies_bouldin = 0.0;
    int n_noise = 0;
};

struct SweepResult {
    std::vector<ValiditySweepRow> rows;
    std::optional<int> selected;  // empty when every value yields < 2 clusters
};

/// Runs HDBSCAN* per grid value (min_samples = min_cluster_size = value) on
/// the embedding coordinates, scoring non-noise points. Values yielding < 2
/// clusters record sentinel scores (silhouette -2, CH -1, DB +inf) and are
/// never selected. Selection maximizes silhouette, ties toward lower DB.
SweepResult sweep_parameter(const std::vector<double>& coords, int n, int dims,
                            const std::vector<int>& values);

void write_sweep(const std::string& path, const SweepResult& sweep);

/// Minimum-cost assignment for a square cost matrix; returns per-row column
/// choices. O(n^3).
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

}  // namespace icutraj::validity
