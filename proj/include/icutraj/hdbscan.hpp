#pragma once

#include <string>
#include <vector>

#include "icutraj/dtw.hpp"

namespace icutraj::hdbscan {

/// Distance from each point to its min_samples-th nearest neighbor
/// (self excluded).
std::vector<double> core_distances(const dtw::DistanceMatrix& d, int min_samples);

/// d_mreach(i, j) = max(core_i, core_j, d(i, j)); zero diagonal.
dtw::DistanceMatrix mutual_reachability(const dtw::DistanceMatrix& d,
                                        const std::vector<double>& core);

struct MstEdge {
    int u, v;
    double weight;
};

/// Prim's on the dense matrix, O(n^2); ties broken toward the lower vertex
/// index. n-1 edges for n >= 1 points; throws on n == 0.
std::vector<MstEdge> build_mst(const dtw::DistanceMatrix& mreach);

/// Condensed cluster tree. Rows follow the usual layout: `child` < n names a
/// point falling out of cluster `parent` at density `lambda`; `child` >= n
/// names a child cluster born there with `child_size` members.
struct CondensedTree {
    struct Row {
        int parent;
        int child;
        double lambda;  // 1 / linkage distance at the event
        int child_size;
    };
    int n_points = 0;
    int root = 0;  // cluster id of the root (== n_points)
    int n_clusters = 0;
    std::vector<Row> rows;

    /// Stability per cluster id: sum over members of (lambda_out - lambda_birth).
    std::vector<double> stabilities() const;
};

/// Single-linkage dendrogram from the MST (edges ascending, ties toward the
/// lower vertex pair), condensed at min_cluster_size.
CondensedTree condense_tree(const std::vector<MstEdge>& mst, int n_points, int min_cluster_size);

struct ClusterLabeling {
    std::vector<int> labels;  // -1 = noise
    int n_clusters = 0;
    std::vector<int> cluster_sizes;
};

/// Bottom-up excess-of-mass selection (the root is never selected); labels
/// are ordered by cluster birth lambda.
ClusterLabeling extract_clusters_eom(const CondensedTree& tree);

/// Euclidean distance matrix, core distances, mutual reachability, MST,
/// condensed tree, EOM extraction — the full clustering of an embedding.
ClusterLabeling cluster_points(const std::vector<double>& coords, int n, int dims,
                               int min_samples, int min_cluster_size);

ClusterLabeling cluster_matrix(const dtw::DistanceMatrix& d, int min_samples,
                               int min_cluster_size);

dtw::DistanceMatrix euclidean_matrix(const std::vector<double>& coords, int n, int dims);

void write_labels(const std::string& path, const std::vector<std::string>& patient_index,
                  const std::vector<int>& labels);
std::pair<std::vector<std::string>, std::vector<int>> read_labels(const std::string& path);
void write_tree(const std::string& path, const CondensedTree& tree);

}  // namespace icutraj::hdbscan
