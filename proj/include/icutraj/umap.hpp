#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icutraj/dtw.hpp"

namespace icutraj::umap {

struct UmapParams {
    int k = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int dims = 2;
    int n_epochs = 500;
    double negative_sample_rate = 5.0;
    double initial_learning_rate = 1.0;
    uint64_t seed = 42;
};

struct SmoothKnnResult {
    double rho = 0.0;
    double sigma = 1.0;
    bool degenerate = false;  // membership sum cannot reach log2(k)
};

/// Solves for the smooth-kNN bandwidth: rho is the smallest positive
/// neighbor distance, sigma is bisected (64 iterations on [1e-12, 1e4]) so
/// that sum_i exp(-max(0, d_i - rho)/sigma) = log2(k).
SmoothKnnResult smooth_knn(std::span<const double> sorted_neighbor_distances);

struct FuzzyGraph {
    int n = 0;
    struct Edge {
        int i, j;
        double weight;  // in (0, 1]
    };
    std::vector<Edge> edges;  // symmetric, stored once per unordered pair (i < j)
    std::vector<double> rho, sigma;
    std::vector<uint8_t> degenerate;
};

/// Exact k-NN from the distance matrix (ties to the lower index), directed
/// weights exp(-max(0, d - rho_i)/sigma_i), symmetrized by the fuzzy union
/// w_ij + w_ji - w_ij * w_ji.
FuzzyGraph fuzzy_simplicial_set(const dtw::DistanceMatrix& distances, int k);

/// Least-squares fit of 1/(1 + a x^(2b)) to the min_dist/spread membership
/// target curve; damped Gauss-Newton from (1, 1). Throws on non-convergence.
std::pair<double, double> fit_curve_params(double min_dist, double spread);

struct Embedding {
    int n = 0;
    int dims = 2;
    std::vector<double> coords;  // n*dims row-major
    std::vector<std::string> patient_index;
    UmapParams params;

    double at(int i, int d) const { return coords[static_cast<size_t>(i) * dims + d]; }
};

/// Stochastic layout: spectral init (graph Laplacian) for n <= 4000 else
/// seeded random init, epochs-per-sample edge schedule, negative sampling,
/// gradient components clipped to [-4, 4], linear learning-rate decay.
/// Sequential by contract; identical coordinates for identical seed.
Embedding optimize_embedding(const FuzzyGraph& graph, const UmapParams& params,
                             const std::vector<std::string>& patient_index);

/// fuzzy_simplicial_set + fit_curve_params + optimize_embedding.
Embedding embed(const dtw::DistanceMatrix& distances, const UmapParams& params);

/// CSV with one `# key=value ...` parameter header line, then
/// patient_id,x,y[,...] rows.
void write_embedding(const std::string& path, const Embedding& e);
Embedding read_embedding(const std::string& path);

}  // namespace icutraj::umap
