// Test-only reference implementations, kept independent of the library code
// paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <vector>

namespace oracles {

/// Naive DTW: full (n+1) x (m+1) cumulative matrix, absolute-difference
/// local cost.
inline double dtw_full_matrix(std::span<const double> a, std::span<const double> b) {
    const size_t n = a.size(), m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> d(n + 1, std::vector<double>(m + 1, inf));
    d[0][0] = 0.0;
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            double cost = std::fabs(a[i - 1] - b[j - 1]);
            d[i][j] = cost + std::min(d[i - 1][j], std::min(d[i][j - 1], d[i - 1][j - 1]));
        }
    }
    return d[n][m];
}

struct Edge {
    int u, v;
    double w;
};

/// Kruskal MST over a dense symmetric matrix; returns edge weights ascending.
inline std::vector<double> kruskal_mst_weights(const std::vector<double>& dist, int n) {
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.push_back({i, j, dist[static_cast<size_t>(i) * n + j]});
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.w != b.w) return a.w < b.w;
        if (a.u != b.u) return a.u < b.u;
        return a.v < b.v;
    });
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    std::vector<double> weights;
    for (const auto& e : edges) {
        int a = find(e.u), b = find(e.v);
        if (a == b) continue;
        parent[a] = b;
        weights.push_back(e.w);
        if (static_cast<int>(weights.size()) == n - 1) break;
    }
    return weights;
}

/// Double-loop silhouette straight from the definition.
inline double silhouette_brute(const std::vector<double>& dist, int n, const std::vector<int>& labels) {
    std::map<int, std::vector<int>> clusters;
    for (int i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& own = clusters[labels[i]];
        if (own.size() == 1) continue;
        double a = 0.0;
        for (int j : own)
            if (j != i) a += dist[static_cast<size_t>(i) * n + j];
        a /= static_cast<double>(own.size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [l, members] : clusters) {
            if (l == labels[i]) continue;
            double mean = 0.0;
            for (int j : members) mean += dist[static_cast<size_t>(i) * n + j];
            b = std::min(b, mean / members.size());
        }
        total += (b - a) / std::max(a, b);
    }
    return total / n;
}

inline double calinski_harabasz_brute(const std::vector<double>& coords, int n, int dims,
                                      const std::vector<int>& labels) {
    std::map<int, std::vector<int>> clusters;
    for (int i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    const int k = static_cast<int>(clusters.size());
    std::vector<double> grand(dims, 0.0);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < dims; ++d) grand[d] += coords[static_cast<size_t>(i) * dims + d];
    for (auto& g : grand) g /= n;
    double between = 0.0, within = 0.0;
    for (const auto& [l, members] : clusters) {
        std::vector<double> c(dims, 0.0);
        for (int i : members)
            for (int d = 0; d < dims; ++d) c[d] += coords[static_cast<size_t>(i) * dims + d];
        for (auto& v : c) v /= members.size();
        double dist2 = 0.0;
        for (int d = 0; d < dims; ++d) dist2 += (c[d] - grand[d]) * (c[d] - grand[d]);
        between += members.size() * dist2;
        for (int i : members)
            for (int d = 0; d < dims; ++d) {
                double diff = coords[static_cast<size_t>(i) * dims + d] - c[d];
                within += diff * diff;
            }
    }
    if (within == 0.0) return std::numeric_limits<double>::infinity();
    return (between / (k - 1)) / (within / (n - k));
}

inline double davies_bouldin_brute(const std::vector<double>& coords, int n, int dims,
                                   const std::vector<int>& labels) {
    std::map<int, std::vector<int>> clusters;
    for (int i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    std::vector<std::vector<double>> cents;
    std::vector<double> scatter;
    for (const auto& [l, members] : clusters) {
        std::vector<double> c(dims, 0.0);
        for (int i : members)
            for (int d = 0; d < dims; ++d) c[d] += coords[static_cast<size_t>(i) * dims + d];
        for (auto& v : c) v /= members.size();
        double s = 0.0;
        for (int i : members) {
            double d2 = 0.0;
            for (int d = 0; d < dims; ++d) {
                double diff = coords[static_cast<size_t>(i) * dims + d] - c[d];
                d2 += diff * diff;
            }
            s += std::sqrt(d2);
        }
        cents.push_back(c);
        scatter.push_back(s / members.size());
    }
    const size_t k = cents.size();
    double total = 0.0;
    for (size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            double gap = 0.0;
            for (int d = 0; d < dims; ++d) gap += (cents[i][d] - cents[j][d]) * (cents[i][d] - cents[j][d]);
            gap = std::sqrt(gap);
            worst = std::max(worst, gap > 0 ? (scatter[i] + scatter[j]) / gap
                                            : std::numeric_limits<double>::infinity());
        }
        total += worst;
    }
    return total / k;
}

/// ARI by explicit enumeration of all point pairs.
inline double ari_pair_counting(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t n = a.size();
    double n11 = 0, n00 = 0, n10 = 0, n01 = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            bool same_a = a[i] == a[j];
            bool same_b = b[i] == b[j];
            if (same_a && same_b) ++n11;
            else if (!same_a && !same_b) ++n00;
            else if (same_a) ++n10;
            else ++n01;
        }
    }
    double total = n11 + n00 + n10 + n01;
    double expected = (n11 + n10) * (n11 + n01) / total;
    double maxi = 0.5 * ((n11 + n10) + (n11 + n01));
    if (maxi == expected) return 1.0;
    return (n11 - expected) / (maxi - expected);
}

/// AUROC by counting concordant pairs (ties worth one half).
inline double auroc_all_pairs(std::span<const double> scores, std::span<const int> labels) {
    long long concordant2 = 0;  // twice the concordance, so ties stay integral
    long long n_pos = 0, n_neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        ++n_pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) concordant2 += 2;
            else if (scores[i] == scores[j]) concordant2 += 1;
        }
    }
    for (int l : labels) n_neg += l ? 0 : 1;
    return static_cast<double>(concordant2) / static_cast<double>(2 * n_pos * n_neg);
}

/// Trustworthiness by brute-force ranks: penalizes embedded neighbors that
/// were far in the original space.
inline double trustworthiness(const std::vector<double>& orig_dist,
                              const std::vector<double>& emb_coords, int n, int dims, int k) {
    auto emb_dist = [&](int i, int j) {
        double s = 0.0;
        for (int d = 0; d < dims; ++d) {
            double diff = emb_coords[static_cast<size_t>(i) * dims + d] -
                          emb_coords[static_cast<size_t>(j) * dims + d];
            s += diff * diff;
        }
        return s;
    };
    double penalty = 0.0;
    std::vector<int> order(n - 1);
    for (int i = 0; i < n; ++i) {
        // Ranks in the original space (1 = nearest), ties to the lower index.
        int m = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) order[m++] = j;
        std::vector<int> orig_order = order;
        std::sort(orig_order.begin(), orig_order.end(), [&](int x, int y) {
            double dx = orig_dist[static_cast<size_t>(i) * n + x];
            double dy = orig_dist[static_cast<size_t>(i) * n + y];
            if (dx != dy) return dx < dy;
            return x < y;
        });
        std::vector<int> rank(n, 0);
        for (int r = 0; r < n - 1; ++r) rank[orig_order[r]] = r + 1;

        std::vector<int> emb_order = order;
        std::sort(emb_order.begin(), emb_order.end(), [&](int x, int y) {
            double dx = emb_dist(i, x), dy = emb_dist(i, y);
            if (dx != dy) return dx < dy;
            return x < y;
        });
        std::set<int> orig_knn(orig_order.begin(), orig_order.begin() + k);
        for (int t = 0; t < k; ++t) {
            int j = emb_order[t];
            if (!orig_knn.count(j)) penalty += rank[j] - k;
        }
    }
    const double norm = 2.0 / (static_cast<double>(n) * k * (2.0 * n - 3.0 * k - 1.0));
    return 1.0 - norm * penalty;
}

/// Best one-to-one label assignment by trying every permutation (small k
/// only); returns the maximum total overlap.
inline double best_overlap_bruteforce(const std::vector<int>& ref, const std::vector<int>& other) {
    std::set<int> ref_set(ref.begin(), ref.end()), other_set(other.begin(), other.end());
    ref_set.erase(-1);
    other_set.erase(-1);
    std::vector<int> ref_labels(ref_set.begin(), ref_set.end());
    std::vector<int> other_labels(other_set.begin(), other_set.end());
    // Pad so each other-label can map to "nothing".
    while (ref_labels.size() < other_labels.size()) ref_labels.push_back(-1000 - static_cast<int>(ref_labels.size()));
    std::sort(ref_labels.begin(), ref_labels.end());
    double best = 0.0;
    do {
        double overlap = 0.0;
        for (size_t i = 0; i < ref.size(); ++i) {
            for (size_t t = 0; t < other_labels.size(); ++t) {
                if (other[i] == other_labels[t] && ref[i] == ref_labels[t]) overlap += 1.0;
            }
        }
        best = std::max(best, overlap);
    } while (std::next_permutation(ref_labels.begin(), ref_labels.end()));
    return best;
}

}  // namespace oracles
