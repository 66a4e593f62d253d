#include "icutraj/validity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "icutraj/csv.hpp"
#include "icutraj/hdbscan.hpp"

namespace icutraj::validity {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<int>> members_by_cluster(std::span<const int> labels) {
    std::map<int, std::vector<int>> by_label;
    for (size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(static_cast<int>(i));
    std::vector<std::vector<int>> out;
    out.reserve(by_label.size());
    for (auto& [l, members] : by_label) out.push_back(std::move(members));
    return out;
}
}  // namespace

double silhouette(const dtw::DistanceMatrix& distances, std::span<const int> labels) {
    if (static_cast<int>(labels.size()) != distances.n)
        throw std::invalid_argument("silhouette: label count mismatch");
    auto clusters = members_by_cluster(labels);
    if (clusters.size() < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");

    double total = 0.0;
    for (size_t ci = 0; ci < clusters.size(); ++ci) {
        const auto& own = clusters[ci];
        for (int i : own) {
            if (own.size() == 1) continue;  // singleton contributes 0
            double a = 0.0;
            for (int j : own)
                if (j != i) a += distances.at(i, j);
            a /= static_cast<double>(own.size() - 1);
            double b = kInf;
            for (size_t cj = 0; cj < clusters.size(); ++cj) {
                if (cj == ci) continue;
                double mean = 0.0;
                for (int j : clusters[cj]) mean += distances.at(i, j);
                mean /= static_cast<double>(clusters[cj].size());
                b = std::min(b, mean);
            }
            double denom = std::max(a, b);
            if (denom > 0.0) total += (b - a) / denom;
        }
    }
    return total / static_cast<double>(labels.size());
}

namespace {
std::vector<std::vector<double>> centroids(const std::vector<double>& coords, int dims,
                                           const std::vector<std::vector<int>>& clusters) {
    std::vector<std::vector<double>> cents(clusters.size(), std::vector<double>(dims, 0.0));
    for (size_t c = 0; c < clusters.size(); ++c) {
        for (int i : clusters[c])
            for (int d = 0; d < dims; ++d)
                cents[c][d] += coords[static_cast<size_t>(i) * dims + d];
        for (int d = 0; d < dims; ++d) cents[c][d] /= static_cast<double>(clusters[c].size());
    }
    return cents;
}
}  // namespace

double calinski_harabasz(const std::vector<double>& coords, int n, int dims,
                         std::span<const int> labels) {
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("calinski_harabasz: label count mismatch");
    auto clusters = members_by_cluster(labels);
    const int k = static_cast<int>(clusters.size());
    if (k < 2) throw std::invalid_argument("calinski_harabasz: need at least 2 clusters");
    if (n == k) throw std::invalid_argument("calinski_harabasz: n == k");

    std::vector<double> grand(dims, 0.0);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < dims; ++d) grand[d] += coords[static_cast<size_t>(i) * dims + d];
    for (int d = 0; d < dims; ++d) grand[d] /= n;

    auto cents = centroids(coords, dims, clusters);
    double between = 0.0, within = 0.0;
    for (size_t c = 0; c < clusters.size(); ++c) {
        double dist2 = 0.0;
        for (int d = 0; d < dims; ++d) {
            double diff = cents[c][d] - grand[d];
            dist2 += diff * diff;
        }
        between += static_cast<double>(clusters[c].size()) * dist2;
        for (int i : clusters[c]) {
            for (int d = 0; d < dims; ++d) {
                double diff = coords[static_cast<size_t>(i) * dims + d] - cents[c][d];
                within += diff * diff;
            }
        }
    }
    if (within == 0.0) return kInf;
    return (between / (k - 1)) / (within / (n - k));
}

double davies_bouldin(const std::vector<double>& coords, int n, int dims,
                      std::span<const int> labels) {
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("davies_bouldin: label count mismatch");
    auto clusters = members_by_cluster(labels);
    const size_t k = clusters.size();
    if (k < 2) throw std::invalid_argument("davies_bouldin: need at least 2 clusters");

    auto cents = centroids(coords, dims, clusters);
    std::vector<double> scatter(k, 0.0);
    for (size_t c = 0; c < k; ++c) {
        for (int i : clusters[c]) {
            double d2 = 0.0;
            for (int d = 0; d < dims; ++d) {
                double diff = coords[static_cast<size_t>(i) * dims + d] - cents[c][d];
                d2 += diff * diff;
            }
            scatter[c] += std::sqrt(d2);
        }
        scatter[c] /= static_cast<double>(clusters[c].size());
    }

    double total = 0.0;
    for (size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            double gap2 = 0.0;
            for (int d = 0; d < dims; ++d) {
                double diff = cents[i][d] - cents[j][d];
                gap2 += diff * diff;
            }
            double gap = std::sqrt(gap2);
            double r = gap > 0.0 ? (scatter[i] + scatter[j]) / gap : kInf;
            worst = std::max(worst, r);
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b) {
    if (labels_a.size() != labels_b.size())
        throw std::invalid_argument("adjusted_rand_index: length mismatch");
    const double n = static_cast<double>(labels_a.size());
    if (labels_a.empty()) return 1.0;

    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> row_sums, col_sums;
    for (size_t i = 0; i < labels_a.size(); ++i) {
        cells[{labels_a[i], labels_b[i]}] += 1.0;
        row_sums[labels_a[i]] += 1.0;
        col_sums[labels_b[i]] += 1.0;
    }
    auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
    double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, v] : cells) sum_cells += choose2(v);
    for (const auto& [key, v] : row_sums) sum_rows += choose2(v);
    for (const auto& [key, v] : col_sums) sum_cols += choose2(v);
    const double total_pairs = choose2(n);
    const double expected = sum_rows * sum_cols / total_pairs;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;  // both partitions degenerate
    return (sum_cells - expected) / (max_index - expected);
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    // Potentials formulation with augmenting paths (1-indexed internally).
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] >= 1) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

LabelMatch match_labels(std::span<const int> reference, std::span<const int> other) {
    if (reference.size() != other.size())
        throw std::invalid_argument("match_labels: label count mismatch");
    LabelMatch result;
    if (reference.empty()) {
        result.consistency_fraction = 1.0;
        return result;
    }

    std::set<int> ref_set, other_set;
    for (int l : reference)
        if (l >= 0) ref_set.insert(l);
    for (int l : other)
        if (l >= 0) other_set.insert(l);
    std::vector<int> ref_labels(ref_set.begin(), ref_set.end());
    std::vector<int> other_labels(other_set.begin(), other_set.end());

    if (!other_labels.empty() && !ref_labels.empty()) {
        std::unordered_map<int, int> ref_pos, other_pos;
        for (size_t i = 0; i < ref_labels.size(); ++i) ref_pos[ref_labels[i]] = static_cast<int>(i);
        for (size_t i = 0; i < other_labels.size(); ++i)
            other_pos[other_labels[i]] = static_cast<int>(i);

        const int dim = static_cast<int>(std::max(ref_labels.size(), other_labels.size()));
        std::vector<std::vector<double>> contingency(dim, std::vector<double>(dim, 0.0));
        for (size_t i = 0; i < reference.size(); ++i) {
            if (reference[i] >= 0 && other[i] >= 0)
                contingency[other_pos[other[i]]][ref_pos[reference[i]]] += 1.0;
        }
        std::vector<std::vector<double>> cost(dim, std::vector<double>(dim));
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) cost[i][j] = -contingency[i][j];
        auto assignment = hungarian(cost);
        for (size_t i = 0; i < other_labels.size(); ++i) {
            int col = assignment[i];
            if (col >= 0 && col < static_cast<int>(ref_labels.size()))
                result.mapping[other_labels[i]] = ref_labels[col];
        }
    }

    size_t matches = 0;
    for (size_t i = 0; i < reference.size(); ++i) {
        int mapped = -1;
        if (other[i] >= 0) {
            auto it = result.mapping.find(other[i]);
            mapped = it != result.mapping.end() ? it->second : -2;  // unmatched cluster
        }
        if (mapped == reference[i]) ++matches;
    }
    result.consistency_fraction = static_cast<double>(matches) / static_cast<double>(reference.size());
    return result;
}

SweepResult sweep_parameter(const std::vector<double>& coords, int n, int dims,
                            const std::vector<int>& values) {
    if (values.empty()) throw std::invalid_argument("sweep_parameter: empty value grid");
    SweepResult result;
    auto full = hdbscan::euclidean_matrix(coords, n, dims);

    for (int value : values) {
        ValiditySweepRow row;
        row.min_samples_value = value;
        hdbscan::ClusterLabeling labeling;
        bool valid_value = value >= 1 && value < n && value >= 2;
        if (valid_value) labeling = hdbscan::cluster_matrix(full, value, value);

        row.n_clusters = labeling.n_clusters;
        row.n_noise = 0;
        for (int l : labeling.labels)
            if (l < 0) ++row.n_noise;

        if (labeling.n_clusters >= 2) {
            // Score the non-noise subset.
            std::vector<int> keep;
            std::vector<int> sub_labels;
            for (int i = 0; i < n; ++i) {
                if (labeling.labels[i] >= 0) {
                    keep.push_back(i);
                    sub_labels.push_back(labeling.labels[i]);
                }
            }
            std::vector<double> sub_coords;
            sub_coords.reserve(keep.size() * dims);
            for (int i : keep)
                for (int d = 0; d < dims; ++d)
                    sub_coords.push_back(coords[static_cast<size_t>(i) * dims + d]);
            auto sub_matrix =
                hdbscan::euclidean_matrix(sub_coords, static_cast<int>(keep.size()), dims);
            row.silhouette = silhouette(sub_matrix, sub_labels);
            row.calinski_harabasz =
                calinski_harabasz(sub_coords, static_cast<int>(keep.size()), dims, sub_labels);
            row.davies_bouldin =
                davies_bouldin(sub_coords, static_cast<int>(keep.size()), dims, sub_labels);
        } else {
            row.silhouette = -2.0;
            row.calinski_harabasz = -1.0;
            row.davies_bouldin = kInf;
        }
        result.rows.push_back(row);
    }

    for (size_t i = 0; i < result.rows.size(); ++i) {
        const auto& row = result.rows[i];
        if (row.n_clusters < 2) continue;
        if (!result.selected) {
            result.selected = row.min_samples_value;
            continue;
        }
        const auto& best = *std::find_if(result.rows.begin(), result.rows.end(), [&](const auto& r) {
            return r.min_samples_value == *result.selected;
        });
        if (row.silhouette > best.silhouette ||
            (row.silhouette == best.silhouette && row.davies_bouldin < best.davies_bouldin)) {
            result.selected = row.min_samples_value;
        }
    }
    return result;
}

void write_sweep(const std::string& path, const SweepResult& sweep) {
    std::string out = "min_samples_value,n_clusters,silhouette,calinski_harabasz,davies_bouldin,n_noise\n";
    for (const auto& r : sweep.rows) {
        out += std::to_string(r.min_samples_value) + "," + std::to_string(r.n_clusters) + "," +
               fmt_double(r.silhouette) + "," + fmt_double(r.calinski_harabasz) + "," +
               fmt_double(r.davies_bouldin) + "," + std::to_string(r.n_noise) + "\n";
    }
    if (sweep.selected) out += "# selected=" + std::to_string(*sweep.selected) + "\n";
    write_file(path, out);
}

}  // namespace icutraj::validity
