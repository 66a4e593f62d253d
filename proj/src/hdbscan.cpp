#include "icutraj/hdbscan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "icutraj/csv.hpp"

namespace icutraj::hdbscan {

std::vector<double> core_distances(const dtw::DistanceMatrix& d, int min_samples) {
    const int n = d.n;
    if (min_samples < 1 || min_samples >= n)
        throw std::invalid_argument("core_distances: min_samples out of range");
    std::vector<double> core(n);
    std::vector<double> dists(n - 1);
    for (int i = 0; i < n; ++i) {
        int m = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) dists[m++] = d.at(i, j);
        std::nth_element(dists.begin(), dists.begin() + (min_samples - 1), dists.end());
        core[i] = dists[min_samples - 1];
    }
    return core;
}

dtw::DistanceMatrix mutual_reachability(const dtw::DistanceMatrix& d,
                                        const std::vector<double>& core) {
    if (static_cast<int>(core.size()) != d.n)
        throw std::invalid_argument("mutual_reachability: shape mismatch");
    dtw::DistanceMatrix m = dtw::DistanceMatrix::zeros(d.n, "mreach", d.patient_index);
    for (int i = 0; i < d.n; ++i) {
        for (int j = i + 1; j < d.n; ++j) {
            double v = std::max({core[i], core[j], d.at(i, j)});
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    return m;
}

std::vector<MstEdge> build_mst(const dtw::DistanceMatrix& mreach) {
    const int n = mreach.n;
    if (n == 0) throw std::invalid_argument("build_mst: empty matrix");
    std::vector<MstEdge> edges;
    if (n == 1) return edges;
    edges.reserve(n - 1);

    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> best(n, kInf);
    std::vector<int> from(n, -1);
    std::vector<char> in_tree(n, 0);
    in_tree[0] = 1;
    for (int j = 1; j < n; ++j) {
        best[j] = mreach.at(0, j);
        from[j] = 0;
    }
    for (int step = 1; step < n; ++step) {
        int next = -1;
        for (int j = 0; j < n; ++j) {
            if (!in_tree[j] && (next == -1 || best[j] < best[next])) next = j;  // tie: lower index
        }
        in_tree[next] = 1;
        edges.push_back({from[next], next, best[next]});
        for (int j = 0; j < n; ++j) {
            if (!in_tree[j] && mreach.at(next, j) < best[j]) {
                best[j] = mreach.at(next, j);
                from[j] = next;
            }
        }
    }
    return edges;
}

namespace {
/// Dendrogram node of the single-linkage tree; points are 0..n-1, merges
/// n..2n-2.
struct LinkNode {
    int left = -1, right = -1;
    double distance = 0.0;
    int size = 1;
};

std::vector<LinkNode> single_linkage(const std::vector<MstEdge>& mst, int n_points) {
    std::vector<MstEdge> edges = mst;
    std::sort(edges.begin(), edges.end(), [](const MstEdge& a, const MstEdge& b) {
        if (a.weight != b.weight) return a.weight < b.weight;
        if (a.u != b.u) return a.u < b.u;
        return a.v < b.v;
    });

    std::vector<LinkNode> nodes(static_cast<size_t>(n_points) + edges.size());
    std::vector<int> root_of(nodes.size());
    for (size_t i = 0; i < root_of.size(); ++i) root_of[i] = static_cast<int>(i);
    auto find = [&](int x) {
        while (root_of[x] != x) {
            root_of[x] = root_of[root_of[x]];
            x = root_of[x];
        }
        return x;
    };

    int next = n_points;
    for (const auto& e : edges) {
        int a = find(e.u), b = find(e.v);
        LinkNode& nd = nodes[next];
        nd.left = a;
        nd.right = b;
        nd.distance = e.weight;
        nd.size = nodes[a].size + nodes[b].size;
        root_of[a] = next;
        root_of[b] = next;
        root_of[next] = next;
        ++next;
    }
    return nodes;
}

void collect_points(const std::vector<LinkNode>& nodes, int node, int n_points,
                    std::vector<int>& out) {
    if (node < n_points) {
        out.push_back(node);
        return;
    }
    collect_points(nodes, nodes[node].left, n_points, out);
    collect_points(nodes, nodes[node].right, n_points, out);
}
}  // namespace

CondensedTree condense_tree(const std::vector<MstEdge>& mst, int n_points, int min_cluster_size) {
    if (min_cluster_size < 2) throw std::invalid_argument("condense_tree: min_cluster_size must be >= 2");
    if (n_points < 1) throw std::invalid_argument("condense_tree: no points");

    CondensedTree tree;
    tree.n_points = n_points;
    tree.root = n_points;
    tree.n_clusters = 1;
    if (n_points == 1) return tree;

    const std::vector<LinkNode> nodes = single_linkage(mst, n_points);
    const int dendro_root = static_cast<int>(nodes.size()) - 1;

    std::vector<int> relabel(nodes.size(), -1);
    relabel[dendro_root] = n_points;
    int next_label = n_points + 1;
    std::vector<int> points;

    // Pre-order walk; children of shed subtrees are skipped wholesale.
    std::vector<int> stack = {dendro_root};
    while (!stack.empty()) {
        int node = stack.back();
        stack.pop_back();
        if (node < n_points) continue;
        const LinkNode& nd = nodes[node];
        const double lambda =
            nd.distance > 0.0 ? 1.0 / nd.distance : std::numeric_limits<double>::infinity();
        const int cluster = relabel[node];
        const int left_size = nd.left < n_points ? 1 : nodes[nd.left].size;
        const int right_size = nd.right < n_points ? 1 : nodes[nd.right].size;
        const bool keep_left = left_size >= min_cluster_size;
        const bool keep_right = right_size >= min_cluster_size;

        auto shed = [&](int side) {
            points.clear();
            collect_points(nodes, side, n_points, points);
            std::sort(points.begin(), points.end());
            for (int p : points) tree.rows.push_back({cluster, p, lambda, 1});
        };

        if (keep_left && keep_right) {
            relabel[nd.left] = next_label++;
            tree.rows.push_back({cluster, relabel[nd.left], lambda, left_size});
            relabel[nd.right] = next_label++;
            tree.rows.push_back({cluster, relabel[nd.right], lambda, right_size});
            tree.n_clusters += 2;
            stack.push_back(nd.right);
            stack.push_back(nd.left);
        } else if (!keep_left && !keep_right) {
            shed(nd.left);
            shed(nd.right);
        } else if (keep_left) {
            relabel[nd.left] = cluster;
            shed(nd.right);
            stack.push_back(nd.left);
        } else {
            relabel[nd.right] = cluster;
            shed(nd.left);
            stack.push_back(nd.right);
        }
    }
    return tree;
}

std::vector<double> CondensedTree::stabilities() const {
    std::vector<double> birth(static_cast<size_t>(n_points) + n_clusters, 0.0);
    for (const auto& row : rows) {
        if (row.child >= n_points) birth[row.child] = row.lambda;
    }
    std::vector<double> stability(birth.size(), 0.0);
    for (const auto& row : rows) {
        stability[row.parent] += (row.lambda - birth[row.parent]) * row.child_size;
    }
    // Only cluster ids are meaningful; point slots stay zero.
    return stability;
}

ClusterLabeling extract_clusters_eom(const CondensedTree& tree) {
    const int n = tree.n_points;
    const int total = n + tree.n_clusters;
    std::vector<double> stability = tree.stabilities();

    std::vector<std::vector<int>> cluster_children(total);
    std::vector<int> parent_of(total, -1);
    std::vector<double> birth(total, 0.0);
    for (const auto& row : tree.rows) {
        if (row.child >= n) {
            cluster_children[row.parent].push_back(row.child);
            parent_of[row.child] = row.parent;
            birth[row.child] = row.lambda;
        }
    }

    // Bottom-up: cluster ids increase root -> leaves, so a reverse scan is
    // reverse-topological. The root is never selected.
    std::vector<char> selected(total, 0);
    std::vector<double> subtree(total, 0.0);
    for (int c = total - 1; c > tree.root; --c) {
        double child_sum = 0.0;
        for (int ch : cluster_children[c]) child_sum += subtree[ch];
        if (stability[c] > child_sum) {
            selected[c] = 1;
            subtree[c] = stability[c];
            // Descendants lose.
            std::vector<int> stack(cluster_children[c]);
            while (!stack.empty()) {
                int x = stack.back();
                stack.pop_back();
                selected[x] = 0;
                for (int ch : cluster_children[x]) stack.push_back(ch);
            }
        } else {
            subtree[c] = child_sum;
        }
    }

    std::vector<int> chosen;
    for (int c = tree.root + 1; c < total; ++c)
        if (selected[c]) chosen.push_back(c);
    std::sort(chosen.begin(), chosen.end(), [&](int a, int b) {
        if (birth[a] != birth[b]) return birth[a] < birth[b];
        return a < b;
    });
    std::vector<int> label_of(total, -1);
    for (size_t i = 0; i < chosen.size(); ++i) label_of[chosen[i]] = static_cast<int>(i);

    // Propagate each cluster's selected ancestor downwards, then label the
    // point rows.
    std::vector<int> effective(total, -1);
    for (int c = tree.root; c < total; ++c) {
        if (selected[c])
            effective[c] = label_of[c];
        else if (parent_of[c] >= 0)
            effective[c] = effective[parent_of[c]];
    }

    ClusterLabeling out;
    out.labels.assign(n, -1);
    for (const auto& row : tree.rows) {
        if (row.child < n) out.labels[row.child] = effective[row.parent];
    }
    out.n_clusters = static_cast<int>(chosen.size());
    out.cluster_sizes.assign(out.n_clusters, 0);
    for (int l : out.labels)
        if (l >= 0) ++out.cluster_sizes[l];
    return out;
}

dtw::DistanceMatrix euclidean_matrix(const std::vector<double>& coords, int n, int dims) {
    dtw::DistanceMatrix d = dtw::DistanceMatrix::zeros(n, "euclidean", {});
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < dims; ++k) {
                double diff = coords[static_cast<size_t>(i) * dims + k] -
                              coords[static_cast<size_t>(j) * dims + k];
                s += diff * diff;
            }
            double v = std::sqrt(s);
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    return d;
}

ClusterLabeling cluster_matrix(const dtw::DistanceMatrix& d, int min_samples,
                               int min_cluster_size) {
    auto core = core_distances(d, min_samples);
    auto mreach = mutual_reachability(d, core);
    auto mst = build_mst(mreach);
    auto tree = condense_tree(mst, d.n, min_cluster_size);
    return extract_clusters_eom(tree);
}

ClusterLabeling cluster_points(const std::vector<double>& coords, int n, int dims,
                               int min_samples, int min_cluster_size) {
    return cluster_matrix(euclidean_matrix(coords, n, dims), min_samples, min_cluster_size);
}

void write_labels(const std::string& path, const std::vector<std::string>& patient_index,
                  const std::vector<int>& labels) {
    std::string out = "patient_id,cluster_label\n";
    for (size_t i = 0; i < labels.size(); ++i) {
        out += (i < patient_index.size() ? patient_index[i] : "p" + std::to_string(i)) + "," +
               std::to_string(labels[i]) + "\n";
    }
    write_file(path, out);
}

std::pair<std::vector<std::string>, std::vector<int>> read_labels(const std::string& path) {
    auto lines = read_lines(path);
    std::vector<std::string> ids;
    std::vector<int> labels;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = split_csv(lines[i]);
        if (f.size() != 2) throw std::runtime_error(path + ": bad labels row");
        long long v = 0;
        if (!parse_long(f[1], v)) throw std::runtime_error(path + ": bad label");
        ids.emplace_back(trim(f[0]));
        labels.push_back(static_cast<int>(v));
    }
    return {ids, labels};
}

void write_tree(const std::string& path, const CondensedTree& tree) {
    std::string out = "parent,child,lambda,child_size\n";
    for (const auto& row : tree.rows) {
        out += std::to_string(row.parent) + "," + std::to_string(row.child) + "," +
               fmt_double(row.lambda) + "," + std::to_string(row.child_size) + "\n";
    }
    write_file(path, out);
}

}  // namespace icutraj::hdbscan
