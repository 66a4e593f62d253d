#include "icutraj/umap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "icutraj/csv.hpp"
#include "icutraj/rng.hpp"

namespace icutraj::umap {

SmoothKnnResult smooth_knn(std::span<const double> sorted_neighbor_distances) {
    const size_t k = sorted_neighbor_distances.size();
    if (k < 2) throw std::invalid_argument("smooth_knn: need at least 2 neighbor distances");

    SmoothKnnResult r;
    r.rho = 0.0;
    for (double d : sorted_neighbor_distances) {
        if (d > 0.0) {
            r.rho = d;
            break;
        }
    }

    const double target = std::log2(static_cast<double>(k));
    auto membership_sum = [&](double sigma) {
        double s = 0.0;
        for (double d : sorted_neighbor_distances) s += std::exp(-std::max(0.0, d - r.rho) / sigma);
        return s;
    };

    double lo = 1e-12, hi = 1e4;
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 64; ++it) {
        mid = 0.5 * (lo + hi);
        if (membership_sum(mid) > target)
            hi = mid;
        else
            lo = mid;
    }
    r.sigma = mid;
    r.degenerate = std::fabs(membership_sum(mid) - target) > 1e-5;
    return r;
}

FuzzyGraph fuzzy_simplicial_set(const dtw::DistanceMatrix& distances, int k) {
    const int n = distances.n;
    if (k < 2 || k >= n) throw std::invalid_argument("fuzzy_simplicial_set: k out of range");

    FuzzyGraph g;
    g.n = n;
    g.rho.resize(n);
    g.sigma.resize(n);
    g.degenerate.resize(n, 0);

    // Directed weights kept in a flat map keyed by (i, j).
    std::vector<std::vector<std::pair<int, double>>> directed(n);  // i -> (j, w)
    std::vector<int> order(n - 1);
    std::vector<double> knn_d(k);
    for (int i = 0; i < n; ++i) {
        int m = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) order[m++] = j;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double da = distances.at(i, a), db = distances.at(i, b);
            if (da != db) return da < db;
            return a < b;  // ties to the lower index
        });
        for (int t = 0; t < k; ++t) knn_d[t] = distances.at(i, order[t]);
        SmoothKnnResult r = smooth_knn(knn_d);
        g.rho[i] = r.rho;
        g.sigma[i] = r.sigma;
        g.degenerate[i] = r.degenerate ? 1 : 0;
        directed[i].reserve(k);
        for (int t = 0; t < k; ++t) {
            double w = std::exp(-std::max(0.0, knn_d[t] - r.rho) / r.sigma);
            directed[i].emplace_back(order[t], w);
        }
    }

    // Fuzzy union of both directions; one edge per unordered pair.
    auto directed_weight = [&](int i, int j) {
        for (const auto& [jj, w] : directed[i])
            if (jj == j) return w;
        return 0.0;
    };
    for (int i = 0; i < n; ++i) {
        for (const auto& [j, wij] : directed[i]) {
            if (j < i && directed_weight(j, i) > 0.0) continue;  // already emitted from j's side
            int a = std::min(i, j), b = std::max(i, j);
            double wab = directed_weight(a, b);
            double wba = directed_weight(b, a);
            double u = wab + wba - wab * wba;
            if (u > 0.0) g.edges.push_back({a, b, u});
        }
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const FuzzyGraph::Edge& x, const FuzzyGraph::Edge& y) {
        if (x.i != y.i) return x.i < y.i;
        return x.j < y.j;
    });
    return g;
}

std::pair<double, double> fit_curve_params(double min_dist, double spread) {
    if (!(min_dist > 0.0) || !(min_dist < spread))
        throw std::invalid_argument("fit_curve_params: require 0 < min_dist < spread");

    constexpr int kSamples = 300;
    std::vector<double> xs(kSamples), ys(kSamples);
    for (int t = 0; t < kSamples; ++t) {
        double x = 3.0 * spread * static_cast<double>(t + 1) / kSamples;
        xs[t] = x;
        ys[t] = x <= min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
    }

    auto residual_norm = [&](double a, double b) {
        double s = 0.0;
        for (int t = 0; t < kSamples; ++t) {
            double f = 1.0 / (1.0 + a * std::pow(xs[t], 2.0 * b));
            double r = f - ys[t];
            s += r * r;
        }
        return s;
    };

    double a = 1.0, b = 1.0;
    double best = residual_norm(a, b);
    double lambda = 1e-3;
    int stale = 0;
    for (int it = 0; it < 200; ++it) {
        // Normal equations for the damped Gauss-Newton step.
        double jtj00 = 0, jtj01 = 0, jtj11 = 0, jtr0 = 0, jtr1 = 0;
        for (int t = 0; t < kSamples; ++t) {
            double xb = std::pow(xs[t], 2.0 * b);
            double f = 1.0 / (1.0 + a * xb);
            double r = f - ys[t];
            double da = -xb * f * f;
            double db = -2.0 * a * xb * std::log(xs[t]) * f * f;
            jtj00 += da * da;
            jtj01 += da * db;
            jtj11 += db * db;
            jtr0 += da * r;
            jtr1 += db * r;
        }
        double m00 = jtj00 + lambda, m11 = jtj11 + lambda;
        double det = m00 * m11 - jtj01 * jtj01;
        if (std::fabs(det) < 1e-300) break;
        double step_a = (-jtr0 * m11 + jtr1 * jtj01) / det;
        double step_b = (-jtr1 * m00 + jtr0 * jtj01) / det;
        double na = std::max(1e-6, a + step_a);
        double nb = std::max(1e-6, b + step_b);
        double cand = residual_norm(na, nb);
        if (cand < best) {
            a = na;
            b = nb;
            best = cand;
            lambda = std::max(1e-9, lambda / 3.0);
            stale = 0;
            if (step_a * step_a + step_b * step_b < 1e-24) break;
        } else {
            lambda *= 3.0;
            if (++stale >= 20)
                throw std::runtime_error("fit_curve_params: residual not decreasing");
        }
    }
    return {a, b};
}

namespace {

/// Spectral layout from the symmetric normalized adjacency: power iteration
/// with deflation against the known top eigenvector D^(1/2)*1. Precision
/// needs are mild; this only seeds the optimizer.
std::vector<double> spectral_init(const FuzzyGraph& graph, int dims, uint64_t seed) {
    const int n = graph.n;
    std::vector<double> degree(n, 0.0);
    for (const auto& e : graph.edges) {
        degree[e.i] += e.weight;
        degree[e.j] += e.weight;
    }
    std::vector<double> inv_sqrt_deg(n);
    for (int i = 0; i < n; ++i) inv_sqrt_deg[i] = degree[i] > 0.0 ? 1.0 / std::sqrt(degree[i]) : 0.0;

    auto normalized_matvec = [&](const std::vector<double>& x, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (const auto& e : graph.edges) {
            double w = e.weight * inv_sqrt_deg[e.i] * inv_sqrt_deg[e.j];
            out[e.i] += w * x[e.j];
            out[e.j] += w * x[e.i];
        }
        // Shift by +I so the spectrum is non-negative and power iteration
        // targets the top of it.
        for (int i = 0; i < n; ++i) out[i] += x[i];
    };

    std::vector<std::vector<double>> basis;
    {
        std::vector<double> v0(n);
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            v0[i] = std::sqrt(std::max(degree[i], 0.0));
            norm += v0[i] * v0[i];
        }
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (auto& v : v0) v /= norm;
        basis.push_back(std::move(v0));
    }

    Rng rng(derive_seed(seed, "umap-spectral"));
    std::vector<double> coords(static_cast<size_t>(n) * dims, 0.0);
    std::vector<double> v(n), next(n);
    for (int d = 0; d < dims; ++d) {
        for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
        for (int it = 0; it < 400; ++it) {
            for (const auto& u : basis) {
                double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
                for (int i = 0; i < n; ++i) v[i] -= dot * u[i];
            }
            double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
            if (norm < 1e-30) {
                for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
                continue;
            }
            for (auto& x : v) x /= norm;
            normalized_matvec(v, next);
            std::swap(v, next);
        }
        double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm > 0.0)
            for (auto& x : v) x /= norm;
        for (int i = 0; i < n; ++i) coords[static_cast<size_t>(i) * dims + d] = v[i];
        basis.push_back(v);
    }
    return coords;
}

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace

Embedding optimize_embedding(const FuzzyGraph& graph, const UmapParams& params,
                             const std::vector<std::string>& patient_index) {
    const int n = graph.n;
    const int dims = params.dims;
    if (dims < 1) throw std::invalid_argument("optimize_embedding: dims must be >= 1");

    Embedding emb;
    emb.n = n;
    emb.dims = dims;
    emb.params = params;
    emb.patient_index = patient_index;

    Rng init_rng(derive_seed(params.seed, "umap-init"));
    if (!graph.edges.empty() && n <= 4000) {
        emb.coords = spectral_init(graph, dims, params.seed);
    } else {
        emb.coords.resize(static_cast<size_t>(n) * dims);
        for (auto& c : emb.coords) c = init_rng.uniform(-10.0, 10.0);
    }
    // Rescale to the +-10 box and break exact ties.
    double max_abs = 0.0;
    for (double c : emb.coords) max_abs = std::max(max_abs, std::fabs(c));
    if (max_abs > 0.0) {
        double scale = 10.0 / max_abs;
        for (auto& c : emb.coords) c = c * scale + 1e-4 * init_rng.normal();
    }
    if (graph.edges.empty() || params.n_epochs <= 0) return emb;

    auto [a, b] = fit_curve_params(params.min_dist, params.spread);

    const size_t m = graph.edges.size();
    double max_w = 0.0;
    for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
    std::vector<double> epochs_per_sample(m), next_sample(m), eps_neg(m), next_neg(m);
    for (size_t e = 0; e < m; ++e) {
        epochs_per_sample[e] = max_w / graph.edges[e].weight;
        next_sample[e] = epochs_per_sample[e];
        eps_neg[e] = epochs_per_sample[e] / params.negative_sample_rate;
        next_neg[e] = eps_neg[e];
    }

    Rng rng(derive_seed(params.seed, "umap-optimize"));
    std::vector<double>& y = emb.coords;
    auto row = [&](int i) { return y.data() + static_cast<size_t>(i) * dims; };

    for (int epoch = 0; epoch < params.n_epochs; ++epoch) {
        const double alpha =
            params.initial_learning_rate * (1.0 - static_cast<double>(epoch) / params.n_epochs);
        for (size_t e = 0; e < m; ++e) {
            if (next_sample[e] > epoch) continue;
            const int i = graph.edges[e].i;
            const int j = graph.edges[e].j;
            double* yi = row(i);
            double* yj = row(j);

            double d2 = 0.0;
            for (int d = 0; d < dims; ++d) {
                double diff = yi[d] - yj[d];
                d2 += diff * diff;
            }
            if (d2 > 0.0) {
                double gc = (-2.0 * a * b * std::pow(d2, b - 1.0)) / (a * std::pow(d2, b) + 1.0);
                for (int d = 0; d < dims; ++d) {
                    double g = clip4(gc * (yi[d] - yj[d]));
                    yi[d] += alpha * g;
                    yj[d] -= alpha * g;
                }
            }
            next_sample[e] += epochs_per_sample[e];

            int n_neg = static_cast<int>((epoch - next_neg[e]) / eps_neg[e]);
            for (int s = 0; s < n_neg; ++s) {
                int k = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
                if (k == i || k == j) continue;
                double* yk = row(k);
                double dk2 = 0.0;
                for (int d = 0; d < dims; ++d) {
                    double diff = yi[d] - yk[d];
                    dk2 += diff * diff;
                }
                double gc = 0.0;
                if (dk2 > 0.0) gc = 2.0 * b / ((0.001 + dk2) * (a * std::pow(dk2, b) + 1.0));
                for (int d = 0; d < dims; ++d) {
                    double g = gc > 0.0 ? clip4(gc * (yi[d] - yk[d])) : 4.0;
                    yi[d] += alpha * g;
                }
            }
            next_neg[e] += n_neg * eps_neg[e];
        }
    }
    return emb;
}

Embedding embed(const dtw::DistanceMatrix& distances, const UmapParams& params) {
    FuzzyGraph graph = fuzzy_simplicial_set(distances, params.k);
    return optimize_embedding(graph, params, distances.patient_index);
}

void write_embedding(const std::string& path, const Embedding& e) {
    std::string out = "# k=" + std::to_string(e.params.k) + " min_dist=" + fmt_double(e.params.min_dist) +
                      " spread=" + fmt_double(e.params.spread) + " dims=" + std::to_string(e.params.dims) +
                      " n_epochs=" + std::to_string(e.params.n_epochs) +
                      " negative_sample_rate=" + fmt_double(e.params.negative_sample_rate) +
                      " initial_learning_rate=" + fmt_double(e.params.initial_learning_rate) +
                      " seed=" + std::to_string(e.params.seed) + "\n";
    out += "patient_id";
    for (int d = 0; d < e.dims; ++d) {
        std::string col = d == 0 ? "x" : d == 1 ? "y" : "c" + std::to_string(d);
        out += "," + col;
    }
    out += "\n";
    for (int i = 0; i < e.n; ++i) {
        out += e.patient_index.empty() ? ("p" + std::to_string(i)) : e.patient_index[i];
        for (int d = 0; d < e.dims; ++d) out += "," + fmt_double(e.at(i, d));
        out += "\n";
    }
    write_file(path, out);
}

Embedding read_embedding(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.size() < 2) throw std::runtime_error("embedding file too short: " + path);
    Embedding e;
    size_t first_data = 0;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        if (lines[i][0] == '#') {
            std::istringstream ss(lines[i].substr(1));
            std::string kv;
            while (ss >> kv) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
                double num = 0;
                if (!parse_double(value, num)) continue;
                if (key == "k") e.params.k = static_cast<int>(num);
                else if (key == "min_dist") e.params.min_dist = num;
                else if (key == "spread") e.params.spread = num;
                else if (key == "dims") e.params.dims = static_cast<int>(num);
                else if (key == "n_epochs") e.params.n_epochs = static_cast<int>(num);
                else if (key == "negative_sample_rate") e.params.negative_sample_rate = num;
                else if (key == "initial_learning_rate") e.params.initial_learning_rate = num;
                else if (key == "seed") e.params.seed = static_cast<uint64_t>(num);
            }
            continue;
        }
        first_data = i;
        break;
    }
    // first_data points at the column header line
    for (size_t i = first_data + 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = split_csv(lines[i]);
        if (f.size() < 2) throw std::runtime_error(path + ": bad embedding row");
        e.patient_index.emplace_back(trim(f[0]));
        for (size_t d = 1; d < f.size(); ++d) {
            double v = 0;
            if (!parse_double(f[d], v)) throw std::runtime_error(path + ": bad coordinate");
            e.coords.push_back(v);
        }
        e.dims = static_cast<int>(f.size()) - 1;
    }
    e.n = static_cast<int>(e.patient_index.size());
    return e;
}

}  // namespace icutraj::umap
