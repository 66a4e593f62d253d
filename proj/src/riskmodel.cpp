#include "icutraj/riskmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "icutraj/rng.hpp"

namespace icutraj::riskmodel {

namespace {

double logit(double p) {
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(p / (1.0 - p));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

double log_loss(double p, int y) {
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return y ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

MixedDataset MixedDataset::subset(std::span<const int> rows) const {
    MixedDataset out;
    out.cont_names = cont_names;
    out.cat_names = cat_names;
    out.cont_cols.resize(cont_cols.size());
    out.cat_cols.resize(cat_cols.size());
    for (size_t d = 0; d < cont_cols.size(); ++d) {
        out.cont_cols[d].reserve(rows.size());
        for (int r : rows) out.cont_cols[d].push_back(cont_cols[d][r]);
    }
    for (size_t d = 0; d < cat_cols.size(); ++d) {
        out.cat_cols[d].reserve(rows.size());
        for (int r : rows) out.cat_cols[d].push_back(cat_cols[d][r]);
    }
    out.y.reserve(rows.size());
    for (int r : rows) out.y.push_back(y[r]);
    return out;
}

// --- SMOTE-NC ---

MixedDataset smote_nc(const MixedDataset& data, int k_neighbors, uint64_t seed) {
    const size_t n = data.n_rows();
    size_t n_pos = 0;
    for (int v : data.y) n_pos += v;
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("smote_nc: single-class input");
    if (n_pos == n_neg) return data;  // already balanced

    const int minority_label = n_pos < n_neg ? 1 : 0;
    std::vector<int> minority;
    for (size_t i = 0; i < n; ++i)
        if (data.y[i] == minority_label) minority.push_back(static_cast<int>(i));
    const size_t m = minority.size();
    if (static_cast<int>(m) <= k_neighbors)
        throw std::invalid_argument("smote_nc: minority count must exceed k_neighbors");

    const size_t nc = data.cont_cols.size();
    const size_t ncat = data.cat_cols.size();

    // Standardize continuous dims on the full data for the distance metric.
    std::vector<double> mean(nc, 0.0), sd(nc, 0.0);
    for (size_t d = 0; d < nc; ++d) {
        for (double v : data.cont_cols[d]) mean[d] += v;
        mean[d] /= static_cast<double>(n);
        double var = 0.0;
        for (double v : data.cont_cols[d]) var += (v - mean[d]) * (v - mean[d]);
        sd[d] = std::sqrt(var / static_cast<double>(n));
    }
    auto zval = [&](size_t d, int row) {
        return sd[d] > 0.0 ? (data.cont_cols[d][row] - mean[d]) / sd[d] : 0.0;
    };

    // Nominal mismatch penalty: median of the minority-class SDs on the
    // standardized scale.
    double penalty = 1.0;
    if (nc > 0) {
        std::vector<double> sds;
        sds.reserve(nc);
        for (size_t d = 0; d < nc; ++d) {
            double mu = 0.0;
            for (int r : minority) mu += zval(d, r);
            mu /= static_cast<double>(m);
            double var = 0.0;
            for (int r : minority) var += (zval(d, r) - mu) * (zval(d, r) - mu);
            sds.push_back(std::sqrt(var / static_cast<double>(m)));
        }
        std::sort(sds.begin(), sds.end());
        penalty = m > 0 ? (nc % 2 ? sds[nc / 2] : 0.5 * (sds[nc / 2 - 1] + sds[nc / 2])) : 1.0;
    }
    const double penalty2 = penalty * penalty;

    auto dist2 = [&](int a, int b) {
        double s = 0.0;
        for (size_t d = 0; d < nc; ++d) {
            double diff = zval(d, a) - zval(d, b);
            s += diff * diff;
        }
        for (size_t d = 0; d < ncat; ++d) {
            if (data.cat_cols[d][a] != data.cat_cols[d][b]) s += penalty2;
        }
        return s;
    };

    // k nearest minority neighbors per minority point (self excluded, ties
    // to the lower index).
    std::vector<std::vector<int>> neighbors(m);
    {
        std::vector<std::pair<double, int>> cand;
        for (size_t a = 0; a < m; ++a) {
            cand.clear();
            for (size_t b = 0; b < m; ++b) {
                if (a == b) continue;
                cand.emplace_back(dist2(minority[a], minority[b]), minority[b]);
            }
            std::sort(cand.begin(), cand.end());
            neighbors[a].reserve(k_neighbors);
            for (int t = 0; t < k_neighbors; ++t) neighbors[a].push_back(cand[t].second);
        }
    }

    MixedDataset out = data;
    const size_t n_new = (n_pos < n_neg ? n_neg : n_pos) - m;
    Rng rng(derive_seed(seed, "smote-nc"));
    for (size_t t = 0; t < n_new; ++t) {
        const size_t a = t % m;
        const int seed_row = minority[a];
        const int nb = neighbors[a][rng.uniform_int(static_cast<uint64_t>(k_neighbors))];
        const double lambda = rng.next_double();
        for (size_t d = 0; d < nc; ++d) {
            double v = data.cont_cols[d][seed_row] +
                       lambda * (data.cont_cols[d][nb] - data.cont_cols[d][seed_row]);
            out.cont_cols[d].push_back(v);
        }
        for (size_t d = 0; d < ncat; ++d) {
            std::map<std::string, int> votes;  // ordered: deterministic tie set
            for (int r : neighbors[a]) ++votes[data.cat_cols[d][r]];
            int best = 0;
            for (const auto& [cat, c] : votes) best = std::max(best, c);
            std::vector<const std::string*> tied;
            for (const auto& [cat, c] : votes)
                if (c == best) tied.push_back(&cat);
            out.cat_cols[d].push_back(*tied[rng.uniform_int(tied.size())]);
        }
        out.y.push_back(minority_label);
    }
    return out;
}

// --- Binning ---

int FeatureBinning::bin_of(double v) const {
    int lo = 0, hi = static_cast<int>(edges.size());
    while (lo < hi) {
        int mid = (lo + hi) / 2;
        if (v <= edges[mid])
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;  // out-of-range values fall in the edge bins
}

int FeatureBinning::bin_of(const std::string& c) const {
    auto it = std::lower_bound(categories.begin(), categories.end(), c);
    if (it != categories.end() && *it == c) return static_cast<int>(it - categories.begin());
    return static_cast<int>(categories.size());  // unseen-category bin
}

namespace {

FeatureBinning quantile_binning(const std::vector<double>& values, int max_bins) {
    FeatureBinning b;
    b.categorical = false;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    for (int i = 1; i < max_bins; ++i) {
        size_t rank = n * static_cast<size_t>(i) / max_bins;
        double edge = sorted[std::min(rank, n - 1)];
        if (b.edges.empty() || edge > b.edges.back()) b.edges.push_back(edge);
    }
    // Drop a top edge equal to the maximum; it would create an empty bin.
    while (!b.edges.empty() && b.edges.back() >= sorted.back()) b.edges.pop_back();
    return b;
}

FeatureBinning category_binning(const std::vector<std::string>& values) {
    FeatureBinning b;
    b.categorical = true;
    std::set<std::string> vocab(values.begin(), values.end());
    b.categories.assign(vocab.begin(), vocab.end());
    return b;
}

struct BoostState {
    // Bin index per (feature, row) for the main and pair binnings.
    std::vector<std::vector<int>> main_bins;
    std::vector<std::vector<int>> pair_bins;
    int n_features = 0;
    size_t n_rows = 0;
};

BoostState index_bins(const MixedDataset& data, const AdditiveRiskModel& model) {
    BoostState st;
    st.n_rows = data.n_rows();
    st.n_features = static_cast<int>(model.feature_names.size());
    st.main_bins.resize(st.n_features);
    st.pair_bins.resize(st.n_features);
    for (int f = 0; f < st.n_features; ++f) {
        st.main_bins[f].resize(st.n_rows);
        st.pair_bins[f].resize(st.n_rows);
        if (f < model.n_cont) {
            const auto& col = data.cont_cols[f];
            for (size_t r = 0; r < st.n_rows; ++r) {
                st.main_bins[f][r] = model.binnings[f].bin_of(col[r]);
                st.pair_bins[f][r] = model.pair_binnings[f].bin_of(col[r]);
            }
        } else {
            const auto& col = data.cat_cols[f - model.n_cont];
            for (size_t r = 0; r < st.n_rows; ++r) {
                st.main_bins[f][r] = model.binnings[f].bin_of(col[r]);
                st.pair_bins[f][r] = model.pair_binnings[f].bin_of(col[r]);
            }
        }
    }
    return st;
}

/// One bag of cyclic boosting over the given terms. `scores` covers all rows
/// of the dataset; only `train_rows` drive the gradient, `val_rows` drive
/// early stopping. Shape vectors are updated in place.
void boost_bag(const std::vector<int>& train_rows, const std::vector<int>& val_rows,
               const std::vector<int>& y, std::vector<double>& scores,
               const std::vector<const std::vector<int>*>& term_bins_a,
               const std::vector<const std::vector<int>*>& term_bins_b,
               const std::vector<int>& term_width_b, std::vector<std::vector<double>>& shapes,
               const EbmConfig& config) {
    const size_t n_terms = shapes.size();
    if (n_terms == 0 || config.n_rounds <= 0) return;

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_shapes = shapes;
    int stale = 0;
    std::vector<double> num, den;

    for (int round = 0; round < config.n_rounds; ++round) {
        for (size_t t = 0; t < n_terms; ++t) {
            auto& shape = shapes[t];
            num.assign(shape.size(), 0.0);
            den.assign(shape.size(), 0.0);
            const auto& bins_a = *term_bins_a[t];
            const auto* bins_b = term_bins_b[t];
            const int width = term_width_b[t];
            for (int r : train_rows) {
                const int cell = bins_b ? bins_a[r] * width + (*bins_b)[r] : bins_a[r];
                const double p = sigmoid(scores[r]);
                num[cell] += y[r] - p;
                den[cell] += p * (1.0 - p);
            }
            for (size_t cell = 0; cell < shape.size(); ++cell) {
                if (den[cell] <= 0.0 && num[cell] == 0.0) continue;
                double delta = config.learning_rate * num[cell] / std::max(den[cell], 1e-12);
                shape[cell] += delta;
                num[cell] = delta;  // reuse as the per-cell applied step
            }
            auto apply = [&](int r) {
                const int cell = bins_b ? bins_a[r] * width + (*bins_b)[r] : bins_a[r];
                scores[r] += num[cell];
            };
            for (int r : train_rows) apply(r);
            for (int r : val_rows) apply(r);
        }
        if (!val_rows.empty()) {
            double loss = 0.0;
            for (int r : val_rows) loss += log_loss(sigmoid(scores[r]), y[r]);
            loss /= static_cast<double>(val_rows.size());
            if (loss < best_val - 1e-12) {
                best_val = loss;
                best_shapes = shapes;
                stale = 0;
            } else if (++stale >= config.early_stop_rounds) {
                break;
            }
        }
    }
    if (!val_rows.empty()) shapes = best_shapes;
}

}  // namespace

AdditiveRiskModel fit_additive_model(const MixedDataset& data, const EbmConfig& config) {
    const size_t n = data.n_rows();
    size_t n_pos = 0;
    for (int v : data.y) n_pos += v;
    if (n_pos < 2 || n - n_pos < 2)
        throw std::invalid_argument("fit_additive_model: need at least 2 samples per class");
    const size_t n_features = data.cont_cols.size() + data.cat_cols.size();
    if (n_features == 0) throw std::invalid_argument("fit_additive_model: empty feature set");
    if (config.n_bags < 1) throw std::invalid_argument("fit_additive_model: n_bags must be >= 1");

    AdditiveRiskModel model;
    model.n_cont = static_cast<int>(data.cont_cols.size());
    model.n_bags = config.n_bags;
    model.seed = config.seed;
    model.intercept = logit(static_cast<double>(n_pos) / static_cast<double>(n));
    for (const auto& name : data.cont_names) model.feature_names.push_back(name);
    for (const auto& name : data.cat_names) model.feature_names.push_back(name);

    for (size_t f = 0; f < data.cont_cols.size(); ++f) {
        model.binnings.push_back(quantile_binning(data.cont_cols[f], config.max_bins));
        model.pair_binnings.push_back(quantile_binning(data.cont_cols[f], config.pair_bins));
    }
    for (size_t f = 0; f < data.cat_cols.size(); ++f) {
        auto b = category_binning(data.cat_cols[f]);
        model.binnings.push_back(b);
        model.pair_binnings.push_back(std::move(b));
    }

    const BoostState st = index_bins(data, model);
    const int nf = st.n_features;

    auto make_bag = [&](uint64_t bag_seed, std::vector<int>& train_rows, std::vector<int>& val_rows) {
        Rng rng(bag_seed);
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        size_t n_val = static_cast<size_t>(std::floor(config.validation_fraction * n));
        val_rows.assign(order.begin(), order.begin() + n_val);
        std::vector<int> pool(order.begin() + n_val, order.end());
        train_rows.resize(pool.size());
        for (size_t i = 0; i < pool.size(); ++i)
            train_rows[i] = pool[rng.uniform_int(pool.size())];  // bootstrap, 100% with replacement
    };

    // --- Main effects, bag by bag ---
    std::vector<std::vector<double>> main_sum(nf);
    for (int f = 0; f < nf; ++f) main_sum[f].assign(model.binnings[f].n_bins(), 0.0);

    for (int bag = 0; bag < config.n_bags; ++bag) {
        std::vector<int> train_rows, val_rows;
        make_bag(derive_seed(config.seed, "ebm-bag", bag), train_rows, val_rows);
        std::vector<double> scores(n, model.intercept);
        std::vector<std::vector<double>> shapes(nf);
        std::vector<const std::vector<int>*> bins_a(nf);
        std::vector<const std::vector<int>*> bins_b(nf, nullptr);
        std::vector<int> width_b(nf, 0);
        for (int f = 0; f < nf; ++f) {
            shapes[f].assign(model.binnings[f].n_bins(), 0.0);
            bins_a[f] = &st.main_bins[f];
        }
        boost_bag(train_rows, val_rows, data.y, scores, bins_a, bins_b, width_b, shapes, config);
        for (int f = 0; f < nf; ++f)
            for (size_t c = 0; c < shapes[f].size(); ++c) main_sum[f][c] += shapes[f][c];
    }
    for (int f = 0; f < nf; ++f) {
        Term term;
        term.f1 = f;
        term.scores = main_sum[f];
        for (auto& s : term.scores) s /= config.n_bags;
        model.terms.push_back(std::move(term));
    }

    // --- Pair screen on the frozen mains (FAST-style 2x2 split gain) ---
    std::vector<std::pair<int, int>> selected_pairs;
    if (config.n_pairs > 0 && nf >= 2) {
        std::vector<double> base_scores(n, model.intercept);
        for (int f = 0; f < nf; ++f)
            for (size_t r = 0; r < n; ++r) base_scores[r] += model.terms[f].scores[st.main_bins[f][r]];

        struct PairGain {
            double gain;
            int f1, f2;
        };
        std::vector<PairGain> gains;
        for (int f1 = 0; f1 < nf; ++f1) {
            const int b1 = model.pair_binnings[f1].n_bins();
            for (int f2 = f1 + 1; f2 < nf; ++f2) {
                const int b2 = model.pair_binnings[f2].n_bins();
                std::vector<double> grad(static_cast<size_t>(b1) * b2, 0.0);
                std::vector<double> hess(static_cast<size_t>(b1) * b2, 0.0);
                for (size_t r = 0; r < n; ++r) {
                    const double p = sigmoid(base_scores[r]);
                    const size_t cell =
                        static_cast<size_t>(st.pair_bins[f1][r]) * b2 + st.pair_bins[f2][r];
                    grad[cell] += data.y[r] - p;
                    hess[cell] += p * (1.0 - p);
                }
                // Cumulative tables over the grid.
                auto idx = [&](int i, int j) { return static_cast<size_t>(i) * b2 + j; };
                std::vector<double> cg(grad), ch(hess);
                for (int i = 0; i < b1; ++i)
                    for (int j = 1; j < b2; ++j) {
                        cg[idx(i, j)] += cg[idx(i, j - 1)];
                        ch[idx(i, j)] += ch[idx(i, j - 1)];
                    }
                for (int j = 0; j < b2; ++j)
                    for (int i = 1; i < b1; ++i) {
                        cg[idx(i, j)] += cg[idx(i - 1, j)];
                        ch[idx(i, j)] += ch[idx(i - 1, j)];
                    }
                const double gt = cg[idx(b1 - 1, b2 - 1)];
                const double ht = ch[idx(b1 - 1, b2 - 1)];
                auto score_of = [](double g, double h) { return g * g / (h + 1e-12); };
                const double base = score_of(gt, ht);
                double best = base;
                for (int i = 0; i + 1 < b1; ++i) {
                    for (int j = 0; j + 1 < b2; ++j) {
                        const double g11 = cg[idx(i, j)], h11 = ch[idx(i, j)];
                        const double g1x = cg[idx(i, b2 - 1)], h1x = ch[idx(i, b2 - 1)];
                        const double gx1 = cg[idx(b1 - 1, j)], hx1 = ch[idx(b1 - 1, j)];
                        const double g12 = g1x - g11, h12 = h1x - h11;
                        const double g21 = gx1 - g11, h21 = hx1 - h11;
                        const double g22 = gt - g1x - gx1 + g11, h22 = ht - h1x - hx1 + h11;
                        best = std::max(best, score_of(g11, h11) + score_of(g12, h12) +
                                                  score_of(g21, h21) + score_of(g22, h22));
                    }
                }
                gains.push_back({best - base, f1, f2});
            }
        }
        std::sort(gains.begin(), gains.end(), [](const PairGain& a, const PairGain& b) {
            if (a.gain != b.gain) return a.gain > b.gain;
            if (a.f1 != b.f1) return a.f1 < b.f1;
            return a.f2 < b.f2;
        });
        for (int t = 0; t < config.n_pairs && t < static_cast<int>(gains.size()); ++t)
            selected_pairs.emplace_back(gains[t].f1, gains[t].f2);
    }

    // --- Pair boosting, mains frozen ---
    if (!selected_pairs.empty()) {
        const size_t np = selected_pairs.size();
        std::vector<std::vector<double>> pair_sum(np);
        for (size_t t = 0; t < np; ++t) {
            auto [f1, f2] = selected_pairs[t];
            pair_sum[t].assign(
                static_cast<size_t>(model.pair_binnings[f1].n_bins()) * model.pair_binnings[f2].n_bins(),
                0.0);
        }
        for (int bag = 0; bag < config.n_bags; ++bag) {
            std::vector<int> train_rows, val_rows;
            make_bag(derive_seed(config.seed, "ebm-pair-bag", bag), train_rows, val_rows);
            std::vector<double> scores(n, model.intercept);
            for (int f = 0; f < nf; ++f)
                for (size_t r = 0; r < n; ++r) scores[r] += model.terms[f].scores[st.main_bins[f][r]];
            std::vector<std::vector<double>> shapes(np);
            std::vector<const std::vector<int>*> bins_a(np);
            std::vector<const std::vector<int>*> bins_b(np);
            std::vector<int> width_b(np);
            for (size_t t = 0; t < np; ++t) {
                auto [f1, f2] = selected_pairs[t];
                shapes[t].assign(pair_sum[t].size(), 0.0);
                bins_a[t] = &st.pair_bins[f1];
                bins_b[t] = &st.pair_bins[f2];
                width_b[t] = model.pair_binnings[f2].n_bins();
            }
            boost_bag(train_rows, val_rows, data.y, scores, bins_a, bins_b, width_b, shapes, config);
            for (size_t t = 0; t < np; ++t)
                for (size_t c = 0; c < shapes[t].size(); ++c) pair_sum[t][c] += shapes[t][c];
        }
        for (size_t t = 0; t < np; ++t) {
            Term term;
            term.f1 = selected_pairs[t].first;
            term.f2 = selected_pairs[t].second;
            term.scores = pair_sum[t];
            for (auto& s : term.scores) s /= config.n_bags;
            model.terms.push_back(std::move(term));
        }
    }

    // --- Mean-center every term over the training distribution ---
    for (auto& term : model.terms) {
        double center = 0.0;
        if (term.f2 < 0) {
            for (size_t r = 0; r < n; ++r) center += term.scores[st.main_bins[term.f1][r]];
        } else {
            const int width = model.pair_binnings[term.f2].n_bins();
            for (size_t r = 0; r < n; ++r)
                center += term.scores[static_cast<size_t>(st.pair_bins[term.f1][r]) * width +
                                      st.pair_bins[term.f2][r]];
        }
        center /= static_cast<double>(n);
        for (auto& s : term.scores) s -= center;
        model.intercept += center;
    }
    return model;
}

double AdditiveRiskModel::score_of(std::span<const double> cont,
                                   std::span<const std::string> cat) const {
    if (static_cast<int>(cont.size()) != n_cont ||
        cont.size() + cat.size() != feature_names.size())
        throw std::invalid_argument("predict: feature vector shape mismatch");
    auto main_bin = [&](int f) {
        return f < n_cont ? binnings[f].bin_of(cont[f]) : binnings[f].bin_of(cat[f - n_cont]);
    };
    auto pair_bin = [&](int f) {
        return f < n_cont ? pair_binnings[f].bin_of(cont[f])
                          : pair_binnings[f].bin_of(cat[f - n_cont]);
    };
    double score = intercept;
    for (const auto& term : terms) {
        if (term.f2 < 0) {
            score += term.scores[main_bin(term.f1)];
        } else {
            const int width = pair_binnings[term.f2].n_bins();
            score += term.scores[static_cast<size_t>(pair_bin(term.f1)) * width + pair_bin(term.f2)];
        }
    }
    return score;
}

double predict_proba(const AdditiveRiskModel& model, std::span<const double> cont,
                     std::span<const std::string> cat) {
    return sigmoid(model.score_of(cont, cat));
}

std::vector<std::pair<std::string, double>> feature_importance(const AdditiveRiskModel& model,
                                                               const MixedDataset& data) {
    const BoostState st = index_bins(data, model);
    const size_t n = data.n_rows();
    std::vector<std::pair<std::string, double>> out;
    for (const auto& term : model.terms) {
        double acc = 0.0;
        if (term.f2 < 0) {
            for (size_t r = 0; r < n; ++r) acc += std::fabs(term.scores[st.main_bins[term.f1][r]]);
        } else {
            const int width = model.pair_binnings[term.f2].n_bins();
            for (size_t r = 0; r < n; ++r)
                acc += std::fabs(term.scores[static_cast<size_t>(st.pair_bins[term.f1][r]) * width +
                                             st.pair_bins[term.f2][r]]);
        }
        std::string name = term.f2 < 0 ? model.feature_names[term.f1]
                                       : model.feature_names[term.f1] + " x " +
                                             model.feature_names[term.f2];
        out.emplace_back(std::move(name), n > 0 ? acc / static_cast<double>(n) : 0.0);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

// --- CV machinery ---

std::vector<std::vector<int>> stratified_kfold(std::span<const int> y, int k, uint64_t seed) {
    if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
    std::vector<int> pos, neg;
    for (size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(static_cast<int>(i));
    if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k)
        throw std::invalid_argument("stratified_kfold: class count below k");

    Rng rng(derive_seed(seed, "stratified-kfold"));
    rng.shuffle(neg);
    rng.shuffle(pos);
    std::vector<std::vector<int>> folds(k);
    for (size_t i = 0; i < neg.size(); ++i) folds[i % k].push_back(neg[i]);
    for (size_t i = 0; i < pos.size(); ++i) folds[i % k].push_back(pos[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: length mismatch");
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });

    long long n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: single-class labels");

    // Twice the positive rank-sum stays integral under tied (average) ranks.
    long long twice_rank_sum_pos = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const long long twice_avg_rank = static_cast<long long>(i + 1) + static_cast<long long>(j + 1);
        for (size_t t = i; t <= j; ++t)
            if (labels[order[t]]) twice_rank_sum_pos += twice_avg_rank;
        i = j + 1;
    }
    const long long numerator2 = twice_rank_sum_pos - n_pos * (n_pos + 1);  // == 2 * U
    return static_cast<double>(numerator2) / static_cast<double>(2 * n_pos * n_neg);
}

ThresholdMetrics score_predictions(std::span<const double> probs, std::span<const int> y,
                                   double threshold) {
    ThresholdMetrics s{};
    long long tp = 0, tn = 0, fp = 0, fn = 0;
    double brier = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] >= threshold;
        if (pred && y[i]) ++tp;
        else if (pred && !y[i]) ++fp;
        else if (!pred && y[i]) ++fn;
        else ++tn;
        const double diff = probs[i] - y[i];
        brier += diff * diff;
    }
    const double n = static_cast<double>(probs.size());
    s.brier = brier / n;
    s.accuracy = static_cast<double>(tp + tn) / n;
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    s.sensitivity = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.specificity = tn + fp > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;
    s.f1 = s.precision + s.sensitivity > 0.0
               ? 2.0 * s.precision * s.sensitivity / (s.precision + s.sensitivity)
               : 0.0;
    s.auroc = auroc(probs, y);
    return s;
}

namespace {

MetricStat stat_of(const std::vector<double>& values) {
    MetricStat s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

}  // namespace

MetricsReport evaluate_cv(const MixedDataset& data, const EbmConfig& config, int k_folds,
                          uint64_t seed, double threshold) {
    auto folds = stratified_kfold(data.y, k_folds, seed);
    std::vector<double> m_auroc, m_acc, m_f1, m_prec, m_sens, m_spec, m_brier;

    std::vector<char> in_test(data.n_rows());
    for (int fold = 0; fold < k_folds; ++fold) {
        std::fill(in_test.begin(), in_test.end(), 0);
        for (int r : folds[fold]) in_test[r] = 1;
        std::vector<int> train_rows;
        train_rows.reserve(data.n_rows() - folds[fold].size());
        for (size_t r = 0; r < data.n_rows(); ++r)
            if (!in_test[r]) train_rows.push_back(static_cast<int>(r));

        MixedDataset train = data.subset(train_rows);
        // Balance the training portion only; the test fold stays untouched.
        MixedDataset balanced = smote_nc(train, 5, derive_seed(seed, "cv-smote", fold));
        EbmConfig fold_config = config;
        fold_config.seed = derive_seed(seed, "cv-fit", fold);
        AdditiveRiskModel model = fit_additive_model(balanced, fold_config);

        std::vector<double> probs;
        std::vector<int> y_test;
        std::vector<double> cont_row(data.cont_cols.size());
        std::vector<std::string> cat_row(data.cat_cols.size());
        for (int r : folds[fold]) {
            for (size_t d = 0; d < data.cont_cols.size(); ++d) cont_row[d] = data.cont_cols[d][r];
            for (size_t d = 0; d < data.cat_cols.size(); ++d) cat_row[d] = data.cat_cols[d][r];
            probs.push_back(predict_proba(model, cont_row, cat_row));
            y_test.push_back(data.y[r]);
        }
        ThresholdMetrics s = score_predictions(probs, y_test, threshold);
        m_auroc.push_back(s.auroc);
        m_acc.push_back(s.accuracy);
        m_f1.push_back(s.f1);
        m_prec.push_back(s.precision);
        m_sens.push_back(s.sensitivity);
        m_spec.push_back(s.specificity);
        m_brier.push_back(s.brier);
    }

    MetricsReport report;
    report.n_folds = k_folds;
    report.auroc = stat_of(m_auroc);
    report.accuracy = stat_of(m_acc);
    report.f1 = stat_of(m_f1);
    report.precision = stat_of(m_prec);
    report.sensitivity = stat_of(m_sens);
    report.specificity = stat_of(m_spec);
    report.brier = stat_of(m_brier);
    return report;
}

PerClusterResult train_per_cluster(const MixedDataset& data, std::span<const int> cluster_labels,
                                   const EbmConfig& config, int k_folds, uint64_t seed,
                                   double threshold) {
    if (cluster_labels.size() != data.n_rows())
        throw std::invalid_argument("train_per_cluster: label count mismatch");
    PerClusterResult result;
    // One derived seed for every evaluation: a cluster holding the whole
    // cohort then reproduces the pooled report exactly.
    const uint64_t cv_seed = derive_seed(seed, "cv");

    std::set<int> clusters;
    for (int l : cluster_labels)
        if (l >= 0) clusters.insert(l);

    for (int c : clusters) {
        std::vector<int> rows;
        for (size_t i = 0; i < cluster_labels.size(); ++i)
            if (cluster_labels[i] == c) rows.push_back(static_cast<int>(i));
        int n_pos = 0;
        for (int r : rows) n_pos += data.y[r];
        const int n_neg = static_cast<int>(rows.size()) - n_pos;
        if (n_pos < k_folds || n_neg < k_folds) {
            result.skipped.emplace_back(
                c, "class counts " + std::to_string(n_pos) + "/" + std::to_string(n_neg) +
                       " cannot sustain " + std::to_string(k_folds) + " folds");
            continue;
        }
        MixedDataset sub = data.subset(rows);
        try {
            result.per_cluster[c] = evaluate_cv(sub, config, k_folds, cv_seed, threshold);
        } catch (const std::exception& e) {
            // A cluster that cannot be evaluated is reported, not fatal
            // (e.g. a training fold whose minority is too small for SMOTE).
            result.per_cluster.erase(c);
            result.skipped.emplace_back(c, e.what());
        }
    }
    result.pooled = evaluate_cv(data, config, k_folds, cv_seed, threshold);
    return result;
}

// --- Model bundle IO ---

void write_model(const std::string& path, const AdditiveRiskModel& model) {
    std::ostringstream out;
    out.precision(17);
    out << "ebm_model_v1\n";
    out << "intercept " << model.intercept << "\n";
    out << "n_bags " << model.n_bags << "\n";
    out << "seed " << model.seed << "\n";
    out << "n_cont " << model.n_cont << "\n";
    out << "n_features " << model.feature_names.size() << "\n";
    auto dump_binning = [&](const FeatureBinning& b) {
        if (b.categorical) {
            out << "categorical " << b.categories.size() << "\n";
            for (const auto& c : b.categories) out << c << "\n";
        } else {
            out << "continuous " << b.edges.size() << "\n";
            for (double e : b.edges) out << e << "\n";
        }
    };
    for (size_t f = 0; f < model.feature_names.size(); ++f) {
        out << "feature " << model.feature_names[f] << "\n";
        dump_binning(model.binnings[f]);
        dump_binning(model.pair_binnings[f]);
    }
    out << "n_terms " << model.terms.size() << "\n";
    for (const auto& term : model.terms) {
        out << "term " << term.f1 << " " << term.f2 << " " << term.scores.size() << "\n";
        for (double s : term.scores) out << s << "\n";
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write model file: " + path);
    file << out.str();
}

AdditiveRiskModel read_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "ebm_model_v1") throw std::runtime_error("unsupported model format in " + path);

    AdditiveRiskModel model;
    std::string key;
    size_t n_features = 0;
    in >> key >> model.intercept;
    in >> key >> model.n_bags;
    in >> key >> model.seed;
    in >> key >> model.n_cont;
    in >> key >> n_features;
    in.ignore();
    auto read_binning = [&](FeatureBinning& b) {
        std::string kind;
        size_t count = 0;
        in >> kind >> count;
        in.ignore();
        b.categorical = kind == "categorical";
        std::string line;
        for (size_t i = 0; i < count; ++i) {
            std::getline(in, line);
            if (b.categorical) {
                b.categories.push_back(line);
            } else {
                b.edges.push_back(std::stod(line));
            }
        }
    };
    for (size_t f = 0; f < n_features; ++f) {
        std::string line;
        std::getline(in, line);
        if (line.rfind("feature ", 0) != 0) throw std::runtime_error(path + ": bad feature header");
        model.feature_names.push_back(line.substr(8));
        FeatureBinning main_b, pair_b;
        read_binning(main_b);
        read_binning(pair_b);
        model.binnings.push_back(std::move(main_b));
        model.pair_binnings.push_back(std::move(pair_b));
    }
    size_t n_terms = 0;
    in >> key >> n_terms;
    for (size_t t = 0; t < n_terms; ++t) {
        Term term;
        size_t n_scores = 0;
        in >> key >> term.f1 >> term.f2 >> n_scores;
        term.scores.resize(n_scores);
        for (size_t s = 0; s < n_scores; ++s) in >> term.scores[s];
        model.terms.push_back(std::move(term));
    }
    if (!in) throw std::runtime_error(path + ": truncated model file");
    return model;
}

}  // namespace icutraj::riskmodel
