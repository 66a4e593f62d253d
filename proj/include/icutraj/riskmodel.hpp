#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icutraj::riskmodel {

/// Mixed-type feature table, column-major. Continuous columns first, then
/// categorical; `y` is the binary outcome.
struct MixedDataset {
    std::vector<std::string> cont_names;
    std::vector<std::string> cat_names;
    std::vector<std::vector<double>> cont_cols;       // [dim][row]
    std::vector<std::vector<std::string>> cat_cols;   // [dim][row]
    std::vector<int> y;

    size_t n_rows() const { return y.size(); }
    MixedDataset subset(std::span<const int> rows) const;
};

/// SMOTE-NC: oversamples the minority class to parity. Distances are
/// Euclidean on standardized continuous dims plus a constant penalty per
/// mismatched nominal dim (median of the minority-class standard deviations
/// on the standardized scale). Each synthetic row interpolates continuous
/// values at one uniform lambda toward a random one of the k nearest
/// minority neighbors; nominal values take the neighbors' majority vote
/// (ties resolved by the seeded generator). Original rows come first in the
/// output; synthetic row t uses minority row t mod m as its seed point.
MixedDataset smote_nc(const MixedDataset& data, int k_neighbors, uint64_t seed);

struct EbmConfig {
    int max_bins = 256;
    int pair_bins = 32;
    double learning_rate = 0.01;
    int n_rounds = 3000;
    int n_bags = 8;
    int n_pairs = 10;
    uint64_t seed = 0;
    double validation_fraction = 0.15;
    int early_stop_rounds = 50;
};

struct FeatureBinning {
    bool categorical = false;
    std::vector<double> edges;             // continuous: bin = upper_bound(edges, v)
    std::vector<std::string> categories;   // categorical: sorted; unseen -> extra last bin

    int n_bins() const {
        return categorical ? static_cast<int>(categories.size()) + 1
                           : static_cast<int>(edges.size()) + 1;
    }
    int bin_of(double v) const;
    int bin_of(const std::string& c) const;
};

struct Term {
    int f1 = -1;
    int f2 = -1;                 // -1 for main effects
    std::vector<double> scores;  // n_bins, or b1*b2 row-major for pairs
};

/// Cyclic-boosted additive logistic model: binned main-effect shape
/// functions plus screened pairwise terms, bag-averaged, every term
/// mean-centered over the training distribution.
struct AdditiveRiskModel {
    double intercept = 0.0;
    std::vector<std::string> feature_names;  // cont features then cat features
    int n_cont = 0;
    std::vector<FeatureBinning> binnings;       // main-effect binning per feature
    std::vector<FeatureBinning> pair_binnings;  // coarser binning used by pair terms
    std::vector<Term> terms;                    // mains first, then pairs
    int n_bags = 0;
    uint64_t seed = 0;

    double score_of(std::span<const double> cont, std::span<const std::string> cat) const;
};

AdditiveRiskModel fit_additive_model(const MixedDataset& data, const EbmConfig& config);

/// sigmoid(intercept + sum of term contributions); strictly inside (0, 1).
/// Unseen categories hit the unseen bin, out-of-range continuous values
/// clamp to the edge bins. Throws if the vector shape does not match.
double predict_proba(const AdditiveRiskModel& model, std::span<const double> cont,
                     std::span<const std::string> cat);

/// Mean absolute log-odds contribution of each term over the given rows,
/// sorted descending. Pair terms report as "<f1> x <f2>".
std::vector<std::pair<std::string, double>> feature_importance(const AdditiveRiskModel& model,
                                                               const MixedDataset& data);

/// Per-class seeded shuffle then round-robin; per-fold class counts are
/// within 1 of exact proportion. Throws when a class has fewer than k
/// members. Returns test-row indices per fold.
std::vector<std::vector<int>> stratified_kfold(std::span<const int> y, int k, uint64_t seed);

/// Rank-statistic AUROC with tie correction; exactly equal to all-pairs
/// concordance counting.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct ThresholdMetrics {
    double auroc = 0.0, accuracy = 0.0, f1 = 0.0, precision = 0.0, sensitivity = 0.0,
           specificity = 0.0, brier = 0.0;
};

/// Metrics of one prediction set at a decision threshold (0 when a ratio's
/// denominator is empty).
ThresholdMetrics score_predictions(std::span<const double> probs, std::span<const int> y,
                                   double threshold = 0.5);

struct MetricStat {
    double mean = 0.0;
    double sd = 0.0;
};

struct MetricsReport {
    MetricStat auroc, accuracy, f1, precision, sensitivity, specificity, brier;
    int n_folds = 0;
};

/// Stratified k-fold CV: SMOTE-NC on each training fold only, fit, score the
/// untouched test fold at the given threshold.
MetricsReport evaluate_cv(const MixedDataset& data, const EbmConfig& config, int k_folds,
                          uint64_t seed, double threshold = 0.5);

struct PerClusterResult {
    std::map<int, MetricsReport> per_cluster;
    MetricsReport pooled;  // all rows, noise included
    std::vector<std::pair<int, std::string>> skipped;
};

/// One CV per cluster plus one pooled CV over everything. Clusters whose
/// class counts cannot sustain the folds are skipped with a reason.
PerClusterResult train_per_cluster(const MixedDataset& data, std::span<const int> cluster_labels,
                                   const EbmConfig& config, int k_folds, uint64_t seed,
                                   double threshold = 0.5);

/// Versioned line-based text dump of bins, scores and intercept.
void write_model(const std::string& path, const AdditiveRiskModel& model);
AdditiveRiskModel read_model(const std::string& path);

}  // namespace icutraj::riskmodel
