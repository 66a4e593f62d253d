#include "icutraj/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "icutraj/config.hpp"
#include "icutraj/csv.hpp"
#include "icutraj/dtw.hpp"
#include "icutraj/hdbscan.hpp"
#include "icutraj/rng.hpp"
#include "icutraj/validity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace icutraj::pipeline {

PipelineConfig PipelineConfig::parse_file(const std::string& path) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(path);
    PipelineConfig c;
    c.patients_path = cfg.get_or("input", "patients", "");
    c.vitals_path = cfg.get_or("input", "vitals", "");
    c.diagnoses_path = cfg.get_or("input", "diagnoses", "");
    c.gem_path = cfg.get_or("input", "gem", "");
    c.window_minutes = static_cast<int>(cfg.get_int("cohort", "window_minutes", 30));
    c.band = static_cast<int>(cfg.get_int("dtw", "band", 0));
    c.threads = static_cast<int>(cfg.get_int("dtw", "threads", 1));
    c.umap_params.k = static_cast<int>(cfg.get_int("umap", "k", 15));
    c.umap_params.min_dist = cfg.get_double("umap", "min_dist", 0.1);
    c.umap_params.spread = cfg.get_double("umap", "spread", 1.0);
    c.umap_params.dims = static_cast<int>(cfg.get_int("umap", "dims", 2));
    c.umap_params.n_epochs = static_cast<int>(cfg.get_int("umap", "epochs", 500));
    c.umap_params.negative_sample_rate = cfg.get_double("umap", "negative_sample_rate", 5.0);
    c.umap_params.initial_learning_rate = cfg.get_double("umap", "learning_rate", 1.0);
    c.min_samples = static_cast<int>(cfg.get_int("hdbscan", "min_samples", 60));
    c.min_cluster_size = static_cast<int>(cfg.get_int("hdbscan", "min_cluster_size", 60));
    if (auto grid = cfg.get("sweep", "grid")) {
        c.sweep_grid.clear();
        for (const auto& tok : split_list(*grid)) {
            long long v = 0;
            if (!parse_long(tok, v)) throw std::runtime_error("config: bad sweep grid entry " + tok);
            c.sweep_grid.push_back(static_cast<int>(v));
        }
    }
    c.model.max_bins = static_cast<int>(cfg.get_int("model", "max_bins", 64));
    c.model.pair_bins = static_cast<int>(cfg.get_int("model", "pair_bins", 16));
    c.model.learning_rate = cfg.get_double("model", "learning_rate", 0.05);
    c.model.n_rounds = static_cast<int>(cfg.get_int("model", "rounds", 1000));
    c.model.n_bags = static_cast<int>(cfg.get_int("model", "bags", 4));
    c.model.n_pairs = static_cast<int>(cfg.get_int("model", "pairs", 3));
    c.model.early_stop_rounds = static_cast<int>(cfg.get_int("model", "early_stop_rounds", 50));
    c.folds = static_cast<int>(cfg.get_int("model", "folds", 10));
    c.threshold = cfg.get_double("model", "threshold", 0.5);
    c.out_dir = cfg.get_or("run", "out", "out");
    c.seed = static_cast<uint64_t>(cfg.get_int("run", "seed", 1234));
    if (auto hz = cfg.get("run", "horizons")) {
        c.horizons.clear();
        for (const auto& tok : split_list(*hz)) {
            if (tok == "inf" || tok == "full") continue;  // full stay always runs
            double v = 0;
            if (!parse_double(tok, v)) throw std::runtime_error("config: bad horizon " + tok);
            c.horizons.push_back(v);
        }
    }
    return c;
}

void PipelineConfig::validate() const {
    auto need_file = [](const std::string& field, const std::string& path) {
        if (path.empty()) throw std::runtime_error("config: missing input." + field);
        if (!fs::exists(path))
            throw std::runtime_error("config: input." + field + " does not exist: " + path);
    };
    need_file("patients", patients_path);
    need_file("vitals", vitals_path);
    need_file("diagnoses", diagnoses_path);
    need_file("gem", gem_path);
    if (window_minutes <= 0) throw std::runtime_error("config: cohort.window_minutes must be > 0");
    if (band < 0) throw std::runtime_error("config: dtw.band must be >= 0");
    if (umap_params.k < 2) throw std::runtime_error("config: umap.k must be >= 2");
    if (umap_params.dims < 1) throw std::runtime_error("config: umap.dims must be >= 1");
    if (min_samples < 1) throw std::runtime_error("config: hdbscan.min_samples must be >= 1");
    if (min_cluster_size < 2) throw std::runtime_error("config: hdbscan.min_cluster_size must be >= 2");
    if (folds < 2) throw std::runtime_error("config: model.folds must be >= 2");
    if (sweep_grid.empty()) throw std::runtime_error("config: sweep.grid must be non-empty");
    for (double h : horizons) {
        if (h <= 0) throw std::runtime_error("config: run.horizons entries must be > 0");
        if (h != 4.0 && h != 24.0 && h != 72.0 && h != 168.0)
            throw std::runtime_error("config: run.horizons entries must come from {4, 24, 72, 168}"
                                     " (the full stay always runs as the reference)");
    }
    if (out_dir.empty()) throw std::runtime_error("config: run.out must be set");
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"ingest",  "distances", "embed",    "cluster",
                                                   "sweep",   "predict",   "horizons", "report"};
    return names;
}

namespace {

std::string hash_file(const std::string& path) {
    std::string content = read_file(path);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_bytes(content.data(), content.size())));
    return buf;
}

std::string hash_string(const std::string& s) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

struct Manifest {
    std::map<std::string, std::string> entries;

    static Manifest load(const std::string& path) {
        Manifest m;
        if (!fs::exists(path)) return m;
        for (const auto& line : read_lines(path)) {
            auto tab = line.find('\t');
            if (tab == std::string::npos) continue;
            m.entries[line.substr(0, tab)] = line.substr(tab + 1);
        }
        return m;
    }

    void save(const std::string& path) const {
        std::string out;
        for (const auto& [stage, fp] : entries) out += stage + "\t" + fp + "\n";
        write_file(path, out);
    }
};

/// Cohort data prepared for one horizon: records + imputed trajectories
/// (unscaled kept for static features, scaled for DTW).
struct Prepared {
    std::vector<cohort::PatientRecord> records;
    std::vector<cohort::PatientTrajectories> imputed;  // unscaled
    std::vector<cohort::PatientTrajectories> scaled;
    std::vector<std::string> patient_index;
    cohort::ScalerState scaler;
    std::vector<std::string> dropped;
};

struct LoadedInputs {
    cohort::Cohort raw;
    std::vector<cohort::PatientTrajectories> grouped;
    cohort::GemTable gem;
    cohort::IngestReport ingest_report;
};

LoadedInputs load_inputs(const PipelineConfig& cfg) {
    LoadedInputs in;
    in.raw = cohort::ingest_cohort(cfg.patients_path, cfg.vitals_path, cfg.diagnoses_path,
                                   &in.ingest_report);
    in.grouped = cohort::group_observations(in.raw.readings, cfg.window_minutes);
    in.gem = cohort::load_gem_table(cfg.gem_path);
    return in;
}

Prepared prepare(const LoadedInputs& in, std::optional<double> horizon_hours,
                 const PipelineConfig& cfg) {
    Prepared p;
    p.records = in.raw.records;
    // Records sorted to match the trajectory order (group_observations sorts
    // by patient id).
    std::sort(p.records.begin(), p.records.end(),
              [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
    auto grouped = in.grouped;
    cohort::HorizonReport report;
    cohort::truncate_horizon(grouped, p.records, horizon_hours, &report, cfg.window_minutes);
    p.dropped = report.dropped_patients;
    cohort::impute_missing(grouped);
    p.imputed = grouped;
    cohort::ScalerState scaler = cohort::scale_features(grouped);
    p.scaled = std::move(grouped);
    p.scaler = scaler;
    for (const auto& t : p.scaled) p.patient_index.push_back(t.patient_id);
    return p;
}

std::vector<dtw::DistanceMatrix> compute_feature_matrices(const Prepared& p,
                                                          const PipelineConfig& cfg) {
    std::optional<int> band;
    if (cfg.band > 0) band = cfg.band;
    std::vector<dtw::DistanceMatrix> mats;
    for (int f = 0; f < cohort::kNumVitals; ++f) {
        std::vector<std::vector<double>> series;
        series.reserve(p.scaled.size());
        for (const auto& t : p.scaled) series.push_back(t.values[f]);
        mats.push_back(dtw::feature_distance_matrix(
            series, p.patient_index, cohort::vital_name(static_cast<cohort::Vital>(f)), band,
            cfg.threads));
    }
    return mats;
}

json metrics_to_json(const riskmodel::MetricsReport& r) {
    auto stat = [](const riskmodel::MetricStat& s) {
        return json{{"mean", s.mean}, {"sd", s.sd}};
    };
    return json{{"auroc", stat(r.auroc)},           {"accuracy", stat(r.accuracy)},
                {"f1", stat(r.f1)},                 {"precision", stat(r.precision)},
                {"sensitivity", stat(r.sensitivity)}, {"specificity", stat(r.specificity)},
                {"brier", stat(r.brier)},           {"n_folds", r.n_folds}};
}

void write_metrics_json(const std::string& path, const riskmodel::PerClusterResult& result) {
    json out;
    out["pooled"] = metrics_to_json(result.pooled);
    out["clusters"] = json::object();
    for (const auto& [c, report] : result.per_cluster)
        out["clusters"][std::to_string(c)] = metrics_to_json(report);
    out["skipped"] = json::object();
    for (const auto& [c, reason] : result.skipped) out["skipped"][std::to_string(c)] = reason;
    write_file(path, out.dump(2) + "\n");
}

/// Runs SMOTE + final fit per population and writes model bundles and the
/// importances table.
void write_models_and_importances(const std::string& out_dir,
                                  const riskmodel::MixedDataset& table,
                                  const std::vector<int>& labels,
                                  const riskmodel::PerClusterResult& result,
                                  const riskmodel::EbmConfig& model_cfg, uint64_t seed) {
    fs::create_directories(out_dir + "/models");
    std::string importances = "model,term,importance\n";
    auto fit_and_dump = [&](const std::string& name, const riskmodel::MixedDataset& data,
                            uint64_t sub_seed) {
        riskmodel::MixedDataset balanced = riskmodel::smote_nc(data, 5, sub_seed);
        riskmodel::EbmConfig cfg = model_cfg;
        cfg.seed = sub_seed;
        auto model = riskmodel::fit_additive_model(balanced, cfg);
        riskmodel::write_model(out_dir + "/models/" + name + ".txt", model);
        for (const auto& [term, value] : riskmodel::feature_importance(model, balanced))
            importances += name + "," + term + "," + fmt_double(value) + "\n";
    };
    fit_and_dump("pooled", table, derive_seed(seed, "final-pooled"));
    for (const auto& [c, report] : result.per_cluster) {
        std::vector<int> rows;
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) rows.push_back(static_cast<int>(i));
        fit_and_dump("cluster_" + std::to_string(c), table.subset(rows),
                     derive_seed(seed, "final-cluster", c));
    }
    write_file(out_dir + "/importances.csv", importances);
}

std::vector<int> labels_in_index_order(const std::string& labels_path,
                                       const std::vector<std::string>& patient_index) {
    auto [ids, labels] = hdbscan::read_labels(labels_path);
    std::map<std::string, int> by_id;
    for (size_t i = 0; i < ids.size(); ++i) by_id[ids[i]] = labels[i];
    std::vector<int> out;
    out.reserve(patient_index.size());
    for (const auto& pid : patient_index) {
        auto it = by_id.find(pid);
        if (it == by_id.end())
            throw std::runtime_error("labels file is missing patient " + pid +
                                     "; re-run the cluster stage");
        out.push_back(it->second);
    }
    return out;
}

std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

riskmodel::MixedDataset build_feature_table(const std::vector<cohort::PatientRecord>& records,
                                            const std::vector<cohort::PatientTrajectories>& imputed,
                                            std::optional<double> horizon_hours,
                                            const cohort::GemTable& gem) {
    if (records.size() != imputed.size())
        throw std::invalid_argument("build_feature_table: record/trajectory count mismatch");
    riskmodel::MixedDataset table;
    const bool full = !horizon_hours.has_value();
    table.cont_names = {"age"};
    if (full) table.cont_names.push_back("length_of_stay");
    table.cont_names.push_back("n_unique_icd");
    for (int f = 0; f < cohort::kNumVitals; ++f)
        table.cont_names.push_back(std::string("mean_") +
                                   cohort::vital_name(static_cast<cohort::Vital>(f)));
    table.cat_names = {"gender", "first_careunit"};
    if (full) table.cat_names.push_back("last_careunit");
    table.cat_names.insert(table.cat_names.end(),
                           {"admission_type", "admission_location", "top_icd_class",
                            "second_icd_class"});
    table.cont_cols.resize(table.cont_names.size());
    table.cat_cols.resize(table.cat_names.size());

    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].patient_id != imputed[i].patient_id)
            throw std::invalid_argument("build_feature_table: record order mismatch at " +
                                        records[i].patient_id);
        auto sf = cohort::derive_static_features(records[i], imputed[i], horizon_hours, gem);
        size_t c = 0;
        table.cont_cols[c++].push_back(sf.age);
        if (full) table.cont_cols[c++].push_back(*sf.length_of_stay_days);
        table.cont_cols[c++].push_back(static_cast<double>(sf.n_unique_icd));
        for (int f = 0; f < cohort::kNumVitals; ++f)
            table.cont_cols[c++].push_back(sf.vital_means[f]);
        size_t g = 0;
        table.cat_cols[g++].push_back(sf.gender);
        table.cat_cols[g++].push_back(sf.first_careunit);
        if (full) table.cat_cols[g++].push_back(*sf.last_careunit);
        table.cat_cols[g++].push_back(sf.admission_type);
        table.cat_cols[g++].push_back(sf.admission_location);
        table.cat_cols[g++].push_back(sf.top_icd_class);
        table.cat_cols[g++].push_back(sf.second_icd_class);
        table.y.push_back(records[i].died_in_hospital ? 1 : 0);
    }
    return table;
}

namespace {

struct StageContext {
    const PipelineConfig& cfg;
    Manifest& manifest;
    std::string out;
    // Lazily loaded inputs shared by the stages of one run.
    std::optional<LoadedInputs> inputs;

    LoadedInputs& loaded() {
        if (!inputs) inputs = load_inputs(cfg);
        return *inputs;
    }

    std::string inputs_fingerprint() {
        return hash_file(cfg.patients_path) + hash_file(cfg.vitals_path) +
               hash_file(cfg.diagnoses_path) + hash_file(cfg.gem_path);
    }
};

std::string umap_param_string(const umap::UmapParams& p) {
    std::ostringstream s;
    s << p.k << "," << p.min_dist << "," << p.spread << "," << p.dims << "," << p.n_epochs << ","
      << p.negative_sample_rate << "," << p.initial_learning_rate;
    return s.str();
}

std::string model_param_string(const PipelineConfig& cfg) {
    std::ostringstream s;
    const auto& m = cfg.model;
    s << m.max_bins << "," << m.pair_bins << "," << m.learning_rate << "," << m.n_rounds << ","
      << m.n_bags << "," << m.n_pairs << "," << m.early_stop_rounds << "," << cfg.folds << ","
      << cfg.threshold;
    return s.str();
}

void stage_ingest(StageContext& ctx) {
    auto& in = ctx.loaded();
    size_t deaths = 0;
    for (const auto& r : in.raw.records) deaths += r.died_in_hospital ? 1 : 0;
    std::ostringstream out;
    out << "patients: " << in.ingest_report.n_patients << "\n"
        << "readings: " << in.ingest_report.n_readings << "\n"
        << "diagnoses: " << in.ingest_report.n_diagnoses << "\n"
        << "mortality_rate: "
        << fmt3(static_cast<double>(deaths) / static_cast<double>(in.raw.records.size())) << "\n";
    write_file(ctx.out + "/cohort_summary.txt", out.str());
    std::cout << out.str();
}

void stage_distances(StageContext& ctx) {
    auto& in = ctx.loaded();
    Prepared p = prepare(in, std::nullopt, ctx.cfg);
    fs::create_directories(ctx.out + "/dtw");
    auto mats = compute_feature_matrices(p, ctx.cfg);
    for (const auto& m : mats) dtw::write_matrix(ctx.out + "/dtw/" + m.feature_tag + ".tcdm", m);
    auto total = dtw::total_distance_matrix(mats);
    dtw::write_matrix(ctx.out + "/dtw/total.tcdm", total);
    dtw::write_patient_index(ctx.out + "/dtw/patient_index.txt", p.patient_index);
    std::cout << "distances: " << total.n << " patients, 8 feature matrices + total\n";
}

void stage_embed(StageContext& ctx) {
    const std::string matrix_path = ctx.out + "/dtw/total.tcdm";
    if (!fs::exists(matrix_path))
        throw std::runtime_error("missing upstream artifact " + matrix_path +
                                 "; run the distances stage first");
    auto total = dtw::read_matrix(matrix_path);
    total.patient_index = dtw::read_patient_index(ctx.out + "/dtw/patient_index.txt");
    umap::UmapParams params = ctx.cfg.umap_params;
    params.seed = derive_seed(ctx.cfg.seed, "umap");
    auto embedding = umap::embed(total, params);
    umap::write_embedding(ctx.out + "/embedding.csv", embedding);
    std::cout << "embed: " << embedding.n << " points to " << embedding.dims << "-d\n";
}

void stage_cluster(StageContext& ctx) {
    const std::string emb_path = ctx.out + "/embedding.csv";
    if (!fs::exists(emb_path))
        throw std::runtime_error("missing upstream artifact " + emb_path +
                                 "; run the embed stage first");
    auto embedding = umap::read_embedding(emb_path);
    auto matrix = hdbscan::euclidean_matrix(embedding.coords, embedding.n, embedding.dims);
    auto core = hdbscan::core_distances(matrix, ctx.cfg.min_samples);
    auto mreach = hdbscan::mutual_reachability(matrix, core);
    auto mst = hdbscan::build_mst(mreach);
    auto tree = hdbscan::condense_tree(mst, embedding.n, ctx.cfg.min_cluster_size);
    auto labeling = hdbscan::extract_clusters_eom(tree);
    hdbscan::write_labels(ctx.out + "/labels.csv", embedding.patient_index, labeling.labels);
    hdbscan::write_tree(ctx.out + "/tree.csv", tree);
    int noise = 0;
    for (int l : labeling.labels) noise += l < 0;
    std::cout << "cluster: " << labeling.n_clusters << " clusters, " << noise << " noise points\n";
}

void stage_sweep(StageContext& ctx) {
    const std::string emb_path = ctx.out + "/embedding.csv";
    if (!fs::exists(emb_path))
        throw std::runtime_error("missing upstream artifact " + emb_path +
                                 "; run the embed stage first");
    auto embedding = umap::read_embedding(emb_path);
    auto sweep =
        validity::sweep_parameter(embedding.coords, embedding.n, embedding.dims, ctx.cfg.sweep_grid);
    validity::write_sweep(ctx.out + "/sweep.csv", sweep);
    if (sweep.selected) {
        std::cout << "sweep: selected min_samples=" << *sweep.selected << "\n";
    } else {
        std::cout << "sweep: no grid value produced >= 2 clusters\n";
    }
}

void stage_predict(StageContext& ctx) {
    const std::string labels_path = ctx.out + "/labels.csv";
    if (!fs::exists(labels_path))
        throw std::runtime_error("missing upstream artifact " + labels_path +
                                 "; run the cluster stage first");
    auto& in = ctx.loaded();
    Prepared p = prepare(in, std::nullopt, ctx.cfg);
    auto labels = labels_in_index_order(labels_path, p.patient_index);
    auto table = build_feature_table(p.records, p.imputed, std::nullopt, in.gem);
    riskmodel::EbmConfig model_cfg = ctx.cfg.model;
    auto result = riskmodel::train_per_cluster(table, labels, model_cfg, ctx.cfg.folds,
                                               derive_seed(ctx.cfg.seed, "predict"),
                                               ctx.cfg.threshold);
    write_metrics_json(ctx.out + "/metrics.json", result);
    write_models_and_importances(ctx.out, table, labels, result, model_cfg,
                                 derive_seed(ctx.cfg.seed, "predict-final"));
    std::cout << "predict: " << result.per_cluster.size() << " cluster models + pooled ("
              << result.skipped.size() << " skipped)\n";
}

void stage_horizons(StageContext& ctx) {
    const std::string labels_path = ctx.out + "/labels.csv";
    if (!fs::exists(labels_path))
        throw std::runtime_error("missing upstream artifact " + labels_path +
                                 "; run the cluster stage first");
    auto& in = ctx.loaded();
    Prepared full = prepare(in, std::nullopt, ctx.cfg);
    auto full_labels = labels_in_index_order(labels_path, full.patient_index);
    std::map<std::string, int> full_label_of;
    for (size_t i = 0; i < full.patient_index.size(); ++i)
        full_label_of[full.patient_index[i]] = full_labels[i];

    std::string consistency_csv = "horizon_hours,cluster,n_reference,n_matched,fraction\n";
    std::string horizon_metrics_csv = "horizon_hours,model,auroc,accuracy,f1,precision,sensitivity,"
                                      "specificity,brier\n";

    for (double h : ctx.cfg.horizons) {
        std::ostringstream dirname;
        dirname << ctx.out << "/horizon_" << h;
        const std::string hdir = dirname.str();
        fs::create_directories(hdir);

        Prepared p = prepare(in, h, ctx.cfg);
        auto mats = compute_feature_matrices(p, ctx.cfg);
        auto total = dtw::total_distance_matrix(mats);
        dtw::write_matrix(hdir + "/total.tcdm", total);
        dtw::write_patient_index(hdir + "/patient_index.txt", p.patient_index);

        umap::UmapParams params = ctx.cfg.umap_params;
        params.seed = derive_seed(ctx.cfg.seed, "umap-horizon", static_cast<uint64_t>(h));
        auto embedding = umap::embed(total, params);
        umap::write_embedding(hdir + "/embedding.csv", embedding);

        auto labeling = hdbscan::cluster_points(embedding.coords, embedding.n, embedding.dims,
                                                ctx.cfg.min_samples, ctx.cfg.min_cluster_size);
        hdbscan::write_labels(hdir + "/labels.csv", p.patient_index, labeling.labels);

        // Consistency against the full-stay labeling, over the patients
        // still present at this horizon.
        std::vector<int> ref;
        ref.reserve(p.patient_index.size());
        for (const auto& pid : p.patient_index) ref.push_back(full_label_of.at(pid));
        auto match = validity::match_labels(ref, labeling.labels);
        std::map<int, std::pair<int, int>> per_cluster;  // ref cluster -> (n_ref, n_match)
        for (size_t i = 0; i < ref.size(); ++i) {
            if (ref[i] < 0) continue;
            auto& slot = per_cluster[ref[i]];
            ++slot.first;
            int mapped = -1;
            if (labeling.labels[i] >= 0) {
                auto it = match.mapping.find(labeling.labels[i]);
                mapped = it != match.mapping.end() ? it->second : -2;
            }
            if (mapped == ref[i]) ++slot.second;
        }
        for (const auto& [c, counts] : per_cluster) {
            consistency_csv += fmt_double(h) + "," + std::to_string(c) + "," +
                               std::to_string(counts.first) + "," + std::to_string(counts.second) +
                               "," +
                               fmt_double(static_cast<double>(counts.second) / counts.first) + "\n";
        }

        // Horizon risk models: no last_careunit / length_of_stay.
        auto table = build_feature_table(p.records, p.imputed, h, in.gem);
        auto result = riskmodel::train_per_cluster(
            table, labeling.labels, ctx.cfg.model, ctx.cfg.folds,
            derive_seed(ctx.cfg.seed, "predict-horizon", static_cast<uint64_t>(h)),
            ctx.cfg.threshold);
        write_metrics_json(hdir + "/metrics.json", result);
        auto add_row = [&](const std::string& name, const riskmodel::MetricsReport& r) {
            horizon_metrics_csv += fmt_double(h) + "," + name + "," + fmt_double(r.auroc.mean) + "," +
                                   fmt_double(r.accuracy.mean) + "," + fmt_double(r.f1.mean) + "," +
                                   fmt_double(r.precision.mean) + "," +
                                   fmt_double(r.sensitivity.mean) + "," +
                                   fmt_double(r.specificity.mean) + "," + fmt_double(r.brier.mean) +
                                   "\n";
        };
        add_row("pooled", result.pooled);
        for (const auto& [c, r] : result.per_cluster) add_row("cluster_" + std::to_string(c), r);
        std::cout << "horizon " << h << "h: " << labeling.n_clusters << " clusters, consistency "
                  << fmt3(match.consistency_fraction) << "\n";
    }
    write_file(ctx.out + "/horizon_consistency.csv", consistency_csv);
    write_file(ctx.out + "/metrics_by_horizon.csv", horizon_metrics_csv);
}

void stage_report(StageContext& ctx) {
    auto& in = ctx.loaded();
    Prepared p = prepare(in, std::nullopt, ctx.cfg);

    std::ostringstream md;
    md << "# Pipeline report\n\n";
    size_t deaths = 0;
    for (const auto& r : p.records) deaths += r.died_in_hospital ? 1 : 0;
    md << "Cohort: " << p.records.size() << " patients, in-hospital mortality "
       << fmt1(100.0 * static_cast<double>(deaths) / p.records.size()) << "%.\n\n";

    const std::string labels_path = ctx.out + "/labels.csv";
    if (fs::exists(labels_path)) {
        auto labels = labels_in_index_order(labels_path, p.patient_index);
        std::set<int> label_set;
        for (int l : labels) label_set.insert(l);

        md << "## Cluster characterization\n\n";
        md << "| cluster | n | mortality % | age | LOS days | top ICD class |";
        for (int f = 0; f < cohort::kNumVitals; ++f)
            md << " " << cohort::vital_name(static_cast<cohort::Vital>(f)) << " |";
        md << "\n|---|---|---|---|---|---|";
        for (int f = 0; f < cohort::kNumVitals; ++f) md << "---|";
        md << "\n";
        for (int c : label_set) {
            std::vector<size_t> members;
            for (size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == c) members.push_back(i);
            if (members.empty()) continue;
            double mortality = 0, age = 0, los = 0;
            std::map<std::string, int> top_counts;
            std::array<double, cohort::kNumVitals> vmeans{};
            for (size_t i : members) {
                mortality += p.records[i].died_in_hospital ? 1.0 : 0.0;
                age += p.records[i].age;
                los += p.records[i].length_of_stay_days();
                auto sf = cohort::derive_static_features(p.records[i], p.imputed[i], std::nullopt,
                                                         in.gem);
                ++top_counts[sf.top_icd_class];
                for (int f = 0; f < cohort::kNumVitals; ++f) vmeans[f] += sf.vital_means[f];
            }
            const double n = static_cast<double>(members.size());
            std::string top_class = "-";
            int best = 0;
            for (const auto& [cls, count] : top_counts) {
                if (count > best) {
                    best = count;
                    top_class = cls;
                }
            }
            md << "| " << (c < 0 ? std::string("noise") : std::to_string(c)) << " | "
               << members.size() << " | " << fmt1(100.0 * mortality / n) << " | " << fmt1(age / n)
               << " | " << fmt1(los / n) << " | " << top_class << " |";
            for (int f = 0; f < cohort::kNumVitals; ++f) md << " " << fmt1(vmeans[f] / n) << " |";
            md << "\n";
        }
        md << "\n";
    }

    const std::string metrics_path = ctx.out + "/metrics.json";
    if (fs::exists(metrics_path)) {
        json metrics = json::parse(read_file(metrics_path));
        md << "## Mortality model performance (mean over folds, SD in parentheses)\n\n";
        std::vector<std::string> cols = {"pooled"};
        for (const auto& [key, value] : metrics["clusters"].items()) cols.push_back(key);
        md << "| metric |";
        for (const auto& c : cols) md << " " << (c == "pooled" ? c : "cluster " + c) << " |";
        md << "\n|---|";
        for (size_t i = 0; i < cols.size(); ++i) md << "---|";
        md << "\n";
        for (const std::string metric :
             {"auroc", "accuracy", "f1", "precision", "sensitivity", "specificity", "brier"}) {
            md << "| " << metric << " |";
            for (const auto& c : cols) {
                const json& node =
                    c == "pooled" ? metrics["pooled"][metric] : metrics["clusters"][c][metric];
                md << " " << fmt3(node["mean"].get<double>()) << " ("
                   << fmt3(node["sd"].get<double>()) << ") |";
            }
            md << "\n";
        }
        if (!metrics["skipped"].empty()) {
            md << "\nSkipped clusters:\n";
            for (const auto& [key, reason] : metrics["skipped"].items())
                md << "- cluster " << key << ": " << reason.get<std::string>() << "\n";
        }
        md << "\n";
    }

    const std::string consistency_path = ctx.out + "/horizon_consistency.csv";
    if (fs::exists(consistency_path)) {
        md << "## Cluster assignment consistency across horizons\n\n";
        md << "Fraction of each full-stay cluster assigned the same (matched) label when only a\n"
              "prefix of the stay is used.\n\n";
        md << "| horizon (h) | cluster | n | matched | fraction |\n|---|---|---|---|---|\n";
        auto lines = read_lines(consistency_path);
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto f = split_csv(lines[i]);
            md << "| " << f[0] << " | " << f[1] << " | " << f[2] << " | " << f[3] << " | " << f[4]
               << " |\n";
        }
        md << "\n";
    }

    write_file(ctx.out + "/report.md", md.str());
    std::cout << "report: wrote " << ctx.out << "/report.md\n";
}

}  // namespace

int run(const PipelineConfig& cfg, const std::vector<std::string>& stages) {
    cfg.validate();
    for (const auto& s : stages) {
        if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end())
            throw std::runtime_error("unknown stage: " + s);
    }
    fs::create_directories(cfg.out_dir);
    const std::string manifest_path = cfg.out_dir + "/manifest.txt";
    Manifest manifest = Manifest::load(manifest_path);
    StageContext ctx{cfg, manifest, cfg.out_dir, std::nullopt};

    auto requested = [&](const std::string& s) {
        return std::find(stages.begin(), stages.end(), s) != stages.end();
    };

    // Fingerprints chain so that a parameter change upstream re-runs
    // everything downstream.
    const std::string base = ctx.inputs_fingerprint() + std::to_string(cfg.window_minutes);
    std::map<std::string, std::string> fingerprint;
    fingerprint["ingest"] = hash_string(base);
    fingerprint["distances"] =
        hash_string(base + "|dtw:" + std::to_string(cfg.band) + "," + std::to_string(cfg.seed));
    fingerprint["embed"] = hash_string(fingerprint["distances"] + "|umap:" +
                                       umap_param_string(cfg.umap_params) + "," +
                                       std::to_string(cfg.seed));
    fingerprint["cluster"] =
        hash_string(fingerprint["embed"] + "|hdbscan:" + std::to_string(cfg.min_samples) + "," +
                    std::to_string(cfg.min_cluster_size));
    {
        std::string grid;
        for (int v : cfg.sweep_grid) grid += std::to_string(v) + ",";
        fingerprint["sweep"] = hash_string(fingerprint["embed"] + "|sweep:" + grid);
    }
    fingerprint["predict"] =
        hash_string(fingerprint["cluster"] + "|model:" + model_param_string(cfg));
    {
        std::string hz;
        for (double h : cfg.horizons) hz += fmt_double(h) + ",";
        fingerprint["horizons"] = hash_string(fingerprint["predict"] + "|horizons:" + hz);
    }
    fingerprint["report"] = hash_string(fingerprint["horizons"] + "|report");

    std::map<std::string, std::vector<std::string>> artifacts = {
        {"ingest", {"cohort_summary.txt"}},
        {"distances", {"dtw/total.tcdm", "dtw/patient_index.txt"}},
        {"embed", {"embedding.csv"}},
        {"cluster", {"labels.csv", "tree.csv"}},
        {"sweep", {"sweep.csv"}},
        {"predict", {"metrics.json", "importances.csv"}},
        {"horizons", {"horizon_consistency.csv", "metrics_by_horizon.csv"}},
        {"report", {"report.md"}},
    };

    for (const auto& stage : stage_names()) {
        if (!requested(stage)) continue;
        bool cached = manifest.entries.count(stage) && manifest.entries[stage] == fingerprint[stage];
        if (cached) {
            for (const auto& a : artifacts[stage])
                if (!fs::exists(cfg.out_dir + "/" + a)) cached = false;
        }
        if (cached) {
            std::cout << stage << ": cached\n";
            continue;
        }
        if (stage == "ingest") stage_ingest(ctx);
        else if (stage == "distances") stage_distances(ctx);
        else if (stage == "embed") stage_embed(ctx);
        else if (stage == "cluster") stage_cluster(ctx);
        else if (stage == "sweep") stage_sweep(ctx);
        else if (stage == "predict") stage_predict(ctx);
        else if (stage == "horizons") stage_horizons(ctx);
        else if (stage == "report") stage_report(ctx);
        manifest.entries[stage] = fingerprint[stage];
        manifest.save(manifest_path);
    }
    return 0;
}

}  // namespace icutraj::pipeline
