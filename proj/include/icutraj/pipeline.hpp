#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icutraj/cohort.hpp"
#include "icutraj/riskmodel.hpp"
#include "icutraj/umap.hpp"

namespace icutraj::pipeline {

struct PipelineConfig {
    // [input]
    std::string patients_path, vitals_path, diagnoses_path, gem_path;
    // [cohort]
    int window_minutes = 30;
    // [dtw]
    int band = 0;  // 0 = unconstrained
    int threads = 1;
    // [umap]
    umap::UmapParams umap_params;
    // [hdbscan]
    int min_samples = 60;
    int min_cluster_size = 60;
    // [sweep]
    std::vector<int> sweep_grid = {20, 40, 60, 80};
    // [model]
    riskmodel::EbmConfig model;
    int folds = 10;
    double threshold = 0.5;
    // [run]
    std::string out_dir = "out";
    uint64_t seed = 1234;
    std::vector<double> horizons = {4, 24, 72, 168};  // hours; full stay is the reference run

    static PipelineConfig parse_file(const std::string& path);
    /// Throws naming the offending field.
    void validate() const;
};

/// Canonical stage order; `stages` entries must come from this list.
const std::vector<std::string>& stage_names();

/// Runs the requested stages in dependency order. Each stage writes its
/// artifacts under the output directory plus a manifest line (input and
/// parameter fingerprint); a stage with a matching manifest line and
/// existing artifacts is skipped. Returns 0 on success.
int run(const PipelineConfig& config, const std::vector<std::string>& stages);

/// Feature table for the risk models at a given horizon (finite horizons
/// drop last_careunit and length_of_stay).
riskmodel::MixedDataset build_feature_table(const std::vector<cohort::PatientRecord>& records,
                                            const std::vector<cohort::PatientTrajectories>& imputed,
                                            std::optional<double> horizon_hours,
                                            const cohort::GemTable& gem);

}  // namespace icutraj::pipeline
