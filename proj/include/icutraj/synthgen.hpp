#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icutraj/cohort.hpp"

namespace icutraj::synthgen {

struct FeatureTemplate {
    double baseline = 0.0;
    double drift_per_hour = 0.0;
    double osc_amplitude = 0.0;
};

struct ArchetypeSpec {
    std::string archetype_id;
    std::array<FeatureTemplate, cohort::kNumVitals> templates;
    double mortality_rate = 0.1;
    double mean_los_days = 2.0;
    std::map<std::string, double> icd_class_distribution;  // chapter -> weight
    int n_patients = 100;

    double age_mean = 63.0;
    double age_sd = 16.0;
    // Log-odds shift per standard unit of age; gives per-cluster models an
    // age signal to find.
    double age_mortality_slope = 0.3;
    // Optional extra risk driver: the patient's baseline deviation of one
    // vital, in jitter units.
    std::optional<cohort::Vital> risk_vital;
    double risk_vital_slope = 0.0;

    void validate() const;
};

struct GenOptions {
    double noise_level = 1.0;
    uint64_t seed = 20240108;
    double mean_gap_minutes = 60.0;
    double blank_fraction = 0.075;  // feature-windows blanked to exercise imputation
};

struct GenSummary {
    size_t n_patients = 0;
    size_t n_reading_sets = 0;
    size_t n_readings = 0;
    size_t n_deaths = 0;
};

/// Writes patients.csv, vitals.csv, diagnoses.csv and truth_labels.csv under
/// `out_dir`. Byte-identical output for identical (specs, options).
GenSummary generate_cohort(const std::vector<ArchetypeSpec>& specs, const GenOptions& options,
                           const std::string& out_dir);

/// Six archetypes spanning a realistic range of ICU presentations
/// (mortality 4.8-58%, stay lengths 1.2-5.6 days), 100 patients each.
std::vector<ArchetypeSpec> default_archetypes();

/// Archetype spec file: one [archetype <id>] section per archetype plus an
/// optional [generator] section for GenOptions.
std::pair<std::vector<ArchetypeSpec>, GenOptions> load_spec_file(const std::string& path);

/// ICD codes the generator draws from, keyed by chapter; every ICD-10 entry
/// is resolvable through the bundled GEM fixture.
const std::map<std::string, std::vector<cohort::IcdCode>>& icd_code_pool();

}  // namespace icutraj::synthgen
