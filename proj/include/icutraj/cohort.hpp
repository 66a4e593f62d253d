#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace icutraj::cohort {

enum class Vital : int {
    RespirationRate = 0,
    OxygenSaturation,
    Temperature,
    SystolicBp,
    HeartRate,
    GcsEye,
    GcsVerbal,
    GcsMotor,
};

constexpr int kNumVitals = 8;

const char* vital_name(Vital v);
std::optional<Vital> vital_from_name(std::string_view name);

/// Temperature, systolic BP, respiration rate and GCS eye are z-scored;
/// the other four vitals get min-max scaling.
bool vital_uses_zscore(Vital v);

struct RawReading {
    std::string patient_id;
    Vital feature;
    double t_minutes = 0.0;
    double value = 0.0;
};

struct IcdCode {
    std::string code;
    int version = 9;  // 9 or 10
};

struct PatientRecord {
    std::string patient_id;
    double age = 0.0;
    std::string gender;
    std::string first_careunit;
    std::string last_careunit;
    std::string admission_type;
    std::string admission_location;
    int64_t admit_time = 0;      // minutes since epoch
    int64_t discharge_time = 0;  // minutes since epoch
    bool died_in_hospital = false;
    std::vector<IcdCode> icd_codes;

    double length_of_stay_days() const {
        return static_cast<double>(discharge_time - admit_time) / 1440.0;
    }
};

/// All eight per-feature window series for one patient. Windows are tumbling
/// 30-minute intervals anchored at admission; NaN marks a window with no
/// reading of that feature (gone after imputation).
struct PatientTrajectories {
    std::string patient_id;
    int n_windows = 0;
    std::array<std::vector<double>, kNumVitals> values;
};

struct ScalerState {
    struct FeatureStats {
        bool zscore = false;
        double mean = 0.0, sd = 1.0;  // z-score features
        double min = 0.0, max = 1.0;  // min-max features
    };
    std::array<FeatureStats, kNumVitals> by_feature;

    double apply(Vital v, double raw) const;
    double invert(Vital v, double scaled) const;
};

struct StaticFeatureVector {
    std::string patient_id;
    double age = 0.0;
    std::string gender;
    std::string first_careunit;
    std::optional<std::string> last_careunit;
    std::string admission_type;
    std::string admission_location;
    std::optional<double> length_of_stay_days;
    std::string top_icd_class;
    std::string second_icd_class;
    int n_unique_icd = 0;
    std::array<double, kNumVitals> vital_means{};
};

struct Cohort {
    std::vector<PatientRecord> records;
    std::vector<RawReading> readings;
};

struct IngestReport {
    size_t n_patients = 0;
    size_t n_readings = 0;
    size_t n_diagnoses = 0;
};

/// Parses the three cohort CSVs. Malformed rows, readings for unknown
/// patients, duplicate patient ids and an empty vitals file all throw with
/// the offending file and line number in the message.
Cohort ingest_cohort(const std::string& patients_path, const std::string& vitals_path,
                     const std::string& diagnoses_path, IngestReport* report = nullptr);

/// Tumbling-window grouping: window i covers [i*w, (i+1)*w) minutes from
/// admission; co-windowed readings of one feature are averaged. The per
/// patient window count spans to the last observed window of any feature.
std::vector<PatientTrajectories> group_observations(const std::vector<RawReading>& readings,
                                                    int window_minutes = 30);

/// Fills every missing window with the patient's mean over observed windows
/// of that feature. Throws if a feature is entirely unobserved for a patient.
void impute_missing(std::vector<PatientTrajectories>& trajectories);

/// Cohort-level scaling; stats are computed across all patients and windows.
/// Throws on a degenerate feature (zero variance or min == max).
ScalerState scale_features(std::vector<PatientTrajectories>& trajectories);

// --- ICD mapping ---

using GemTable = std::unordered_map<std::string, std::string>;  // icd10 -> icd9

/// GEM file: whitespace-separated "icd10 icd9 flags" rows; flags ignored.
GemTable load_gem_table(const std::string& path);

/// Top-level ICD-9 chapter of a code, e.g. "4019" -> "390-459 circulatory".
/// ICD-10 codes go through the GEM table first; unmappable ones return
/// "UNKNOWN". Pure function of its inputs.
std::string map_icd(const std::string& code, int system, const GemTable& gem,
                    size_t* unknown_counter = nullptr);

std::string icd9_chapter(const std::string& icd9_code);

// --- Horizons ---

struct HorizonReport {
    std::vector<std::string> dropped_patients;  // no observed window of some feature
};

/// Keeps windows whose start lies before the horizon. Patients left without
/// any observed window of some feature are dropped (and reported), matching
/// records are filtered alongside. Pass nullopt for the full stay (identity
/// on trajectories). Throws if horizon_hours <= 0.
void truncate_horizon(std::vector<PatientTrajectories>& grouped,
                      std::vector<PatientRecord>& records,
                      std::optional<double> horizon_hours, HorizonReport* report = nullptr,
                      int window_minutes = 30);

/// Static features for the risk models. ICD codes are reduced to chapters
/// via `gem`; top/second class ties break lexicographically. Vital means are
/// taken from the (truncated) imputed unscaled trajectories. last_careunit
/// and length_of_stay are absent for finite horizons.
StaticFeatureVector derive_static_features(const PatientRecord& record,
                                           const PatientTrajectories& trajectories,
                                           std::optional<double> horizon_hours,
                                           const GemTable& gem);

// --- Timestamps ---

/// "YYYY-MM-DDTHH:MM:SS" (or space separator) -> minutes since 1970-01-01.
int64_t parse_iso8601_minutes(std::string_view ts);
std::string format_iso8601_minutes(int64_t minutes);

}  // namespace icutraj::cohort
