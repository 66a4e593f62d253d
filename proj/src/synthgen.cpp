#include "icutraj/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "icutraj/config.hpp"
#include "icutraj/csv.hpp"
#include "icutraj/rng.hpp"

namespace icutraj::synthgen {

using cohort::kNumVitals;
using cohort::Vital;

namespace {

// Per-feature measurement noise (one reading), per-patient baseline jitter,
// and physiological clamp ranges. Indexed by Vital order.
const double kNoiseSd[kNumVitals] = {1.2, 1.0, 0.22, 5.0, 4.0, 0.30, 0.35, 0.30};
const double kJitterSd[kNumVitals] = {0.8, 0.8, 0.12, 4.0, 3.5, 0.18, 0.25, 0.20};
const double kClampLo[kNumVitals] = {4.0, 55.0, 33.0, 50.0, 20.0, 1.0, 1.0, 1.0};
const double kClampHi[kNumVitals] = {60.0, 100.0, 42.0, 250.0, 220.0, 4.0, 5.0, 6.0};

constexpr double kOscPeriodHours = 12.0;

double logit(double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

std::string pick_weighted(Rng& rng, const std::vector<std::pair<std::string, double>>& items) {
    double total = 0.0;
    for (const auto& [k, w] : items) total += w;
    double r = rng.next_double() * total;
    for (const auto& [k, w] : items) {
        r -= w;
        if (r < 0.0) return k;
    }
    return items.back().first;
}

const std::vector<std::string> kCareUnits = {"MICU", "SICU", "CCU", "TSICU", "CVICU"};
const std::vector<std::pair<std::string, double>> kAdmissionTypes = {
    {"EMERGENCY", 0.6}, {"URGENT", 0.2}, {"ELECTIVE", 0.2}};
const std::vector<std::pair<std::string, double>> kAdmissionLocations = {
    {"EMERGENCY ROOM", 0.45},
    {"PHYSICIAN REFERRAL", 0.25},
    {"TRANSFER FROM HOSPITAL", 0.2},
    {"CLINIC REFERRAL", 0.1}};

}  // namespace

void ArchetypeSpec::validate() const {
    if (archetype_id.empty()) throw std::invalid_argument("archetype: empty id");
    if (mortality_rate < 0.0 || mortality_rate > 1.0)
        throw std::invalid_argument("archetype " + archetype_id + ": mortality_rate outside [0,1]");
    if (n_patients < 1) throw std::invalid_argument("archetype " + archetype_id + ": n_patients < 1");
    if (mean_los_days <= 0.0)
        throw std::invalid_argument("archetype " + archetype_id + ": mean_los_days must be > 0");
    if (icd_class_distribution.empty())
        throw std::invalid_argument("archetype " + archetype_id + ": empty icd_class_distribution");
    for (const auto& [cls, w] : icd_class_distribution) {
        if (w < 0.0) throw std::invalid_argument("archetype " + archetype_id + ": negative icd weight");
    }
    if (age_sd <= 0.0) throw std::invalid_argument("archetype " + archetype_id + ": age_sd must be > 0");
}

const std::map<std::string, std::vector<cohort::IcdCode>>& icd_code_pool() {
    static const std::map<std::string, std::vector<cohort::IcdCode>> pool = {
        {"001-139 infectious", {{"0389", 9}, {"00845", 9}, {"A419", 10}, {"A0472", 10}}},
        {"140-239 neoplasms", {{"1629", 9}, {"1539", 9}, {"C349", 10}, {"C189", 10}}},
        {"240-279 endocrine",
         {{"25000", 9}, {"2724", 9}, {"2762", 9}, {"E119", 10}, {"E785", 10}, {"E872", 10}}},
        {"280-289 blood", {{"2859", 9}, {"2851", 9}, {"D649", 10}, {"D62", 10}}},
        {"290-319 mental", {{"311", 9}, {"29181", 9}, {"F329", 10}}},
        {"320-389 nervous", {{"3310", 9}, {"34590", 9}, {"G309", 10}, {"G40909", 10}}},
        {"390-459 circulatory",
         {{"4019", 9},
          {"42731", 9},
          {"41071", 9},
          {"43491", 9},
          {"4241", 9},
          {"41401", 9},
          {"I10", 10},
          {"I4891", 10},
          {"I214", 10},
          {"I639", 10},
          {"I350", 10},
          {"I2510", 10}}},
        {"460-519 respiratory",
         {{"486", 9},
          {"496", 9},
          {"51881", 9},
          {"5119", 9},
          {"J189", 10},
          {"J449", 10},
          {"J9600", 10},
          {"J90", 10}}},
        {"520-579 digestive",
         {{"53081", 9}, {"5712", 9}, {"5569", 9}, {"K219", 10}, {"K7030", 10}, {"K5190", 10}}},
        {"580-629 genitourinary", {{"5849", 9}, {"5990", 9}, {"N179", 10}, {"N390", 10}}},
        {"680-709 skin", {{"6829", 9}, {"L0390", 10}}},
        {"710-739 musculoskeletal",
         {{"7100", 9}, {"71590", 9}, {"M329", 10}, {"M1990", 10}}},
        {"780-799 ill-defined", {{"78552", 9}, {"7802", 9}, {"R6521", 10}, {"R55", 10}}},
        {"800-999 injury", {{"9594", 9}, {"S0990XA", 10}}},
        {"V01-V91 supplementary", {{"V5861", 9}, {"V4986", 9}}},
        {"E800-E999 external", {{"E8809", 9}, {"E8497", 9}}},
    };
    return pool;
}

namespace {
ArchetypeSpec make_archetype(const std::string& id, std::array<FeatureTemplate, kNumVitals> tpl,
                             double mortality, double los, double age_mean, double age_sd,
                             std::map<std::string, double> icd, int n) {
    ArchetypeSpec a;
    a.archetype_id = id;
    a.templates = tpl;
    a.mortality_rate = mortality;
    a.mean_los_days = los;
    a.age_mean = age_mean;
    a.age_sd = age_sd;
    a.icd_class_distribution = std::move(icd);
    a.n_patients = n;
    return a;
}
}  // namespace

std::vector<ArchetypeSpec> default_archetypes() {
    // Feature order: resp, sats, temp, sbp, hr, gcs_eye, gcs_verbal, gcs_motor.
    std::vector<ArchetypeSpec> specs;
    specs.push_back(make_archetype(
        "stable_awake",
        {{{17.0, 0.0, 1.0},
          {95.9, 0.0, 0.6},
          {36.8, 0.0, 0.08},
          {116.0, 0.0, 4.0},
          {84.3, 0.0, 3.0},
          {3.9, 0.0, 0.04},
          {4.7, 0.0, 0.05},
          {5.9, 0.0, 0.04}}},
        0.063, 1.15, 63.7, 17.0,
        {{"460-519 respiratory", 0.45},
         {"390-459 circulatory", 0.15},
         {"780-799 ill-defined", 0.10},
         {"240-279 endocrine", 0.10},
         {"580-629 genitourinary", 0.10},
         {"520-579 digestive", 0.10}},
        100));
    specs.push_back(make_archetype(
        "sedated_long",
        {{{12.0, 0.0, 0.8},
          {99.0, 0.0, 0.4},
          {36.6, 0.0, 0.12},
          {108.0, 0.0, 3.5},
          {104.0, 0.0, 5.0},
          {2.2, 0.0, 0.08},
          {2.0, 0.0, 0.08},
          {4.2, 0.0, 0.10}}},
        0.26, 5.55, 61.8, 15.4,
        {{"390-459 circulatory", 0.50},
         {"280-289 blood", 0.10},
         {"460-519 respiratory", 0.15},
         {"240-279 endocrine", 0.15},
         {"580-629 genitourinary", 0.10}},
        100));
    specs.push_back(make_archetype(
        "comatose_deteriorating",
        {{{16.7, 0.02, 1.2},
          {97.6, -0.02, 0.8},
          {37.3, 0.006, 0.15},
          {115.0, -0.15, 4.5},
          {90.2, 0.18, 5.0},
          {1.1, 0.0, 0.03},
          {1.3, 0.0, 0.05},
          {3.2, -0.01, 0.10}}},
        0.58, 2.65, 68.6, 14.5,
        {{"390-459 circulatory", 0.55},
         {"320-389 nervous", 0.15},
         {"460-519 respiratory", 0.15},
         {"780-799 ill-defined", 0.15}},
        100));
    specs.push_back(make_archetype(
        "recovering",
        {{{15.1, -0.01, 0.8},
          {97.5, 0.01, 0.5},
          {37.4, -0.008, 0.08},
          {115.0, 0.05, 3.5},
          {86.0, -0.12, 3.5},
          {2.2, 0.02, 0.05},
          {2.0, 0.03, 0.08},
          {4.2, 0.02, 0.08}}},
        0.048, 2.45, 62.3, 16.5,
        {{"390-459 circulatory", 0.50},
         {"240-279 endocrine", 0.20},
         {"520-579 digestive", 0.15},
         {"580-629 genitourinary", 0.15}},
        100));
    specs.push_back(make_archetype(
        "alert_gi",
        {{{15.7, 0.0, 1.5},
          {97.8, 0.0, 0.5},
          {37.1, 0.0, 0.10},
          {114.0, 0.0, 4.0},
          {88.1, 0.0, 9.0},
          {3.8, 0.0, 0.05},
          {1.9, 0.0, 0.08},
          {5.4, 0.0, 0.06}}},
        0.078, 2.2, 59.2, 16.8,
        {{"520-579 digestive", 0.55},
         {"280-289 blood", 0.15},
         {"001-139 infectious", 0.15},
         {"580-629 genitourinary", 0.15}},
        100));
    specs.push_back(make_archetype(
        "chronic_inflam",
        {{{18.5, 0.0, 0.8},
          {96.8, 0.0, 0.5},
          {37.4, 0.0, 0.45},
          {105.0, 0.0, 3.5},
          {95.0, 0.0, 4.5},
          {3.4, 0.0, 0.08},
          {3.0, 0.0, 0.10},
          {5.2, 0.0, 0.08}}},
        0.18, 4.5, 63.1, 16.9,
        {{"710-739 musculoskeletal", 0.50},
         {"580-629 genitourinary", 0.20},
         {"680-709 skin", 0.15},
         {"280-289 blood", 0.15}},
        100));
    return specs;
}

GenSummary generate_cohort(const std::vector<ArchetypeSpec>& specs, const GenOptions& options,
                           const std::string& out_dir) {
    if (specs.empty()) throw std::invalid_argument("generate_cohort: no archetype specs");
    for (const auto& s : specs) s.validate();
    if (options.noise_level < 0.0) throw std::invalid_argument("generate_cohort: negative noise_level");
    if (options.mean_gap_minutes <= 0.0)
        throw std::invalid_argument("generate_cohort: mean_gap_minutes must be > 0");
    if (options.blank_fraction < 0.0 || options.blank_fraction >= 1.0)
        throw std::invalid_argument("generate_cohort: blank_fraction outside [0,1)");

    std::filesystem::create_directories(out_dir);
    std::string patients_csv = "patient_id,age,gender,first_careunit,last_careunit,admission_type,"
                               "admission_location,admit_time,discharge_time,died_in_hospital\n";
    std::string vitals_csv = "patient_id,t_minutes,feature,value\n";
    std::string diagnoses_csv = "patient_id,icd_code,icd_version\n";
    std::string truth_csv = "patient_id,archetype_id\n";

    GenSummary summary;
    const int64_t base_admit = cohort::parse_iso8601_minutes("2019-01-01T00:00:00");
    char buf[128];
    size_t global_index = 0;

    for (const auto& spec : specs) {
        for (int p = 0; p < spec.n_patients; ++p, ++global_index) {
            Rng rng(derive_seed(options.seed, "patient", global_index));
            std::snprintf(buf, sizeof(buf), "P%06zu", global_index + 1);
            std::string pid = buf;

            double age = std::clamp(rng.normal(spec.age_mean, spec.age_sd), 18.0, 95.0);
            age = std::round(age * 10.0) / 10.0;
            // Mean-preserving lognormal stay length.
            double los_days =
                std::clamp(spec.mean_los_days * std::exp(rng.normal(0.0, 0.30) - 0.045), 0.3, 60.0);
            double los_minutes = los_days * 1440.0;

            // Per-patient trait: baseline offsets, one oscillation phase.
            double offset[kNumVitals];
            for (int f = 0; f < kNumVitals; ++f)
                offset[f] = options.noise_level * kJitterSd[f] * rng.normal();
            double phase = rng.next_double();

            std::string gender = rng.bernoulli(0.55) ? "M" : "F";
            std::string first_unit = kCareUnits[rng.uniform_int(kCareUnits.size())];
            std::string last_unit =
                rng.bernoulli(0.2) ? kCareUnits[rng.uniform_int(kCareUnits.size())] : first_unit;
            std::string adm_type = pick_weighted(rng, kAdmissionTypes);
            std::string adm_loc = pick_weighted(rng, kAdmissionLocations);
            int64_t admit = base_admit + static_cast<int64_t>(rng.uniform_int(525600));
            int64_t discharge = admit + static_cast<int64_t>(std::ceil(los_minutes));

            // Mortality: archetype rate shifted by age and (optionally) the
            // patient's baseline deviation of one vital.
            double z = logit(spec.mortality_rate);
            z += spec.age_mortality_slope * (age - spec.age_mean) / spec.age_sd;
            if (spec.risk_vital && options.noise_level > 0.0) {
                int f = static_cast<int>(*spec.risk_vital);
                double jitter = options.noise_level * kJitterSd[f];
                z += spec.risk_vital_slope * offset[f] / jitter;
            }
            bool died = rng.bernoulli(sigmoid(z));
            if (died) ++summary.n_deaths;

            std::snprintf(buf, sizeof(buf), "%s,%.1f,%s,%s,%s,%s,%s,%s,%s,%d\n", pid.c_str(), age,
                          gender.c_str(), first_unit.c_str(), last_unit.c_str(), adm_type.c_str(),
                          adm_loc.c_str(), cohort::format_iso8601_minutes(admit).c_str(),
                          cohort::format_iso8601_minutes(discharge).c_str(), died ? 1 : 0);
            patients_csv += buf;
            truth_csv += pid + "," + spec.archetype_id + "\n";

            // Reading sets at irregular intervals; individual feature
            // readings are occasionally blanked. Every feature is guaranteed
            // at least one reading over the stay.
            int emitted[kNumVitals] = {0};
            double first_t = rng.uniform(0.0, 20.0);
            for (double t = first_t; t < los_minutes;
                 t += options.mean_gap_minutes * rng.uniform(0.5, 1.5)) {
                ++summary.n_reading_sets;
                double th = t / 60.0;
                for (int f = 0; f < kNumVitals; ++f) {
                    bool blank = rng.bernoulli(options.blank_fraction);
                    const FeatureTemplate& tpl = spec.templates[f];
                    double value = tpl.baseline + offset[f] + tpl.drift_per_hour * th +
                                   tpl.osc_amplitude *
                                       std::sin(2.0 * M_PI * (th / kOscPeriodHours + phase)) +
                                   options.noise_level * kNoiseSd[f] * rng.normal();
                    if (blank && emitted[f] > 0) continue;  // never blank a feature's only reading
                    if (blank && t + options.mean_gap_minutes * 2.0 < los_minutes) continue;
                    value = std::clamp(value, kClampLo[f], kClampHi[f]);
                    std::snprintf(buf, sizeof(buf), "%s,%.1f,%s,%.2f\n", pid.c_str(), t,
                                  cohort::vital_name(static_cast<Vital>(f)), value);
                    vitals_csv += buf;
                    ++emitted[f];
                    ++summary.n_readings;
                }
            }

            // Diagnoses: classes by archetype weight, codes uniform within
            // the class pool.
            std::vector<std::pair<std::string, double>> class_weights(
                spec.icd_class_distribution.begin(), spec.icd_class_distribution.end());
            int n_codes = static_cast<int>(std::clamp(std::round(rng.normal(12.0, 4.0)), 2.0, 30.0));
            for (int c = 0; c < n_codes; ++c) {
                std::string cls = pick_weighted(rng, class_weights);
                auto it = icd_code_pool().find(cls);
                if (it == icd_code_pool().end() || it->second.empty())
                    throw std::invalid_argument("archetype " + spec.archetype_id +
                                                ": no codes for icd class " + cls);
                const auto& code = it->second[rng.uniform_int(it->second.size())];
                std::snprintf(buf, sizeof(buf), "%s,%s,%d\n", pid.c_str(), code.code.c_str(),
                              code.version);
                diagnoses_csv += buf;
            }
            ++summary.n_patients;
        }
    }

    write_file(out_dir + "/patients.csv", patients_csv);
    write_file(out_dir + "/vitals.csv", vitals_csv);
    write_file(out_dir + "/diagnoses.csv", diagnoses_csv);
    write_file(out_dir + "/truth_labels.csv", truth_csv);
    return summary;
}

std::pair<std::vector<ArchetypeSpec>, GenOptions> load_spec_file(const std::string& path) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(path);
    GenOptions options;
    options.noise_level = cfg.get_double("generator", "noise_level", options.noise_level);
    options.seed = static_cast<uint64_t>(cfg.get_int("generator", "seed", static_cast<long long>(options.seed)));
    options.mean_gap_minutes = cfg.get_double("generator", "mean_gap_minutes", options.mean_gap_minutes);
    options.blank_fraction = cfg.get_double("generator", "blank_fraction", options.blank_fraction);

    std::vector<ArchetypeSpec> specs;
    for (const auto& section : cfg.sections()) {
        if (section.rfind("archetype ", 0) != 0) continue;
        ArchetypeSpec a;
        a.archetype_id = section.substr(10);
        a.n_patients = static_cast<int>(cfg.get_int(section, "n_patients", 100));
        a.mortality_rate = cfg.get_double(section, "mortality_rate", 0.1);
        a.mean_los_days = cfg.get_double(section, "mean_los_days", 2.0);
        a.age_mean = cfg.get_double(section, "age_mean", 63.0);
        a.age_sd = cfg.get_double(section, "age_sd", 16.0);
        a.age_mortality_slope = cfg.get_double(section, "age_mortality_slope", 0.3);
        if (auto rv = cfg.get(section, "risk_vital")) {
            auto v = cohort::vital_from_name(*rv);
            if (!v) throw std::runtime_error(path + ": unknown risk_vital " + *rv);
            a.risk_vital = *v;
            a.risk_vital_slope = cfg.get_double(section, "risk_vital_slope", 1.0);
        }
        auto icd = cfg.get(section, "icd_classes");
        if (!icd) throw std::runtime_error(path + ": [" + section + "] missing icd_classes");
        for (const auto& item : split_list(*icd)) {
            auto colon = item.rfind(':');
            if (colon == std::string::npos)
                throw std::runtime_error(path + ": bad icd_classes entry " + item);
            double w = 0.0;
            if (!parse_double(item.substr(colon + 1), w))
                throw std::runtime_error(path + ": bad icd_classes weight in " + item);
            a.icd_class_distribution[std::string(trim(item.substr(0, colon)))] = w;
        }
        for (int f = 0; f < kNumVitals; ++f) {
            auto key = cohort::vital_name(static_cast<Vital>(f));
            auto v = cfg.get(section, key);
            if (!v) throw std::runtime_error(path + ": [" + section + "] missing template for " +
                                             std::string(key));
            auto parts = split_list(*v);
            if (parts.size() != 3)
                throw std::runtime_error(path + ": template for " + std::string(key) +
                                         " must be baseline,drift_per_hour,osc_amplitude");
            FeatureTemplate tpl;
            if (!parse_double(parts[0], tpl.baseline) || !parse_double(parts[1], tpl.drift_per_hour) ||
                !parse_double(parts[2], tpl.osc_amplitude))
                throw std::runtime_error(path + ": bad template numbers for " + std::string(key));
            a.templates[f] = tpl;
        }
        a.validate();
        specs.push_back(std::move(a));
    }
    if (specs.empty()) throw std::runtime_error(path + ": no [archetype <id>] sections");
    return {specs, options};
}

}  // namespace icutraj::synthgen
