#include "icutraj/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "icutraj/csv.hpp"

namespace icutraj::cohort {

namespace {
const char* kVitalNames[kNumVitals] = {
    "respiration_rate", "oxygen_saturation", "temperature", "systolic_bp",
    "heart_rate",       "gcs_eye",           "gcs_verbal",  "gcs_motor",
};
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

const char* vital_name(Vital v) { return kVitalNames[static_cast<int>(v)]; }

std::optional<Vital> vital_from_name(std::string_view name) {
    for (int i = 0; i < kNumVitals; ++i) {
        if (name == kVitalNames[i]) return static_cast<Vital>(i);
    }
    return std::nullopt;
}

bool vital_uses_zscore(Vital v) {
    switch (v) {
        case Vital::Temperature:
        case Vital::SystolicBp:
        case Vital::RespirationRate:
        case Vital::GcsEye:
            return true;
        default:
            return false;
    }
}

double ScalerState::apply(Vital v, double raw) const {
    const FeatureStats& s = by_feature[static_cast<int>(v)];
    if (s.zscore) return (raw - s.mean) / s.sd;
    return (raw - s.min) / (s.max - s.min);
}

double ScalerState::invert(Vital v, double scaled) const {
    const FeatureStats& s = by_feature[static_cast<int>(v)];
    if (s.zscore) return scaled * s.sd + s.mean;
    return scaled * (s.max - s.min) + s.min;
}

// --- Timestamps ---

namespace {
// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<int64_t>(era) * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}
}  // namespace

int64_t parse_iso8601_minutes(std::string_view ts) {
    ts = trim(ts);
    // YYYY-MM-DD[T ]HH:MM[:SS]
    if (ts.size() < 16) throw std::invalid_argument("bad timestamp: " + std::string(ts));
    auto num = [&](size_t pos, size_t len) {
        long long v = 0;
        if (!parse_long(ts.substr(pos, len), v))
            throw std::invalid_argument("bad timestamp: " + std::string(ts));
        return static_cast<int>(v);
    };
    int year = num(0, 4);
    int month = num(5, 2);
    int day = num(8, 2);
    int hour = num(11, 2);
    int minute = num(14, 2);
    if (ts[4] != '-' || ts[7] != '-' || (ts[10] != 'T' && ts[10] != ' ') || ts[13] != ':')
        throw std::invalid_argument("bad timestamp: " + std::string(ts));
    return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 1440 +
           hour * 60 + minute;
}

std::string format_iso8601_minutes(int64_t minutes) {
    int64_t days = minutes >= 0 ? minutes / 1440 : (minutes - 1439) / 1440;
    int rem = static_cast<int>(minutes - days * 1440);
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:00", y, m, d, rem / 60, rem % 60);
    return buf;
}

// --- Ingest ---

namespace {
[[noreturn]] void row_error(const std::string& file, size_t line_no, const std::string& what) {
    throw std::runtime_error(file + ":" + std::to_string(line_no) + ": " + what);
}
}  // namespace

Cohort ingest_cohort(const std::string& patients_path, const std::string& vitals_path,
                     const std::string& diagnoses_path, IngestReport* report) {
    Cohort cohort;
    std::unordered_map<std::string, size_t> index_of;

    {
        auto lines = read_lines(patients_path);
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto f = split_csv(lines[i]);
            if (f.size() != 10) row_error(patients_path, i + 1, "expected 10 fields");
            PatientRecord r;
            r.patient_id = std::string(trim(f[0]));
            if (r.patient_id.empty()) row_error(patients_path, i + 1, "empty patient_id");
            if (index_of.count(r.patient_id))
                row_error(patients_path, i + 1, "duplicate patient_id " + r.patient_id);
            if (!parse_double(f[1], r.age)) row_error(patients_path, i + 1, "bad age");
            r.gender = std::string(trim(f[2]));
            r.first_careunit = std::string(trim(f[3]));
            r.last_careunit = std::string(trim(f[4]));
            r.admission_type = std::string(trim(f[5]));
            r.admission_location = std::string(trim(f[6]));
            try {
                r.admit_time = parse_iso8601_minutes(f[7]);
                r.discharge_time = parse_iso8601_minutes(f[8]);
            } catch (const std::exception& e) {
                row_error(patients_path, i + 1, e.what());
            }
            if (r.discharge_time < r.admit_time)
                row_error(patients_path, i + 1, "discharge before admission");
            auto died = trim(f[9]);
            if (died != "0" && died != "1") row_error(patients_path, i + 1, "died_in_hospital must be 0/1");
            r.died_in_hospital = died == "1";
            index_of[r.patient_id] = cohort.records.size();
            cohort.records.push_back(std::move(r));
        }
    }
    if (cohort.records.empty()) throw std::runtime_error(patients_path + ": no patients");

    {
        auto lines = read_lines(vitals_path);
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto f = split_csv(lines[i]);
            if (f.size() != 4) row_error(vitals_path, i + 1, "expected 4 fields");
            RawReading rd;
            rd.patient_id = std::string(trim(f[0]));
            if (!index_of.count(rd.patient_id))
                row_error(vitals_path, i + 1, "reading references unknown patient " + rd.patient_id);
            if (!parse_double(f[1], rd.t_minutes) || rd.t_minutes < 0)
                row_error(vitals_path, i + 1, "bad t_minutes");
            auto v = vital_from_name(trim(f[2]));
            if (!v) row_error(vitals_path, i + 1, "unknown feature " + std::string(trim(f[2])));
            rd.feature = *v;
            if (!parse_double(f[3], rd.value) || !std::isfinite(rd.value))
                row_error(vitals_path, i + 1, "bad value");
            cohort.readings.push_back(std::move(rd));
        }
    }
    if (cohort.readings.empty()) throw std::runtime_error(vitals_path + ": no readings");

    size_t n_diag = 0;
    {
        auto lines = read_lines(diagnoses_path);
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto f = split_csv(lines[i]);
            if (f.size() != 3) row_error(diagnoses_path, i + 1, "expected 3 fields");
            std::string pid(trim(f[0]));
            auto it = index_of.find(pid);
            if (it == index_of.end())
                row_error(diagnoses_path, i + 1, "diagnosis references unknown patient " + pid);
            IcdCode code;
            code.code = std::string(trim(f[1]));
            long long version = 0;
            if (!parse_long(f[2], version) || (version != 9 && version != 10))
                row_error(diagnoses_path, i + 1, "icd_version must be 9 or 10");
            code.version = static_cast<int>(version);
            cohort.records[it->second].icd_codes.push_back(std::move(code));
            ++n_diag;
        }
    }

    if (report) {
        report->n_patients = cohort.records.size();
        report->n_readings = cohort.readings.size();
        report->n_diagnoses = n_diag;
    }
    return cohort;
}

// --- Grouping / imputation / scaling ---

std::vector<PatientTrajectories> group_observations(const std::vector<RawReading>& readings,
                                                    int window_minutes) {
    if (window_minutes <= 0) throw std::invalid_argument("window_minutes must be positive");

    struct Acc {
        std::array<std::map<int, std::pair<double, int>>, kNumVitals> windows;  // window -> (sum, count)
        int max_window = -1;
    };
    std::map<std::string, Acc> per_patient;  // ordered: output sorted by patient_id

    for (const auto& r : readings) {
        int w = static_cast<int>(std::floor(r.t_minutes / window_minutes));
        Acc& acc = per_patient[r.patient_id];
        auto& slot = acc.windows[static_cast<int>(r.feature)][w];
        slot.first += r.value;
        slot.second += 1;
        acc.max_window = std::max(acc.max_window, w);
    }

    std::vector<PatientTrajectories> out;
    out.reserve(per_patient.size());
    for (auto& [pid, acc] : per_patient) {
        PatientTrajectories t;
        t.patient_id = pid;
        t.n_windows = acc.max_window + 1;
        for (int f = 0; f < kNumVitals; ++f) {
            t.values[f].assign(static_cast<size_t>(t.n_windows), kNaN);
            for (const auto& [w, sc] : acc.windows[f]) {
                t.values[f][static_cast<size_t>(w)] = sc.first / sc.second;
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

void impute_missing(std::vector<PatientTrajectories>& trajectories) {
    for (auto& t : trajectories) {
        for (int f = 0; f < kNumVitals; ++f) {
            double sum = 0.0;
            int count = 0;
            for (double v : t.values[f]) {
                if (!std::isnan(v)) {
                    sum += v;
                    ++count;
                }
            }
            if (count == 0)
                throw std::runtime_error("patient " + t.patient_id + ": feature " +
                                         vital_name(static_cast<Vital>(f)) +
                                         " has no observed values to impute from");
            const double mean = sum / count;
            for (double& v : t.values[f]) {
                if (std::isnan(v)) v = mean;
            }
        }
    }
}

ScalerState scale_features(std::vector<PatientTrajectories>& trajectories) {
    ScalerState state;
    for (int f = 0; f < kNumVitals; ++f) {
        double sum = 0.0, sum2 = 0.0;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        size_t count = 0;
        for (const auto& t : trajectories) {
            for (double v : t.values[f]) {
                sum += v;
                sum2 += v * v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                ++count;
            }
        }
        if (count == 0) throw std::runtime_error("scale_features: no data");
        const double mean = sum / count;
        const double var = std::max(0.0, sum2 / count - mean * mean);  // population variance
        const double sd = std::sqrt(var);
        auto& s = state.by_feature[f];
        s.zscore = vital_uses_zscore(static_cast<Vital>(f));
        if (s.zscore) {
            if (sd == 0.0)
                throw std::runtime_error(std::string("scale_features: zero variance for ") +
                                         vital_name(static_cast<Vital>(f)));
            s.mean = mean;
            s.sd = sd;
        } else {
            if (lo == hi)
                throw std::runtime_error(std::string("scale_features: min == max for ") +
                                         vital_name(static_cast<Vital>(f)));
            s.min = lo;
            s.max = hi;
        }
    }
    for (auto& t : trajectories) {
        for (int f = 0; f < kNumVitals; ++f) {
            for (double& v : t.values[f]) v = state.apply(static_cast<Vital>(f), v);
        }
    }
    return state;
}

// --- ICD mapping ---

GemTable load_gem_table(const std::string& path) {
    GemTable table;
    for (const auto& line : read_lines(path)) {
        std::istringstream ss(line);
        std::string icd10, icd9;
        if (!(ss >> icd10 >> icd9)) continue;  // blank or malformed row
        if (icd10.empty() || icd10[0] == '#') continue;
        table[icd10] = icd9;
    }
    return table;
}

namespace {
std::string normalize_code(const std::string& code) {
    std::string out;
    out.reserve(code.size());
    for (char c : code) {
        if (c == '.' || c == ' ') continue;
        out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return out;
}

struct Chapter {
    int lo, hi;
    const char* label;
};
const Chapter kChapters[] = {
    {1, 139, "001-139 infectious"},
    {140, 239, "140-239 neoplasms"},
    {240, 279, "240-279 endocrine"},
    {280, 289, "280-289 blood"},
    {290, 319, "290-319 mental"},
    {320, 389, "320-389 nervous"},
    {390, 459, "390-459 circulatory"},
    {460, 519, "460-519 respiratory"},
    {520, 579, "520-579 digestive"},
    {580, 629, "580-629 genitourinary"},
    {630, 679, "630-679 pregnancy"},
    {680, 709, "680-709 skin"},
    {710, 739, "710-739 musculoskeletal"},
    {740, 759, "740-759 congenital"},
    {760, 779, "760-779 perinatal"},
    {780, 799, "780-799 ill-defined"},
    {800, 999, "800-999 injury"},
};
}  // namespace

std::string icd9_chapter(const std::string& icd9_code) {
    std::string code = normalize_code(icd9_code);
    if (code.empty()) return "UNKNOWN";
    if (code[0] == 'V') return "V01-V91 supplementary";
    if (code[0] == 'E') return "E800-E999 external";
    if (code.size() < 3) return "UNKNOWN";
    int prefix = 0;
    for (int i = 0; i < 3; ++i) {
        if (code[i] < '0' || code[i] > '9') return "UNKNOWN";
        prefix = prefix * 10 + (code[i] - '0');
    }
    for (const auto& ch : kChapters) {
        if (prefix >= ch.lo && prefix <= ch.hi) return ch.label;
    }
    return "UNKNOWN";
}

std::string map_icd(const std::string& code, int system, const GemTable& gem,
                    size_t* unknown_counter) {
    std::string icd9;
    if (system == 9) {
        icd9 = code;
    } else {
        auto it = gem.find(normalize_code(code));
        if (it == gem.end()) {
            if (unknown_counter) ++*unknown_counter;
            return "UNKNOWN";
        }
        icd9 = it->second;
    }
    std::string chapter = icd9_chapter(icd9);
    if (chapter == "UNKNOWN" && unknown_counter) ++*unknown_counter;
    return chapter;
}

// --- Horizons / static features ---

void truncate_horizon(std::vector<PatientTrajectories>& grouped,
                      std::vector<PatientRecord>& records,
                      std::optional<double> horizon_hours, HorizonReport* report,
                      int window_minutes) {
    if (horizon_hours && *horizon_hours <= 0.0)
        throw std::invalid_argument("horizon must be positive");
    if (!horizon_hours) return;

    // Window w starts at w*window_minutes; keep windows starting inside
    // the horizon.
    const double horizon_minutes = *horizon_hours * 60.0;
    const int keep = std::max(
        0, static_cast<int>(std::ceil(horizon_minutes / window_minutes - 1e-9)));

    std::unordered_map<std::string, bool> keep_patient;
    std::vector<PatientTrajectories> kept_traj;
    kept_traj.reserve(grouped.size());
    for (auto& t : grouped) {
        int nw = std::min(t.n_windows, keep);
        bool complete = nw > 0;
        PatientTrajectories cut;
        cut.patient_id = t.patient_id;
        cut.n_windows = nw;
        for (int f = 0; f < kNumVitals && complete; ++f) {
            cut.values[f].assign(t.values[f].begin(), t.values[f].begin() + nw);
            bool any = false;
            for (double v : cut.values[f]) {
                if (!std::isnan(v)) {
                    any = true;
                    break;
                }
            }
            if (!any) complete = false;
        }
        keep_patient[t.patient_id] = complete;
        if (complete) {
            kept_traj.push_back(std::move(cut));
        } else if (report) {
            report->dropped_patients.push_back(t.patient_id);
        }
    }
    grouped = std::move(kept_traj);

    std::vector<PatientRecord> kept_records;
    kept_records.reserve(records.size());
    for (auto& r : records) {
        auto it = keep_patient.find(r.patient_id);
        if (it != keep_patient.end() && it->second) kept_records.push_back(std::move(r));
    }
    records = std::move(kept_records);
}

StaticFeatureVector derive_static_features(const PatientRecord& record,
                                           const PatientTrajectories& trajectories,
                                           std::optional<double> horizon_hours,
                                           const GemTable& gem) {
    StaticFeatureVector sf;
    sf.patient_id = record.patient_id;
    sf.age = record.age;
    sf.gender = record.gender;
    sf.first_careunit = record.first_careunit;
    sf.admission_type = record.admission_type;
    sf.admission_location = record.admission_location;
    if (!horizon_hours) {
        sf.last_careunit = record.last_careunit;
        sf.length_of_stay_days = record.length_of_stay_days();
    }

    std::map<std::string, int> class_counts;  // ordered for the lexicographic tie-break
    for (const auto& code : record.icd_codes) {
        ++class_counts[map_icd(code.code, code.version, gem)];
    }
    sf.n_unique_icd = static_cast<int>(class_counts.size());
    std::string top = "NONE", second = "NONE";
    int top_n = 0, second_n = 0;
    for (const auto& [cls, n] : class_counts) {
        // Iteration is lexicographic, so > keeps the lexicographically
        // smaller class on a tie.
        if (n > top_n) {
            second = top;
            second_n = top_n;
            top = cls;
            top_n = n;
        } else if (n > second_n) {
            second = cls;
            second_n = n;
        }
    }
    sf.top_icd_class = top;
    sf.second_icd_class = second;

    for (int f = 0; f < kNumVitals; ++f) {
        double sum = 0.0;
        const auto& vals = trajectories.values[f];
        if (vals.empty()) throw std::runtime_error("derive_static_features: empty trajectory");
        for (double v : vals) sum += v;
        sf.vital_means[f] = sum / static_cast<double>(vals.size());
    }
    return sf;
}

}  // namespace icutraj::cohort
