#include "icutraj/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace icutraj::dtw {

DistanceMatrix DistanceMatrix::zeros(int n, std::string tag, std::vector<std::string> index) {
    DistanceMatrix m;
    m.n = n;
    m.feature_tag = std::move(tag);
    m.patient_index = std::move(index);
    m.values.assign(static_cast<size_t>(n) * n, 0.0);
    return m;
}

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

inline double min3(double a, double b, double c) {
    return std::min(a, std::min(b, c));
}
}  // namespace

double distance(std::span<const double> a, std::span<const double> b, std::optional<int> band) {
    if (a.empty() || b.empty()) throw std::invalid_argument("dtw: empty sequence");
    const size_t na = a.size();
    const size_t nb = b.size();
    if (band) {
        long diff = std::labs(static_cast<long>(na) - static_cast<long>(nb));
        if (*band < 0 || *band < diff)
            throw std::invalid_argument("dtw: band too narrow to admit any alignment path");
    }

    // Two rolling rows; only the final cumulative cost is needed.
    std::vector<double> prev(nb + 1, kInf);
    std::vector<double> cur(nb + 1, kInf);
    prev[0] = 0.0;

    const long w = band ? static_cast<long>(*band) : static_cast<long>(std::max(na, nb));
    for (size_t i = 1; i <= na; ++i) {
        const double ai = a[i - 1];
        const long jlo = std::max<long>(1, static_cast<long>(i) - w);
        const long jhi = std::min<long>(static_cast<long>(nb), static_cast<long>(i) + w);
        cur[0] = kInf;
        if (jlo > 1) cur[jlo - 1] = kInf;
        for (long j = jlo; j <= jhi; ++j) {
            const double cost = std::fabs(ai - b[j - 1]);
            cur[j] = cost + min3(prev[j], cur[j - 1], prev[j - 1]);
        }
        if (static_cast<size_t>(jhi) < nb) cur[jhi + 1] = kInf;
        std::swap(prev, cur);
    }
    return prev[nb];
}

DistanceMatrix feature_distance_matrix(const std::vector<std::vector<double>>& series,
                                       const std::vector<std::string>& patient_index,
                                       const std::string& feature_tag,
                                       std::optional<int> band, int n_threads) {
    const int n = static_cast<int>(series.size());
    if (n == 0) throw std::invalid_argument("feature_distance_matrix: no patients");
    if (patient_index.size() != series.size())
        throw std::invalid_argument("feature_distance_matrix: index size mismatch");
    for (int i = 0; i < n; ++i) {
        if (series[i].empty())
            throw std::invalid_argument("feature_distance_matrix: empty trajectory for patient " +
                                        patient_index[i]);
    }

    DistanceMatrix m = DistanceMatrix::zeros(n, feature_tag, patient_index);

    // Upper triangle flattened; each worker owns a contiguous chunk of pair
    // indices and writes into disjoint slots.
    const uint64_t n_pairs = static_cast<uint64_t>(n) * (n - 1) / 2;
    if (n_pairs == 0) return m;

    unsigned hw = std::thread::hardware_concurrency();
    unsigned workers = n_threads > 0 ? static_cast<unsigned>(n_threads) : (hw ? hw : 1u);
    workers = std::min<uint64_t>(workers, n_pairs);

    auto compute_range = [&](uint64_t begin, uint64_t end) {
        // Recover (i, j) from the flattened index, then walk forward.
        uint64_t k = begin;
        int i = 0;
        uint64_t row_start = 0;  // flattened index of pair (i, i+1)
        while (row_start + static_cast<uint64_t>(n - 1 - i) <= k) {
            row_start += static_cast<uint64_t>(n - 1 - i);
            ++i;
        }
        int j = static_cast<int>(k - row_start) + i + 1;
        for (; k < end; ++k) {
            const double d = distance(series[i], series[j], band);
            m.set(i, j, d);
            m.set(j, i, d);
            if (++j == n) {
                ++i;
                j = i + 1;
            }
        }
    };

    if (workers <= 1) {
        compute_range(0, n_pairs);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) {
            uint64_t begin = n_pairs * t / workers;
            uint64_t end = n_pairs * (t + 1) / workers;
            pool.emplace_back(compute_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    return m;
}

DistanceMatrix total_distance_matrix(const std::vector<DistanceMatrix>& per_feature) {
    if (per_feature.empty()) throw std::invalid_argument("total_distance_matrix: no matrices");
    const DistanceMatrix& first = per_feature.front();
    for (const auto& m : per_feature) {
        if (m.n != first.n) throw std::invalid_argument("total_distance_matrix: dimension mismatch");
        if (m.patient_index != first.patient_index)
            throw std::invalid_argument("total_distance_matrix: patient index order mismatch");
    }
    DistanceMatrix total = DistanceMatrix::zeros(first.n, "total", first.patient_index);
    for (const auto& m : per_feature) {
        for (size_t k = 0; k < total.values.size(); ++k) total.values[k] += m.values[k];
    }
    return total;
}

namespace {
void put_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("matrix file truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

void write_matrix(const std::string& path, const DistanceMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write matrix file: " + path);
    out.write("TCDM", 4);
    put_u32(out, 1u);
    put_u32(out, static_cast<uint32_t>(m.n));
    put_u32(out, static_cast<uint32_t>(m.feature_tag.size()));
    out.write(m.feature_tag.data(), static_cast<std::streamsize>(m.feature_tag.size()));
    static_assert(sizeof(double) == 8);
    // Little-endian hosts only; the byte layout is the file format.
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

DistanceMatrix read_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open matrix file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TCDM", 4) != 0)
        throw std::runtime_error("not a TCDM matrix file: " + path);
    uint32_t version = get_u32(in);
    if (version != 1u) throw std::runtime_error("unsupported TCDM version in " + path);
    uint32_t n = get_u32(in);
    uint32_t tag_len = get_u32(in);
    std::string tag(tag_len, '\0');
    in.read(tag.data(), tag_len);
    DistanceMatrix m;
    m.n = static_cast<int>(n);
    m.feature_tag = std::move(tag);
    m.values.resize(static_cast<size_t>(n) * n);
    in.read(reinterpret_cast<char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("matrix file truncated: " + path);
    return m;
}

void write_patient_index(const std::string& path, const std::vector<std::string>& index) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write patient index: " + path);
    for (const auto& id : index) out << id << "\n";
}

std::vector<std::string> read_patient_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open patient index: " + path);
    std::vector<std::string> index;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) index.push_back(line);
    }
    return index;
}

}  // namespace icutraj::dtw
