#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "icutraj/csv.hpp"

namespace icutraj {

/// Sectioned key = value config. '#' starts a comment, keys are unique within
/// a section, section order is preserved.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path) {
        return parse_lines(read_lines(path), path);
    }

    static KeyValueConfig parse_string(const std::string& text, const std::string& name = "<string>") {
        std::vector<std::string> lines;
        size_t start = 0;
        while (start <= text.size()) {
            size_t pos = text.find('\n', start);
            if (pos == std::string::npos) {
                lines.push_back(text.substr(start));
                break;
            }
            lines.push_back(text.substr(start, pos - start));
            start = pos + 1;
        }
        return parse_lines(lines, name);
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        auto it = values_.find(section + "\n" + key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const {
        auto v = get(section, key);
        return v ? *v : fallback;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        double out = 0.0;
        if (!parse_double(*v, out)) bad_value(section, key, *v);
        return out;
    }

    long long get_int(const std::string& section, const std::string& key, long long fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        long long out = 0;
        if (!parse_long(*v, out)) bad_value(section, key, *v);
        return out;
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        bad_value(section, key, *v);
    }

    const std::vector<std::string>& sections() const { return section_order_; }

    bool has_section(const std::string& section) const {
        for (const auto& s : section_order_)
            if (s == section) return true;
        return false;
    }

    /// Keys of one section in file order.
    std::vector<std::string> keys(const std::string& section) const {
        std::vector<std::string> out;
        for (const auto& k : key_order_) {
            auto pos = k.find('\n');
            if (k.substr(0, pos) == section) out.push_back(k.substr(pos + 1));
        }
        return out;
    }

private:
    [[noreturn]] static void bad_value(const std::string& section, const std::string& key,
                                       const std::string& value) {
        throw std::runtime_error("config: bad value for [" + section + "] " + key + " = " + value);
    }

    static KeyValueConfig parse_lines(const std::vector<std::string>& lines, const std::string& name) {
        KeyValueConfig cfg;
        std::string section;
        for (size_t i = 0; i < lines.size(); ++i) {
            std::string_view line = trim(lines[i]);
            if (auto hash = line.find('#'); hash != std::string_view::npos)
                line = trim(line.substr(0, hash));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw std::runtime_error(name + ":" + std::to_string(i + 1) + ": unterminated section");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                if (!cfg.has_section(section)) cfg.section_order_.push_back(section);
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw std::runtime_error(name + ":" + std::to_string(i + 1) + ": expected key = value");
            std::string key(trim(line.substr(0, eq)));
            std::string value(trim(line.substr(eq + 1)));
            if (key.empty())
                throw std::runtime_error(name + ":" + std::to_string(i + 1) + ": empty key");
            std::string full = section + "\n" + key;
            if (!cfg.values_.count(full)) cfg.key_order_.push_back(full);
            cfg.values_[full] = value;
        }
        return cfg;
    }

    std::map<std::string, std::string> values_;
    std::vector<std::string> section_order_;
    std::vector<std::string> key_order_;
};

/// "a,b,c" -> trimmed tokens; empty input -> empty list.
inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t pos = s.find(',', start);
        std::string_view tok =
            pos == std::string_view::npos ? s.substr(start) : s.substr(start, pos - start);
        tok = trim(tok);
        if (!tok.empty()) out.emplace_back(tok);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace icutraj
