#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rampflow/csv.hpp"
#include "rampflow/error.hpp"

namespace rampflow {

/// Flat `key = value` configuration with '#' comments. Lookups are
/// recorded so that leftover (unknown) keys can be reported.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text) {
        KeyValueConfig cfg;
        std::istringstream in{std::string(text)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto body = csv::trim(line);
            if (body.empty()) continue;
            auto eq = body.find('=');
            if (eq == std::string_view::npos) {
                throw ValidationError("line " + std::to_string(line_no) + ": expected 'key = value'");
            }
            auto key = std::string(csv::trim(body.substr(0, eq)));
            auto value = std::string(csv::trim(body.substr(eq + 1)));
            if (key.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty key");
            if (cfg.values_.contains(key)) throw ValidationError(key + ": duplicate key");
            cfg.values_.emplace(std::move(key), std::move(value));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open configuration file '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    [[nodiscard]] bool has(const std::string& key) const { return values_.contains(key); }

    [[nodiscard]] const std::string* raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    /// Reads a number into `out` when present; malformed values are collected.
    void read(const std::string& key, double& out, std::vector<std::string>& errors) const {
        if (const auto* v = raw(key)) {
            if (auto d = csv::parse_double(*v)) {
                out = *d;
            } else {
                errors.push_back(key + ": not a number ('" + *v + "')");
            }
        }
    }

    template <typename Int>
    void read_int(const std::string& key, Int& out, std::vector<std::string>& errors) const {
        if (const auto* v = raw(key)) {
            if (auto d = csv::parse_int(*v); d && *d >= 0) {
                out = static_cast<Int>(*d);
            } else {
                errors.push_back(key + ": not a non-negative integer ('" + *v + "')");
            }
        }
    }

    void read_list(const std::string& key, std::vector<double>& out, std::vector<std::string>& errors) const {
        if (const auto* v = raw(key)) {
            std::vector<double> parsed;
            for (auto item : csv::split(*v)) {
                if (auto d = csv::parse_double(item)) {
                    parsed.push_back(*d);
                } else {
                    errors.push_back(key + ": not a number list ('" + *v + "')");
                    return;
                }
            }
            out = std::move(parsed);
        }
    }

    [[nodiscard]] std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_) {
            if (!used_.contains(k)) out.push_back(k);
        }
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace rampflow
