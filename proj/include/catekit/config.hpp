// Flat key = value configuration files with [section] headers.
//
// Grammar (one entry per line):
//   [section]            section header; keys below it are "section.key"
//   key = value          value is everything after '=', trimmed
//   # or ; start a comment line; blank lines are ignored
// Values are parsed on access (string, double, size, bool, comma list).
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "<stream>") {
        Config cfg;
        cfg.origin_ = origin;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#' || trimmed[0] == ';') continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']') {
                    throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                                ": malformed section header");
                }
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                            ": expected key = value");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
            }
            cfg.values_[section.empty() ? key : section + "." + key] = value;
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        return parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            throw std::invalid_argument(origin_ + ": missing required key '" + key + "'");
        }
        return it->second;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    std::size_t get_size(const std::string& key) const {
        const double v = get_double(key);
        if (v < 0 || v != std::floor(v)) {
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not a nonnegative integer");
        }
        return static_cast<std::size_t>(v);
    }
    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        return has(key) ? get_size(key) : fallback;
    }

    bool get_bool(const std::string& key) const {
        const std::string v = get_string(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::invalid_argument(origin_ + ": key '" + key + "' is not a boolean: " + v);
    }
    bool get_bool(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        std::stringstream ss(get_string(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        if (out.empty()) throw std::invalid_argument(origin_ + ": key '" + key + "' is an empty list");
        return out;
    }
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const {
        return has(key) ? get_list(key) : fallback;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& s : get_list(key)) out.push_back(to_double(key, s));
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        auto b = s.begin(), e = s.end();
        while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
        while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
        return std::string(b, e);
    }
    double to_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not a number: " + v);
        }
    }

    std::string origin_ = "<none>";
    std::map<std::string, std::string> values_;
};

}  // namespace catekit
