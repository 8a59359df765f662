#pragma once

// Plain-text run configuration: INI-style sections with key = value lines.
// '#' and ';' start comments; blank lines are ignored.

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "erd/errors.hpp"

namespace erd {

class Config {
public:
    static Config parse(std::string_view content) {
        Config cfg;
        std::string section;
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start <= content.size()) {
            std::size_t end = content.find('\n', start);
            if (end == std::string_view::npos) end = content.size();
            std::string_view line = content.substr(start, end - start);
            ++line_no;
            const bool last = end == content.size();
            start = end + 1;
            line = trim(line);
            if (!line.empty() && line.front() != '#' && line.front() != ';') {
                if (line.front() == '[') {
                    if (line.back() != ']' || line.size() < 3) {
                        throw ParseError("config line " + std::to_string(line_no) +
                                         ": malformed section header");
                    }
                    section = std::string(trim(line.substr(1, line.size() - 2)));
                } else {
                    const std::size_t eq = line.find('=');
                    if (eq == std::string_view::npos) {
                        throw ParseError("config line " + std::to_string(line_no) +
                                         ": expected 'key = value'");
                    }
                    std::string key(trim(line.substr(0, eq)));
                    std::string value(trim(line.substr(eq + 1)));
                    if (key.empty()) {
                        throw ParseError("config line " + std::to_string(line_no) + ": empty key");
                    }
                    cfg.values_[section + "." + key] = value;
                }
            }
            if (last) break;
        }
        return cfg;
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string get_or(const std::string& section, const std::string& key,
                       std::string fallback) const {
        auto v = get(section, key);
        return v ? *v : std::move(fallback);
    }

    double get_double(const std::string& section, const std::string& key,
                      double fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        try {
            return std::stod(*v);
        } catch (...) {
            throw ParseError("config value " + section + "." + key + " = '" + *v +
                             "' is not a number");
        }
    }

    int get_int(const std::string& section, const std::string& key, int fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        try {
            return std::stoi(*v);
        } catch (...) {
            throw ParseError("config value " + section + "." + key + " = '" + *v +
                             "' is not an integer");
        }
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    void set(const std::string& section, const std::string& key, std::string value) {
        values_[section + "." + key] = std::move(value);
    }

private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
            s.remove_prefix(1);
        }
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
            s.remove_suffix(1);
        }
        return s;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace erd
