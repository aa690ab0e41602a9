#pragma once

// Line-oriented config files:
//
//   # comment
//   [section]
//   key = value
//
// Keys outside a section or unknown to the caller are validation errors.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "eegnorm/error.hpp"

namespace eegnorm {

class ConfigFile {
public:
    using Section = std::map<std::string, std::string, std::less<>>;

    static ConfigFile parse(std::string_view text, const std::string& origin = "<config>") {
        ConfigFile cfg;
        std::istringstream is{std::string(text)};
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto where = origin + ":" + std::to_string(lineno);
            if (line.front() == '[') {
                if (line.back() != ']') throw ValidationError(where + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                cfg.sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
            if (section.empty()) throw ValidationError(where + ": key outside of a section");
            cfg.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static ConfigFile load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("config file not found: " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    [[nodiscard]] const std::map<std::string, Section, std::less<>>& sections() const { return sections_; }

    void set(const std::string& section, const std::string& key, std::string value) {
        sections_[section][key] = std::move(value);
    }

    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return std::string(s.substr(b, e - b + 1));
    }

private:
    std::map<std::string, Section, std::less<>> sections_;
};

namespace config_detail {

inline double to_double(std::string_view key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ValidationError("config: '" + std::string(key) + "' expects a number, got '" + v + "'");
}

template <typename Int>
Int to_int(std::string_view key, const std::string& v) {
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ValidationError("config: '" + std::string(key) + "' expects an integer, got '" + v + "'");
    }
    return out;
}

inline bool to_bool(std::string_view key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: '" + std::string(key) + "' expects true|false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(ConfigFile::trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!ConfigFile::trim(cur).empty() || !out.empty()) out.push_back(ConfigFile::trim(cur));
    return out;
}

}  // namespace config_detail

}  // namespace eegnorm
