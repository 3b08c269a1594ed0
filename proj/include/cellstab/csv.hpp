#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cellstab/common.hpp"

namespace cellstab::csv {

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

inline double to_double(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw Error(where + ": not a number: '" + s + "'");
    return v;
}

inline long to_long(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) throw Error(where + ": not an integer: '" + s + "'");
    return v;
}

/// Shortest round-trippable representation.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw Error("csv: missing column '" + name + "'");
    }
};

inline Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("csv: cannot open " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw Error("csv: empty file " + path.string());
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto row = split(line);
        if (row.size() != t.header.size()) {
            throw Error("csv: " + path.string() + " line " + std::to_string(lineno) + " has " +
                        std::to_string(row.size()) + " fields, expected " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace cellstab::csv
