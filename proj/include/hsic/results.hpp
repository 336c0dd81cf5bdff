#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hsic/errors.hpp"

namespace hsic {

/// Fixed-format double rendering so identical runs produce identical
/// output bytes.
inline std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median_of: empty input");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        double lower = *std::max_element(v.begin(), v.begin() + mid);
        m = 0.5 * (m + lower);
    }
    return m;
}

/// Linear-interpolation quantile, q in [0, 1].
inline double quantile_of(std::vector<double> v, double q) {
    if (v.empty()) throw InvalidArgument("quantile_of: empty input");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw InvalidArgument("mean_of: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Standard error of the mean; defined for >= 2 values only.
inline double stderr_of(const std::vector<double>& v) {
    if (v.size() < 2) throw InvalidArgument("stderr_of: need >= 2 values");
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double var = ss / static_cast<double>(v.size() - 1);
    return std::sqrt(var / static_cast<double>(v.size()));
}

/// A rectangular table of strings with a header row; the common carrier
/// for per-run records and aggregates.
struct ResultsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size())
            throw InvalidArgument("ResultsTable: row width mismatch");
        rows.push_back(std::move(row));
    }

    std::string to_csv() const {
        std::string out;
        for (std::size_t i = 0; i < columns.size(); ++i)
            out += (i ? "," : "") + columns[i];
        out += "\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                out += (i ? "," : "") + row[i];
            out += "\n";
        }
        return out;
    }

    std::string to_markdown() const {
        std::string out = "|";
        for (const auto& c : columns) out += " " + c + " |";
        out += "\n|";
        for (std::size_t i = 0; i < columns.size(); ++i) out += " --- |";
        out += "\n";
        for (const auto& row : rows) {
            out += "|";
            for (const auto& cell : row) out += " " + cell + " |";
            out += "\n";
        }
        return out;
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ParseError("ResultsTable: cannot open " + path);
        out << to_csv();
    }

    void write_markdown(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ParseError("ResultsTable: cannot open " + path);
        out << to_markdown();
    }

    static ResultsTable read_csv(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("ResultsTable: cannot open " + path);
        ResultsTable t;
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> fields;
            std::size_t pos = 0;
            while (true) {
                const std::size_t comma = line.find(',', pos);
                fields.push_back(line.substr(pos, comma - pos));
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            if (first) {
                t.columns = std::move(fields);
                first = false;
            } else {
                t.add_row(std::move(fields));
            }
        }
        return t;
    }
};

} // namespace hsic
