#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "types.hpp"

namespace sepfx {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
            field.pop_back();
        std::size_t b = field.find_first_not_of(' ');
        out.push_back(b == std::string::npos ? "" : field.substr(b));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double parse_double(const std::string& s, const std::string& column,
                           std::size_t row) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || s.empty())
        throw data_error("row " + std::to_string(row) + ", column '" + column +
                         "': cannot parse '" + s + "' as a number");
    return v;
}

inline int parse_int(const std::string& s, const std::string& column,
                     std::size_t row) {
    double v = parse_double(s, column, row);
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw data_error("row " + std::to_string(row) + ", column '" + column +
                         "': expected an integer, got '" + s + "'");
    return i;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path,
                        const std::string& time_col = "time",
                        const std::string& event_col = "event",
                        const std::string& treat_col = "treatment",
                        std::vector<std::string> covar_cols = {}) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw data_error("'" + path + "' is empty");
    auto header = detail::split_csv_line(line);

    auto find_col = [&](const std::string& name) {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw data_error("'" + path + "' has no column '" + name + "'");
    };
    std::size_t ti = find_col(time_col);
    std::size_t ei = find_col(event_col);
    std::size_t ai = find_col(treat_col);
    if (covar_cols.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (j != ti && j != ei && j != ai) covar_cols.push_back(header[j]);
    }
    std::vector<std::size_t> ci;
    ci.reserve(covar_cols.size());
    for (const auto& name : covar_cols) ci.push_back(find_col(name));

    Dataset d;
    d.covariate_names = covar_cols;
    d.covariates.resize(covar_cols.size());
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != header.size())
            throw data_error("row " + std::to_string(row) + ": has " +
                             std::to_string(f.size()) + " fields, header has " +
                             std::to_string(header.size()));
        d.time.push_back(detail::parse_double(f[ti], time_col, row));
        d.event.push_back(detail::parse_int(f[ei], event_col, row));
        d.treatment.push_back(detail::parse_int(f[ai], treat_col, row));
        for (std::size_t j = 0; j < ci.size(); ++j)
            d.covariates[j].push_back(
                detail::parse_double(f[ci[j]], covar_cols[j], row));
    }
    return d;
}

inline void save_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path + "'");
    out << "time,event,treatment";
    for (const auto& name : d.covariate_names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << detail::fmt17(d.time[i]) << ',' << d.event[i] << ','
            << d.treatment[i];
        for (const auto& col : d.covariates)
            out << ',' << detail::fmt17(col[i]);
        out << '\n';
    }
}

inline void save_curve_csv(const RiskCurve& c, std::ostream& out,
                           const std::string& label_col = "",
                           const std::string& label = "") {
    if (!label_col.empty()) out << label_col << ',';
    out << "time,value,se,lo,hi\n";
    for (std::size_t k = 0; k < c.times.size(); ++k) {
        if (!label_col.empty()) out << label << ',';
        out << detail::fmt17(c.times[k]) << ',' << detail::fmt17(c.values[k])
            << ',' << detail::fmt17(c.se.empty() ? 0.0 : c.se[k]) << ','
            << detail::fmt17(c.lo.empty() ? c.values[k] : c.lo[k]) << ','
            << detail::fmt17(c.hi.empty() ? c.values[k] : c.hi[k]) << '\n';
    }
}

}  // namespace sepfx
