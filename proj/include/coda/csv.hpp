#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coda/types.hpp"

namespace coda {
namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        // trim surrounding whitespace and a trailing CR from Windows files
        std::size_t b = cell.find_first_not_of(" \t\r");
        std::size_t e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double parse_cell(const std::string& cell, const std::string& path, std::size_t row,
                         std::size_t col) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ValidationError(path + " row " + std::to_string(row) + " column " +
                              std::to_string(col) + ": cannot parse '" + cell + "' as a number");
    return v;
}

struct CsvLayout {
    Eigen::Index r = 0, s = 0;
    bool has_y = false;
};

// Header must read x1..xr, a, m1..ms and, for the primary sample, a final y.
inline CsvLayout parse_header(const std::vector<std::string>& header, const std::string& path,
                              bool expect_y) {
    CsvLayout lay;
    std::size_t i = 0;
    while (i < header.size() && header[i] == "x" + std::to_string(i + 1)) ++i;
    lay.r = Eigen::Index(i);
    if (lay.r == 0)
        throw ValidationError(path + ": header must start with covariate columns x1, x2, ...");
    if (i >= header.size() || header[i] != "a")
        throw ValidationError(path + ": expected treatment column 'a' after the covariates");
    ++i;
    std::size_t m = 0;
    while (i < header.size() && header[i] == "m" + std::to_string(m + 1)) {
        ++i;
        ++m;
    }
    lay.s = Eigen::Index(m);
    if (lay.s == 0)
        throw ValidationError(path + ": expected intermediate-outcome columns m1, m2, ...");
    if (expect_y) {
        if (i >= header.size() || header[i] != "y")
            throw ValidationError(path + ": primary file must end with outcome column y");
        ++i;
        lay.has_y = true;
    }
    if (i != header.size())
        throw ValidationError(path + ": unexpected trailing column '" + header[i] + "'");
    return lay;
}

inline std::vector<std::vector<double>> read_rows(const std::string& path, CsvLayout& lay,
                                                  bool expect_y) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty file, header required");
    lay = parse_header(split_csv_line(line), path, expect_y);
    const std::size_t width = std::size_t(lay.r + 1 + lay.s + (lay.has_y ? 1 : 0));

    std::vector<std::vector<double>> rows;
    std::size_t rowno = 1;
    while (std::getline(in, line)) {
        ++rowno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != width)
            throw ValidationError(path + " row " + std::to_string(rowno) + ": expected " +
                                  std::to_string(width) + " columns, found " +
                                  std::to_string(cells.size()));
        std::vector<double> vals(width);
        for (std::size_t c = 0; c < width; ++c)
            vals[c] = parse_cell(cells[c], path, rowno, c + 1);
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw ValidationError(path + ": no data rows");
    return rows;
}

}  // namespace detail

inline PrimarySample read_primary_csv(const std::string& path) {
    detail::CsvLayout lay;
    const auto rows = detail::read_rows(path, lay, true);
    const Eigen::Index n = Eigen::Index(rows.size());
    PrimarySample e;
    e.X.resize(n, lay.r);
    e.A.resize(n);
    e.M.resize(n, lay.s);
    e.Y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[std::size_t(i)];
        for (Eigen::Index j = 0; j < lay.r; ++j) e.X(i, j) = row[std::size_t(j)];
        e.A[i] = row[std::size_t(lay.r)];
        for (Eigen::Index k = 0; k < lay.s; ++k) e.M(i, k) = row[std::size_t(lay.r + 1 + k)];
        e.Y[i] = row[std::size_t(lay.r + 1 + lay.s)];
        if (e.A[i] != 0.0 && e.A[i] != 1.0)
            throw ValidationError(path + " row " + std::to_string(i + 2) +
                                  ": treatment must be 0 or 1");
    }
    return e;
}

inline AuxiliarySample read_auxiliary_csv(const std::string& path) {
    detail::CsvLayout lay;
    const auto rows = detail::read_rows(path, lay, false);
    const Eigen::Index n = Eigen::Index(rows.size());
    AuxiliarySample u;
    u.X.resize(n, lay.r);
    u.A.resize(n);
    u.M.resize(n, lay.s);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[std::size_t(i)];
        for (Eigen::Index j = 0; j < lay.r; ++j) u.X(i, j) = row[std::size_t(j)];
        u.A[i] = row[std::size_t(lay.r)];
        for (Eigen::Index k = 0; k < lay.s; ++k) u.M(i, k) = row[std::size_t(lay.r + 1 + k)];
        if (u.A[i] != 0.0 && u.A[i] != 1.0)
            throw ValidationError(path + " row " + std::to_string(i + 2) +
                                  ": treatment must be 0 or 1");
    }
    return u;
}

namespace detail {
inline void write_header(std::ostream& os, Eigen::Index r, Eigen::Index s, bool with_y) {
    for (Eigen::Index j = 0; j < r; ++j) os << "x" << (j + 1) << ",";
    os << "a";
    for (Eigen::Index k = 0; k < s; ++k) os << ",m" << (k + 1);
    if (with_y) os << ",y";
    os << "\n";
}
}  // namespace detail

inline void write_primary_csv(const std::string& path, const PrimarySample& e) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    os.precision(17);
    detail::write_header(os, e.r(), e.s(), true);
    for (Eigen::Index i = 0; i < e.n(); ++i) {
        for (Eigen::Index j = 0; j < e.r(); ++j) os << e.X(i, j) << ",";
        os << int(e.A[i]);
        for (Eigen::Index k = 0; k < e.s(); ++k) os << "," << e.M(i, k);
        os << "," << e.Y[i] << "\n";
    }
}

inline void write_auxiliary_csv(const std::string& path, const AuxiliarySample& u) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    os.precision(17);
    detail::write_header(os, u.r(), u.s(), false);
    for (Eigen::Index i = 0; i < u.n(); ++i) {
        for (Eigen::Index j = 0; j < u.r(); ++j) os << u.X(i, j) << ",";
        os << int(u.A[i]);
        for (Eigen::Index k = 0; k < u.s(); ++k) os << "," << u.M(i, k);
        os << "\n";
    }
}

}  // namespace coda
