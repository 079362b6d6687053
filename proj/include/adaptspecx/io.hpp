#pragma once

// CSV formats:
//   panel       time,<series 1>,...,<series N>; empty or NA cells are missing
//   covariates  <name>,<cov 1>,...,<cov P>; one row per series, matched by name
//   points      name,series,<cov 1>,...; blank series means "use covariates"
//   tidy        t,omega,point,statistic,value (summaries and truth surfaces)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adaptspecx/error.hpp"
#include "adaptspecx/panel.hpp"
#include "adaptspecx/summary.hpp"

namespace adaptspecx {

/// Reader error carrying a file:line:col location.
class ParseError : public InvalidArgument {
 public:
  ParseError(const std::string& file, std::size_t line, std::size_t col, const std::string& what)
      : InvalidArgument(file + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what) {}
};

struct CsvCell {
  std::string text;
  std::size_t column = 1;  // 1-based character column of the cell start
};

struct CsvRow {
  std::vector<CsvCell> cells;
  std::size_t line = 0;
};

struct CsvTable {
  std::string file;
  std::vector<CsvRow> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path);
  CsvTable table;
  table.file = path;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    CsvRow row;
    row.line = number;
    std::size_t i = 0;
    while (true) {
      CsvCell cell;
      cell.column = i + 1;
      if (i < line.size() && line[i] == '"') {
        ++i;
        while (true) {
          if (i >= line.size()) throw ParseError(path, number, cell.column, "unterminated quoted field");
          if (line[i] == '"') {
            if (i + 1 < line.size() && line[i + 1] == '"') {
              cell.text += '"';
              i += 2;
              continue;
            }
            ++i;
            break;
          }
          cell.text += line[i++];
        }
        if (i < line.size() && line[i] != ',') throw ParseError(path, number, i + 1, "expected ',' after quoted field");
      } else {
        while (i < line.size() && line[i] != ',') cell.text += line[i++];
      }
      row.cells.push_back(std::move(cell));
      if (i >= line.size()) break;
      ++i;  // comma
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool is_missing_cell(const std::string& text) {
  const std::string t = trim(text);
  return t.empty() || t == "NA" || t == "NaN" || t == "nan";
}

inline double parse_number(const CsvTable& table, const CsvRow& row, std::size_t idx) {
  const CsvCell& cell = row.cells[idx];
  const std::string t = trim(cell.text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
    throw ParseError(table.file, row.line, cell.column, "expected a finite number, got '" + cell.text + "'");
  return v;
}

inline void require_width(const CsvTable& table, const CsvRow& row, std::size_t width) {
  if (row.cells.size() != width)
    throw ParseError(table.file, row.line, 1,
                     "expected " + std::to_string(width) + " fields, found " + std::to_string(row.cells.size()));
}

/// Reads a wide panel CSV and, if `covariate_path` is nonempty, its covariates.
inline Panel read_panel(const std::string& panel_path, const std::string& covariate_path) {
  const CsvTable t = read_csv(panel_path);
  require(!t.rows.empty(), panel_path + ": empty file");
  const CsvRow& header = t.rows.front();
  if (header.cells.size() < 2) throw ParseError(panel_path, header.line, 1, "expected a time column and at least one series");
  Panel p;
  for (std::size_t c = 1; c < header.cells.size(); ++c) p.names.push_back(trim(header.cells[c].text));
  const int n = static_cast<int>(t.rows.size()) - 1, N = static_cast<int>(p.names.size());
  p.time.resize(n);
  p.values.resize(n, N);
  for (int r = 0; r < n; ++r) {
    const CsvRow& row = t.rows[r + 1];
    require_width(t, row, header.cells.size());
    p.time[r] = parse_number(t, row, 0);
    for (int j = 0; j < N; ++j)
      p.values(r, j) = is_missing_cell(row.cells[j + 1].text) ? std::numeric_limits<double>::quiet_NaN()
                                                               : parse_number(t, row, j + 1);
  }

  if (covariate_path.empty()) {
    p.covariates.resize(N, 0);
  } else {
    const CsvTable c = read_csv(covariate_path);
    require(!c.rows.empty(), covariate_path + ": empty file");
    const CsvRow& ch = c.rows.front();
    for (std::size_t k = 1; k < ch.cells.size(); ++k) p.covariate_names.push_back(trim(ch.cells[k].text));
    const int P = static_cast<int>(p.covariate_names.size());
    std::map<std::string, const CsvRow*> by_name;
    for (std::size_t r = 1; r < c.rows.size(); ++r) {
      const CsvRow& row = c.rows[r];
      require_width(c, row, ch.cells.size());
      if (!by_name.emplace(trim(row.cells[0].text), &row).second)
        throw ParseError(covariate_path, row.line, 1, "duplicate series '" + trim(row.cells[0].text) + "'");
    }
    p.covariates.resize(N, P);
    for (int j = 0; j < N; ++j) {
      auto it = by_name.find(p.names[j]);
      if (it == by_name.end()) throw InvalidArgument(covariate_path + ": no covariates for series '" + p.names[j] + "'");
      for (int k = 0; k < P; ++k) p.covariates(j, k) = parse_number(c, *it->second, k + 1);
    }
    require(static_cast<int>(by_name.size()) == N, covariate_path + ": covariate rows do not match the panel series");
  }
  validate_panel(p);
  return p;
}

inline std::string format_value(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string full_precision(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write " + path);
  out << text;
  require(static_cast<bool>(out), "write failed for " + path);
}

/// Values are written with 17 significant digits so a round trip is exact.
inline void write_panel(const Panel& p, const std::string& panel_path, const std::string& covariate_path) {
  std::ostringstream s;
  s << "time";
  for (const auto& name : p.names) s << ',' << name;
  s << '\n';
  for (int t = 0; t < p.length(); ++t) {
    s << full_precision(p.time[t]);
    for (int j = 0; j < p.series(); ++j) s << ',' << (p.missing(t, j) ? "NA" : full_precision(p.values(t, j)));
    s << '\n';
  }
  write_text(panel_path, s.str());
  if (covariate_path.empty()) return;
  std::ostringstream c;
  c << "series";
  for (const auto& name : p.covariate_names) c << ',' << name;
  c << '\n';
  for (int j = 0; j < p.series(); ++j) {
    c << p.names[j];
    for (int k = 0; k < p.covariates.cols(); ++k) c << ',' << full_precision(p.covariates(j, k));
    c << '\n';
  }
  write_text(covariate_path, c.str());
}

/// Query points from a CSV with columns name,series,<covariates...>.
inline std::vector<QueryPoint> read_points(const std::string& path, const std::vector<std::string>& series_names,
                                           int covariates) {
  const CsvTable t = read_csv(path);
  require(!t.rows.empty(), path + ": empty file");
  const std::size_t width = 2 + static_cast<std::size_t>(covariates);
  require_width(t, t.rows.front(), width);
  std::vector<QueryPoint> out;
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    const CsvRow& row = t.rows[r];
    if (row.cells.size() != 2) require_width(t, row, width);
    QueryPoint q;
    q.name = trim(row.cells[0].text);
    const std::string series = trim(row.cells[1].text);
    if (!series.empty()) {
      auto it = std::find(series_names.begin(), series_names.end(), series);
      if (it == series_names.end()) throw ParseError(path, row.line, row.cells[1].column, "unknown series '" + series + "'");
      q.series = static_cast<int>(it - series_names.begin());
    } else {
      if (row.cells.size() != width) throw ParseError(path, row.line, 1, "covariate point needs every covariate");
      q.u.resize(covariates);
      for (int k = 0; k < covariates; ++k) q.u[k] = parse_number(t, row, 2 + k);
    }
    out.push_back(std::move(q));
  }
  return out;
}

/// New covariate values from a CSV with columns name,<covariates...>.
inline std::vector<QueryPoint> read_covariate_points(const std::string& path, int covariates) {
  const CsvTable t = read_csv(path);
  require(!t.rows.empty(), path + ": empty file");
  const std::size_t width = 1 + static_cast<std::size_t>(covariates);
  require_width(t, t.rows.front(), width);
  std::vector<QueryPoint> out;
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    const CsvRow& row = t.rows[r];
    require_width(t, row, width);
    QueryPoint q;
    q.name = trim(row.cells[0].text);
    q.u.resize(covariates);
    for (int k = 0; k < covariates; ++k) q.u[k] = parse_number(t, row, 1 + k);
    out.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tidy output

struct TidyRow {
  int t = 0;  // 1-based; 0 = not applicable
  double omega = std::numeric_limits<double>::quiet_NaN();
  std::string point;
  std::string statistic;
  double value = 0.0;
};

inline std::string tidy_csv(const std::vector<TidyRow>& rows) {
  std::ostringstream s;
  s << "t,omega,point,statistic,value\n";
  for (const auto& r : rows) {
    s << (r.t > 0 ? std::to_string(r.t) : "") << ',' << (std::isnan(r.omega) ? "" : format_value(r.omega)) << ','
      << r.point << ',' << r.statistic << ',' << format_value(r.value) << '\n';
  }
  return s.str();
}

inline void append_band(std::vector<TidyRow>& rows, const std::string& point, const std::string& name,
                        const SurfaceBand& band) {
  const struct {
    const char* suffix;
    const Eigen::VectorXd* v;
  } parts[] = {{"", &band.mean}, {"_q05", &band.q05}, {"_q50", &band.q50}, {"_q95", &band.q95}};
  for (const auto& part : parts)
    for (Index t = 0; t < part.v->size(); ++t)
      rows.push_back({static_cast<int>(t) + 1, std::numeric_limits<double>::quiet_NaN(), point, name + part.suffix, (*part.v)[t]});
}

inline std::vector<TidyRow> summary_rows(const PosteriorSummary& s) {
  std::vector<TidyRow> rows;
  for (const auto& p : s.points) {
    append_band(rows, p.name, "mean", p.mean);
    if (p.variance.mean.size() > 0) append_band(rows, p.name, "variance", p.variance);
    for (Index t = 0; t < p.log_spectrum.rows(); ++t)
      for (Index k = 0; k < p.log_spectrum.cols(); ++k)
        rows.push_back({static_cast<int>(t) + 1, s.omega[k], p.name, "log_spectrum", p.log_spectrum(t, k)});
  }
  return rows;
}

/// Surfaces of one point read back from a tidy CSV.
struct TidySurfaces {
  Eigen::VectorXd mean;
  Eigen::MatrixXd log_spectrum;
  Eigen::VectorXd omega;
};

/// Reads the "mean" and "log_spectrum" statistics of every point in a tidy CSV.
inline std::map<std::string, TidySurfaces> read_tidy_surfaces(const std::string& path) {
  const CsvTable t = read_csv(path);
  require(!t.rows.empty(), path + ": empty file");
  require_width(t, t.rows.front(), 5);
  struct Acc {
    std::map<int, double> mean;
    std::map<int, std::map<double, double>> spec;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    const CsvRow& row = t.rows[r];
    require_width(t, row, 5);
    const std::string stat = trim(row.cells[3].text);
    if (stat != "mean" && stat != "log_spectrum") continue;
    const int time = static_cast<int>(parse_number(t, row, 0));
    const double value = parse_number(t, row, 4);
    Acc& a = acc[trim(row.cells[2].text)];
    if (stat == "mean")
      a.mean[time] = value;
    else
      a.spec[time][parse_number(t, row, 1)] = value;
  }
  std::map<std::string, TidySurfaces> out;
  for (auto& [name, a] : acc) {
    TidySurfaces s;
    s.mean.resize(static_cast<Index>(a.mean.size()));
    Index i = 0;
    for (auto& [time, v] : a.mean) s.mean[i++] = v;
    if (!a.spec.empty()) {
      const Index F = static_cast<Index>(a.spec.begin()->second.size());
      s.log_spectrum.resize(static_cast<Index>(a.spec.size()), F);
      s.omega.resize(F);
      Index row = 0;
      for (auto& [time, m] : a.spec) {
        require(static_cast<Index>(m.size()) == F, path + ": point '" + name + "' has a ragged frequency grid");
        Index k = 0;
        for (auto& [w, v] : m) {
          if (row == 0) s.omega[k] = w;
          s.log_spectrum(row, k++) = v;
        }
        ++row;
      }
    }
    out.emplace(name, std::move(s));
  }
  return out;
}

}  // namespace adaptspecx
