#pragma once

#include "sympsteer/control_signal.hpp"
#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"
#include "sympsteer/franks.hpp"

#include "json.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace sympsteer {

using Json = nlohmann::json;

/// FNV-1a over raw bytes: the input digest recorded in reports.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecFileError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecFileError("cannot write '" + path + "'");
  out << content;
  if (!out) throw SpecFileError("write failure on '" + path + "'");
}

inline std::string digest_string(const std::string& bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a:%016" PRIx64, fnv1a64(bytes.data(), bytes.size()));
  return buf;
}

inline std::string digest_file(const std::string& path) { return digest_string(read_file(path)); }

/// Full-precision decimal: round-trips any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_matrix_file(const std::string& path, const Matrix& x) {
  std::ostringstream out;
  for (int r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < x.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(x(r, c));
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

inline Matrix read_matrix_file(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<double> row;
    double v = 0.0;
    while (fields >> v) row.push_back(v);
    if (!fields.eof())
      throw SpecFileError("matrix file '" + path + "': non-numeric entry on line " +
                          std::to_string(rows.size() + 1));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw SpecFileError("matrix file '" + path + "' is empty");
  const std::size_t cols = rows.front().size();
  for (const auto& row : rows)
    if (row.size() != cols)
      throw SpecFileError("matrix file '" + path + "' has ragged rows");
  Matrix x(static_cast<int>(rows.size()), static_cast<int>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      x(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return x;
}

/// Hessian-coefficient column order of the control CSV: (i <= j) lexicographic.
inline std::string control_csv_header(int m) {
  std::string header = "t";
  for (int i = 1; i <= m; ++i)
    for (int j = i; j <= m; ++j)
      header += ",u_" + std::to_string(i) + "_" + std::to_string(j);
  return header;
}

inline void write_control_csv(const std::string& path, const ControlSignal& u, int m) {
  if (u.channels() != m * (m + 1) / 2)
    throw GridError("control CSV: channel count does not match the dimension");
  std::ostringstream out;
  out << control_csv_header(m) << '\n';
  for (int j = 0; j <= u.grid(); ++j) {
    out << format_double(u.time_at(j));
    for (int c = 0; c < u.channels(); ++c) out << ',' << format_double(u.samples()(j, c));
    out << '\n';
  }
  write_text_file(path, out.str());
}

/// Reads a control CSV back into a signal. The support is left unrestricted:
/// the file's samples are taken verbatim, so verification sees exactly what
/// was emitted (or tampered with).
inline ControlSignal read_control_csv(const std::string& path, int m) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw SpecFileError("control CSV '" + path + "' is empty");
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
  if (line != control_csv_header(m))
    throw SpecFileError("control CSV '" + path + "': header does not match '" +
                        control_csv_header(m) + "'");

  const int k = m * (m + 1) / 2;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(fields, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw SpecFileError("control CSV '" + path + "': non-numeric entry on data line " +
                            std::to_string(rows.size() + 1));
      }
    }
    if (static_cast<int>(row.size()) != k + 1)
      throw SpecFileError("control CSV '" + path + "': expected " + std::to_string(k + 1) +
                          " columns, found " + std::to_string(row.size()));
    times.push_back(row.front());
    row.erase(row.begin());
    rows.push_back(std::move(row));
  }
  if (rows.size() < 3)
    throw SpecFileError("control CSV '" + path + "': need at least 3 grid rows");

  const int grid = static_cast<int>(rows.size()) - 1;
  const double horizon = times.back();
  if (!(horizon > 0.0) || times.front() != 0.0)
    throw SpecFileError("control CSV '" + path + "': times must run from 0 to a positive T");
  const double dt = horizon / static_cast<double>(grid);
  for (int j = 0; j <= grid; ++j)
    if (std::abs(times[static_cast<std::size_t>(j)] - dt * j) > 1e-9 * (1.0 + horizon))
      throw SpecFileError("control CSV '" + path + "': grid times are not uniform");

  Matrix samples(grid + 1, k);
  for (int j = 0; j <= grid; ++j)
    for (int c = 0; c < k; ++c)
      samples(j, c) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
  return ControlSignal(std::move(samples), horizon,
                       Support{Interval{-1.0, horizon + 1.0}});
}

inline void write_sweep_csv(const std::string& path, const FranksSweep& sweep) {
  std::ostringstream out;
  out << "r,sample,solved,norm_C0,norm_C2,ratio\n";
  for (const FranksSample& row : sweep.rows) {
    out << format_double(row.radius) << ',' << row.sample << ',' << (row.solved ? 1 : 0) << ','
        << format_double(row.norm_c0) << ',' << format_double(row.norm_c2) << ','
        << format_double(row.ratio) << '\n';
  }
  write_text_file(path, out.str());
}

inline Json matrix_to_json(const Matrix& x) {
  Json rows = Json::array();
  for (int r = 0; r < x.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < x.cols(); ++c) row.push_back(x(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Non-finite values (the one-dimensional gap is infinite) become null.
inline Json finite_or_null(double v) {
  if (std::isfinite(v)) return Json(v);
  return Json();
}

inline Json contreras_to_json(const ContrerasReport& r) {
  Json j;
  j["pass"] = r.pass;
  j["gap"] = finite_or_null(r.min_gap);
  j["best_time"] = finite_or_null(r.best_time);
  Json ev = Json::array();
  for (int i = 0; i < r.eigenvalues.size(); ++i) ev.push_back(r.eigenvalues(i));
  j["eigenvalues"] = std::move(ev);
  return j;
}

/// One trailing newline; keys are emitted sorted, so equal reports are equal
/// byte for byte.
inline std::string report_to_string(const Json& report) { return report.dump(2) + "\n"; }

}  // namespace sympsteer
