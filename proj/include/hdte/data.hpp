#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdte/errors.hpp"

namespace hdte {

/// One observation row is (y, d, z, x). d and z are binary; z doubles as the
/// treatment itself in the exogenous case (d == z).
struct RawData {
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  Eigen::VectorXd z;
  Eigen::MatrixXd x;
  std::vector<std::string> x_names;

  Eigen::Index n() const { return y.size(); }

  void validate() const {
    const Eigen::Index nn = y.size();
    if (d.size() != nn || z.size() != nn || x.rows() != nn) {
      throw std::invalid_argument("RawData: row count mismatch across y/d/z/x");
    }
    for (Eigen::Index i = 0; i < nn; ++i) {
      if (d[i] != 0.0 && d[i] != 1.0) {
        throw std::invalid_argument("RawData: d must be 0/1, row " + std::to_string(i));
      }
      if (z[i] != 0.0 && z[i] != 1.0) {
        throw std::invalid_argument("RawData: z must be 0/1, row " + std::to_string(i));
      }
      if (!std::isfinite(y[i])) {
        throw std::invalid_argument("RawData: non-finite y, row " + std::to_string(i));
      }
    }
    if (!x.allFinite()) throw std::invalid_argument("RawData: non-finite covariate value");
  }
};

namespace csv {

/// Splits one RFC-4180 record. Quoted fields may contain commas and doubled quotes.
inline std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c == '\r') {
      // CRLF line endings
    } else {
      field.push_back(c);
    }
  }
  if (quoted) {
    throw IoError("CSV: unterminated quote at line " + std::to_string(line_no));
  }
  out.push_back(field);
  return out;
}

inline double parse_number(const std::string& s, std::size_t line_no, const std::string& col) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw IoError("CSV: non-numeric value '" + s + "' in column '" + col +
                             "' at line " + std::to_string(line_no));
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos != s.size() || s.empty()) {
    throw IoError("CSV: non-numeric value '" + s + "' in column '" + col +
                             "' at line " + std::to_string(line_no));
  }
  if (!std::isfinite(v)) {
    throw IoError("CSV: non-finite value in column '" + col + "' at line " +
                             std::to_string(line_no));
  }
  return v;
}

}  // namespace csv

/// Reads a headered CSV into RawData. Columns named y/d/z per the arguments; all
/// remaining columns become raw covariates in header order. z_col may be empty,
/// in which case z := d (exogenous treatment).
inline RawData load_csv(std::istream& in, const std::string& y_col, const std::string& d_col,
                        const std::string& z_col) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("CSV: empty input, header required");
  const std::vector<std::string> header = csv::split_record(line, 1);

  int yi = -1, di = -1, zi = -1;
  std::vector<int> xcols;
  std::vector<std::string> xnames;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == y_col) {
      yi = static_cast<int>(j);
    } else if (header[j] == d_col) {
      di = static_cast<int>(j);
    } else if (!z_col.empty() && header[j] == z_col) {
      zi = static_cast<int>(j);
    } else {
      xcols.push_back(static_cast<int>(j));
      xnames.push_back(header[j]);
    }
  }
  if (yi < 0) throw IoError("CSV: outcome column '" + y_col + "' not found");
  if (di < 0) throw IoError("CSV: treatment column '" + d_col + "' not found");
  if (!z_col.empty() && zi < 0) {
    throw IoError("CSV: instrument column '" + z_col + "' not found");
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> rec = csv::split_record(line, line_no);
    if (rec.size() != header.size()) {
      throw IoError("CSV: field count mismatch at line " + std::to_string(line_no) +
                               " (" + std::to_string(rec.size()) + " fields, header has " +
                               std::to_string(header.size()) + ")");
    }
    std::vector<double> row(rec.size());
    for (std::size_t j = 0; j < rec.size(); ++j) {
      row[j] = csv::parse_number(rec[j], line_no, header[j]);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("CSV: no data rows");

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  RawData out;
  out.y.resize(n);
  out.d.resize(n);
  out.z.resize(n);
  out.x.resize(n, static_cast<Eigen::Index>(xcols.size()));
  out.x_names = xnames;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.y[i] = rows[i][yi];
    out.d[i] = rows[i][di];
    out.z[i] = (zi >= 0) ? rows[i][zi] : rows[i][di];
    for (std::size_t j = 0; j < xcols.size(); ++j) {
      out.x(i, static_cast<Eigen::Index>(j)) = rows[i][xcols[j]];
    }
  }
  out.validate();
  return out;
}

inline RawData load_csv_file(const std::string& path, const std::string& y_col,
                             const std::string& d_col, const std::string& z_col) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file: " + path);
  return load_csv(in, y_col, d_col, z_col);
}

}  // namespace hdte
