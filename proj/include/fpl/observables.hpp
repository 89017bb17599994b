#pragma once

// Time series of population observables and their CSV form.
//
// CSV schema (header line first, numbers with 17 significant digits):
//   t, lambda_1..n, brbar_1..n, mean_prior_1..n, bbox_lo_1..n, bbox_hi_1..n

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fpl/error.hpp"

namespace fpl {

struct ObservableRecord {
  double t = 0.0;
  std::vector<double> lambda;      // mean empirical probabilities
  std::vector<double> mean_br;     // mean best-response vector
  std::vector<double> mean_prior;  // coordinate-wise mean of the priors
  std::vector<double> bbox_lo, bbox_hi;
};

struct ObservableSeries {
  std::size_t n = 0;
  std::vector<ObservableRecord> records;

  void push(ObservableRecord r) {
    if (!records.empty() && !(r.t > records.back().t)) {
      throw InvalidArgument("observable times must be strictly increasing");
    }
    records.push_back(std::move(r));
  }
  std::size_t size() const { return records.size(); }
  const ObservableRecord& back() const { return records.back(); }
};

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv_row(std::ostream& os, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << format_number(row[i]);
  }
  os << '\n';
}

inline std::vector<std::string> observable_columns(std::size_t n) {
  std::vector<std::string> cols{"t"};
  for (const char* prefix : {"lambda_", "brbar_", "mean_prior_", "bbox_lo_", "bbox_hi_"}) {
    for (std::size_t i = 1; i <= n; ++i) cols.push_back(prefix + std::to_string(i));
  }
  return cols;
}

inline void write_observables_csv(std::ostream& os, const ObservableSeries& series) {
  const auto cols = observable_columns(series.n);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  std::vector<double> row;
  for (const auto& r : series.records) {
    row.assign(1, r.t);
    for (const auto* v : {&r.lambda, &r.mean_br, &r.mean_prior, &r.bbox_lo, &r.bbox_hi}) {
      row.insert(row.end(), v->begin(), v->end());
    }
    write_csv_row(os, row);
  }
}

/// Numeric CSV table with a header line.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw InvalidArgument("missing CSV column '" + name + "'");
  }
};

inline CsvTable read_csv(std::istream& is) {
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("empty CSV");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InvalidArgument("CSV line " + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
    }
    if (row.size() != table.header.size()) {
      throw InvalidArgument("CSV line " + std::to_string(lineno) + ": wrong number of fields");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace fpl
