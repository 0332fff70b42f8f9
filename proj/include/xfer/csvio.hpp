#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xfer/errors.hpp"
#include "xfer/numfmt.hpp"
#include "xfer/sweep.hpp"

namespace xfer {

// results.csv is the source of truth for reporting: the grid reconstructed
// from it is exactly what the aggregate tables and plots consume. Undefined
// metrics serialize as empty fields. The wall_seconds column is pinned to 0
// so that reruns of an identical configuration stay byte-identical; measured
// timings live in the per-run records and the log.
inline constexpr const char* kResultsHeader =
    "run_id,init_mode,reduction_fraction,seed,train_size,auroc,accuracy,precision,sensitivity,"
    "undefined_metrics,epochs,wall_seconds,test_set_hash,source_ckpt_hash";

inline std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline std::string results_row(const SweepCell& cell, const std::string& test_set_hash) {
  std::ostringstream os;
  os << cell.run_id << ',' << to_string(cell.mode) << ',' << format_double(cell.fraction) << ','
     << cell.seed << ',' << cell.train_size << ',' << opt_field(cell.metrics.auroc) << ','
     << opt_field(cell.metrics.accuracy) << ',' << opt_field(cell.metrics.precision) << ','
     << opt_field(cell.metrics.sensitivity) << ',' << cell.metrics.undefined_count() << ','
     << cell.epochs << ',' << format_double(0.0) << ',' << test_set_hash << ','
     << cell.source_ckpt_hash;
  return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace detail

// Reconstructs a SweepResult from results.csv text. Mode/fraction/seed axes
// are recovered in first-appearance order (the writer emits them in canonical
// order).
inline SweepResult parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("results.csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw IoError("results.csv header does not match schema");

  SweepResult result;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 14) {
      throw IoError("results.csv row has " + std::to_string(f.size()) + " fields, expected 14");
    }
    SweepCell cell;
    cell.run_id = f[0];
    auto mode = parse_init_mode(f[1]);
    if (!mode) throw IoError("results.csv: unknown init_mode '" + f[1] + "'");
    cell.mode = *mode;
    cell.fraction = std::stod(f[2]);
    cell.seed = std::stoull(f[3]);
    cell.train_size = std::stol(f[4]);
    cell.metrics.auroc = detail::parse_opt(f[5]);
    cell.metrics.accuracy = detail::parse_opt(f[6]);
    cell.metrics.precision = detail::parse_opt(f[7]);
    cell.metrics.sensitivity = detail::parse_opt(f[8]);
    if (cell.metrics.undefined_count() != std::stoi(f[9])) {
      throw IoError("results.csv: undefined_metrics column disagrees with empty fields in row " +
                    cell.run_id);
    }
    cell.epochs = std::stoi(f[10]);
    cell.wall_seconds = std::stod(f[11]);
    if (result.cells.empty()) {
      result.test_set_hash = f[12];
    } else if (result.test_set_hash != f[12]) {
      throw IoError("results.csv: test_set_hash is not constant across rows");
    }
    cell.source_ckpt_hash = f[13];

    bool seen_mode = false;
    for (InitMode m : result.modes) seen_mode |= (m == cell.mode);
    if (!seen_mode) result.modes.push_back(cell.mode);
    bool seen_fraction = false;
    for (double fr : result.fractions) seen_fraction |= (fr == cell.fraction);
    if (!seen_fraction) result.fractions.push_back(cell.fraction);
    bool seen_seed = false;
    for (std::uint64_t s : result.seeds) seen_seed |= (s == cell.seed);
    if (!seen_seed) result.seeds.push_back(cell.seed);

    result.cells.push_back(std::move(cell));
  }
  std::sort(result.fractions.begin(), result.fractions.end());
  return result;
}

// Missing coordinates of the (mode x fraction x seed) cross-product; empty
// means the grid is complete.
inline std::vector<std::string> missing_cells(const SweepResult& result,
                                              const std::vector<InitMode>& modes,
                                              const std::vector<double>& fractions,
                                              const std::vector<std::uint64_t>& seeds) {
  std::vector<std::string> missing;
  for (InitMode m : modes) {
    for (double f : fractions) {
      for (std::uint64_t s : seeds) {
        if (result.find(m, f, s) == nullptr) missing.push_back(make_run_id(m, f, s));
      }
    }
  }
  return missing;
}

// tables.csv: one row per (table, mode, metric); value empty when undefined.
inline constexpr const char* kTablesHeader = "table,mode,metric,value,excluded";

inline std::string tables_csv(const AggregateTables& tables) {
  std::ostringstream os;
  os << kTablesHeader << '\n';
  auto emit = [&os](const char* table,
                    const std::vector<std::pair<InitMode, MetricAggregates>>& rows) {
    for (const auto& [mode, aggs] : rows) {
      for (Metric m : kAllMetrics) {
        const Aggregate& a = aggs[static_cast<std::size_t>(m)];
        os << table << ',' << to_string(mode) << ',' << to_string(m) << ','
           << opt_field(a.value) << ',' << a.excluded << '\n';
      }
    }
  };
  emit("improvement", tables.improvement);
  emit("std_reduction", tables.stddev_reduction);
  emit("degradation", tables.degradation);
  return os.str();
}

}  // namespace xfer
