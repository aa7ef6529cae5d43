// Copyright 2026 The rpforest Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment harness: tree-count and nTry sweeps with repeated runs, exact
// accuracy metrics, wall-clock timing, and CSV/JSON report emission.

#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rpforest/dataset.hpp"
#include "rpforest/evaluation.hpp"
#include "rpforest/forest.hpp"

namespace rpforest {

/// Raised when a run breaks an invariant that must hold for any input.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for configurations that cannot be run as requested.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest dataset the quadratic oracle is run on without --no-oracle.
inline constexpr std::size_t kOracleSizeLimit = 60000;

struct ExperimentConfig {
  std::string input;
  bool has_header = false;
  std::string dataset_id;
  std::size_t k = 5;
  std::vector<std::size_t> tree_counts{10, 20, 40, 60, 80, 100};
  std::vector<std::size_t> n_try_list{1};
  /// Defaults to default_leaf_capacity(k).
  std::optional<std::size_t> leaf_capacity;
  std::size_t runs = 20;
  std::uint64_t master_seed = 20190101;
  std::size_t workers = 1;
  bool standardize = false;
  bool no_oracle = false;
  std::optional<std::filesystem::path> oracle_cache;
  /// Forest size used by time_parallel_scaling.
  std::size_t scaling_trees = 40;

  std::size_t effective_leaf_capacity() const { return leaf_capacity.value_or(default_leaf_capacity(k)); }

  void validate() const {
    if (k < 1) throw ConfigError("--k must be at least 1");
    if (tree_counts.empty() || n_try_list.empty()) throw ConfigError("tree and nTry lists must be nonempty");
    for (std::size_t t : tree_counts) {
      if (t < 1) throw ConfigError("tree counts must be at least 1");
    }
    for (std::size_t t : n_try_list) {
      if (t < 1) throw ConfigError("nTry values must be at least 1");
    }
    if (runs < 1) throw ConfigError("--runs must be at least 1");
    if (workers < 1) throw ConfigError("--workers must be at least 1");
    if (effective_leaf_capacity() < 2) throw ConfigError("--leaf-size must be at least 2");
    if (scaling_trees < 1) throw ConfigError("scaling tree count must be at least 1");
    if (dataset_id.find_first_of(",\"\r\n") != std::string::npos) {
      throw ConfigError("dataset id may not contain commas, quotes or line breaks");
    }
  }
};

struct ReportRow {
  std::string dataset;
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t k = 0;
  std::size_t trees = 0;
  std::size_t n_try = 0;
  std::size_t leaf_capacity = 0;
  bool standardized = false;
  bool aggregate = false;
  /// Run index; -1 on aggregate rows.
  std::int64_t run = 0;
  /// Forest master seed for this run; 0 on aggregate rows.
  std::uint64_t seed = 0;
  double missing_rate = 0.0;
  double missing_rate_sd = 0.0;
  double normalized_discrepancy = 0.0;
  double normalized_discrepancy_sd = 0.0;
  double mean_exact_dk = 0.0;
  double mean_approx_dk = 0.0;
  std::size_t shortfall = 0;
  std::size_t dominance_violations = 0;
  double build_ms = 0.0;
  double query_ms = 0.0;
  std::size_t workers = 1;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// Seed of run `run` in sweep cell `cell` (cells enumerate the
/// tree-count x nTry grid, tree count major).
inline std::uint64_t run_seed(std::uint64_t master_seed, std::size_t cell, std::size_t run) {
  return derive_seed(master_seed, {cell, run});
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline std::optional<ExactKnnTable> oracle_for(const Dataset& data, const ExperimentConfig& cfg) {
  if (cfg.no_oracle) return std::nullopt;
  if (data.size() > kOracleSizeLimit) {
    throw ConfigError("dataset has " + std::to_string(data.size()) + " points; the exact oracle is limited to " +
                      std::to_string(kOracleSizeLimit) + " (pass --no-oracle for a timing-only run)");
  }
  if (cfg.k > data.size() - 1) {
    throw ConfigError("K=" + std::to_string(cfg.k) + " needs at least " + std::to_string(cfg.k + 1) + " points");
  }
  if (cfg.oracle_cache) return exact_knn_cached(data, cfg.k, *cfg.oracle_cache, cfg.workers);
  return exact_knn(data, cfg.k, cfg.workers);
}

struct TimedRun {
  std::vector<QueryResult> results;
  double build_ms = 0.0;
  double query_ms = 0.0;
};

inline TimedRun timed_run(const Dataset& data, const ForestParams& params, std::size_t k) {
  TimedRun out;
  auto t0 = std::chrono::steady_clock::now();
  const Forest forest = build_forest(data, params);
  out.build_ms = elapsed_ms(t0);
  const auto queries = all_points(data);
  t0 = std::chrono::steady_clock::now();
  out.results = batch_knn(forest, queries, k, params.workers);
  out.query_ms = elapsed_ms(t0);
  return out;
}

inline ReportRow base_row(const Dataset& data, const ExperimentConfig& cfg, std::size_t trees, std::size_t n_try) {
  ReportRow row;
  row.dataset = cfg.dataset_id;
  row.n = data.size();
  row.dim = data.dim();
  row.k = cfg.k;
  row.trees = trees;
  row.n_try = n_try;
  row.leaf_capacity = cfg.effective_leaf_capacity();
  row.standardized = cfg.standardize;
  row.workers = cfg.workers;
  return row;
}

inline void fill_metrics(ReportRow& row, const std::optional<ExactKnnTable>& oracle,
                         const std::vector<QueryResult>& results, std::size_t k) {
  if (!oracle) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    row.missing_rate = row.normalized_discrepancy = row.mean_exact_dk = row.mean_approx_dk = nan;
    row.missing_rate_sd = row.normalized_discrepancy_sd = nan;
    row.shortfall = 0;
    for (const auto& r : results) row.shortfall += r.shortfall ? 1 : 0;
    return;
  }
  const DiscrepancyReport d = discrepancy(results, *oracle, k);
  row.missing_rate = missing_rate(results, *oracle, k);
  row.normalized_discrepancy = d.normalized;
  row.mean_exact_dk = d.mean_exact_dk;
  row.mean_approx_dk = d.mean_approx_dk;
  row.shortfall = d.shortfall;
  row.dominance_violations = d.dominance_violations;
}

}  // namespace detail

/// Loads cfg.input (standardizing if requested).
inline Dataset load_experiment_data(const ExperimentConfig& cfg) {
  Dataset data = load_points(cfg.input, LoadOptions{.has_header = cfg.has_header});
  return cfg.standardize ? standardize(data) : data;
}

/// Runs the sweep over an already loaded (and, if wanted, standardized)
/// dataset: for every (T, nTry) cell, cfg.runs forests are grown and queried
/// with Q = U. Emits one row per run followed by an aggregate row per cell.
inline std::vector<ReportRow> run_experiment(const Dataset& data, const ExperimentConfig& cfg) {
  cfg.validate();
  const auto oracle = detail::oracle_for(data, cfg);

  std::vector<ReportRow> rows;
  std::size_t cell = 0;
  for (std::size_t trees : cfg.tree_counts) {
    for (std::size_t n_try : cfg.n_try_list) {
      std::vector<double> miss, disc, build, query, exact_dk, approx_dk;
      ReportRow agg = detail::base_row(data, cfg, trees, n_try);
      agg.aggregate = true;
      agg.run = -1;

      for (std::size_t run = 0; run < cfg.runs; ++run) {
        ForestParams params;
        params.trees = trees;
        params.tree.leaf_capacity = cfg.effective_leaf_capacity();
        params.tree.n_try = n_try;
        params.master_seed = run_seed(cfg.master_seed, cell, run);
        params.workers = cfg.workers;

        const detail::TimedRun timed = detail::timed_run(data, params, cfg.k);
        ReportRow row = detail::base_row(data, cfg, trees, n_try);
        row.run = static_cast<std::int64_t>(run);
        row.seed = params.master_seed;
        row.build_ms = timed.build_ms;
        row.query_ms = timed.query_ms;
        detail::fill_metrics(row, oracle, timed.results, cfg.k);

        miss.push_back(row.missing_rate);
        disc.push_back(row.normalized_discrepancy);
        build.push_back(row.build_ms);
        query.push_back(row.query_ms);
        exact_dk.push_back(row.mean_exact_dk);
        approx_dk.push_back(row.mean_approx_dk);
        agg.shortfall += row.shortfall;
        agg.dominance_violations += row.dominance_violations;
        rows.push_back(std::move(row));
      }

      agg.missing_rate = detail::mean_of(miss);
      agg.missing_rate_sd = detail::sd_of(miss);
      agg.normalized_discrepancy = detail::mean_of(disc);
      agg.normalized_discrepancy_sd = detail::sd_of(disc);
      agg.mean_exact_dk = detail::mean_of(exact_dk);
      agg.mean_approx_dk = detail::mean_of(approx_dk);
      agg.build_ms = detail::mean_of(build);
      agg.query_ms = detail::mean_of(query);
      rows.push_back(std::move(agg));
      ++cell;
    }
  }
  return rows;
}

inline std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  if (c.dataset_id.empty()) c.dataset_id = std::filesystem::path(cfg.input).stem().string();
  return run_experiment(load_experiment_data(c), c);
}

/// Grows and queries a cfg.scaling_trees forest (first nTry of the list)
/// once per worker count. Metric columns must agree across worker counts;
/// a mismatch throws InvariantViolation.
inline std::vector<ReportRow> time_parallel_scaling(const Dataset& data, const ExperimentConfig& cfg,
                                                    const std::vector<std::size_t>& worker_list) {
  cfg.validate();
  if (worker_list.empty()) throw ConfigError("worker list must be nonempty");
  const auto oracle = detail::oracle_for(data, cfg);

  std::vector<ReportRow> rows;
  std::optional<std::vector<QueryResult>> reference;
  for (std::size_t workers : worker_list) {
    if (workers < 1) throw ConfigError("worker counts must be at least 1");
    ForestParams params;
    params.trees = cfg.scaling_trees;
    params.tree.leaf_capacity = cfg.effective_leaf_capacity();
    params.tree.n_try = cfg.n_try_list.front();
    params.master_seed = run_seed(cfg.master_seed, 0, 0);
    params.workers = workers;

    detail::TimedRun timed = detail::timed_run(data, params, cfg.k);
    ReportRow row = detail::base_row(data, cfg, params.trees, params.tree.n_try);
    row.seed = params.master_seed;
    row.workers = workers;
    row.build_ms = timed.build_ms;
    row.query_ms = timed.query_ms;
    detail::fill_metrics(row, oracle, timed.results, cfg.k);
    rows.push_back(row);

    if (!reference) {
      reference = std::move(timed.results);
    } else if (*reference != timed.results) {
      throw InvariantViolation("results differ between worker counts");
    }
  }
  return rows;
}

enum class ReportFormat { csv, json };

inline constexpr int kReportSchemaVersion = 1;

/// Column order of the CSV report and key order of the JSON rows.
inline std::vector<std::string> report_columns(bool include_timing = true) {
  std::vector<std::string> cols{"dataset",
                                "n",
                                "D",
                                "K",
                                "T",
                                "n_try",
                                "leaf_capacity",
                                "standardized",
                                "aggregate",
                                "run",
                                "seed",
                                "missing_rate",
                                "missing_rate_sd",
                                "normalized_discrepancy",
                                "normalized_discrepancy_sd",
                                "mean_exact_dk",
                                "mean_approx_dk",
                                "shortfall",
                                "dominance_violations"};
  if (include_timing) cols.insert(cols.end(), {"build_ms", "query_ms", "workers"});
  return cols;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> row_cells(const ReportRow& r, bool include_timing) {
  std::vector<std::string> cells{r.dataset,
                                 std::to_string(r.n),
                                 std::to_string(r.dim),
                                 std::to_string(r.k),
                                 std::to_string(r.trees),
                                 std::to_string(r.n_try),
                                 std::to_string(r.leaf_capacity),
                                 r.standardized ? "1" : "0",
                                 r.aggregate ? "1" : "0",
                                 std::to_string(r.run),
                                 std::to_string(r.seed),
                                 fmt_double(r.missing_rate),
                                 fmt_double(r.missing_rate_sd),
                                 fmt_double(r.normalized_discrepancy),
                                 fmt_double(r.normalized_discrepancy_sd),
                                 fmt_double(r.mean_exact_dk),
                                 fmt_double(r.mean_approx_dk),
                                 std::to_string(r.shortfall),
                                 std::to_string(r.dominance_violations)};
  if (include_timing) {
    cells.push_back(fmt_double(r.build_ms));
    cells.push_back(fmt_double(r.query_ms));
    cells.push_back(std::to_string(r.workers));
  }
  return cells;
}

inline nlohmann::ordered_json json_number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace detail

inline void write_report(std::ostream& out, const std::vector<ReportRow>& rows, ReportFormat format,
                         bool include_timing = true) {
  const auto cols = report_columns(include_timing);
  if (format == ReportFormat::csv) {
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << '\n';
    for (const ReportRow& r : rows) {
      const auto cells = detail::row_cells(r, include_timing);
      for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << cells[c];
      out << '\n';
    }
    return;
  }

  nlohmann::ordered_json doc;
  doc["schema"] = "rpforest.report";
  doc["schema_version"] = kReportSchemaVersion;
  doc["columns"] = cols;
  auto& arr = doc["rows"] = nlohmann::ordered_json::array();
  for (const ReportRow& r : rows) {
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset;
    j["n"] = r.n;
    j["D"] = r.dim;
    j["K"] = r.k;
    j["T"] = r.trees;
    j["n_try"] = r.n_try;
    j["leaf_capacity"] = r.leaf_capacity;
    j["standardized"] = r.standardized;
    j["aggregate"] = r.aggregate;
    j["run"] = r.run;
    j["seed"] = r.seed;
    j["missing_rate"] = detail::json_number(r.missing_rate);
    j["missing_rate_sd"] = detail::json_number(r.missing_rate_sd);
    j["normalized_discrepancy"] = detail::json_number(r.normalized_discrepancy);
    j["normalized_discrepancy_sd"] = detail::json_number(r.normalized_discrepancy_sd);
    j["mean_exact_dk"] = detail::json_number(r.mean_exact_dk);
    j["mean_approx_dk"] = detail::json_number(r.mean_approx_dk);
    j["shortfall"] = r.shortfall;
    j["dominance_violations"] = r.dominance_violations;
    if (include_timing) {
      j["build_ms"] = detail::json_number(r.build_ms);
      j["query_ms"] = detail::json_number(r.query_ms);
      j["workers"] = r.workers;
    }
    arr.push_back(std::move(j));
  }
  out << doc.dump(2) << '\n';
}

inline void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::string& path,
                        bool include_timing = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_report(out, rows, format, include_timing);
  if (!out) throw std::runtime_error("write failure on '" + path + "'");
}

/// Parses a CSV report written by write_report (with or without timing
/// columns).
inline std::vector<ReportRow> read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty report");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const bool timing = header == report_columns(true);
  if (!timing && header != report_columns(false)) throw std::runtime_error("unrecognized report header");

  auto to_u = [](const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); };
  auto to_d = [](const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
    return v;
  };

  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != header.size()) throw std::runtime_error("report row has wrong column count");
    ReportRow r;
    r.dataset = c[0];
    r.n = to_u(c[1]);
    r.dim = to_u(c[2]);
    r.k = to_u(c[3]);
    r.trees = to_u(c[4]);
    r.n_try = to_u(c[5]);
    r.leaf_capacity = to_u(c[6]);
    r.standardized = c[7] == "1";
    r.aggregate = c[8] == "1";
    r.run = std::stoll(c[9]);
    r.seed = std::stoull(c[10]);
    r.missing_rate = to_d(c[11]);
    r.missing_rate_sd = to_d(c[12]);
    r.normalized_discrepancy = to_d(c[13]);
    r.normalized_discrepancy_sd = to_d(c[14]);
    r.mean_exact_dk = to_d(c[15]);
    r.mean_approx_dk = to_d(c[16]);
    r.shortfall = to_u(c[17]);
    r.dominance_violations = to_u(c[18]);
    if (timing) {
      r.build_ms = to_d(c[19]);
      r.query_ms = to_d(c[20]);
      r.workers = to_u(c[21]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rpforest
