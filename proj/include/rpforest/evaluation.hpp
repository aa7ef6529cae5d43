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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpforest/dataset.hpp"
#include "rpforest/forest.hpp"
#include "rpforest/parallel.hpp"
#include "rpforest/projection.hpp"
#include "rpforest/rng.hpp"
#include "rpforest/rptree.hpp"

namespace rpforest {

/// Exact K nearest neighbors of every dataset row (the row itself excluded),
/// ascending by distance with ties broken by smaller index.
class ExactKnnTable {
 public:
  ExactKnnTable() = default;
  ExactKnnTable(std::size_t n, std::size_t k, std::vector<Neighbor> entries)
      : n_(n), k_(k), entries_(std::move(entries)) {
    if (entries_.size() != n_ * k_) throw std::invalid_argument("exact table size mismatch");
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t k() const noexcept { return k_; }
  std::span<const Neighbor> neighbors(std::size_t i) const noexcept {
    return std::span<const Neighbor>(entries_).subspan(i * k_, k_);
  }
  /// d_k(i), the distance to the K-th nearest neighbor.
  double kth_distance(std::size_t i) const noexcept { return entries_[i * k_ + k_ - 1].distance; }

  friend bool operator==(const ExactKnnTable&, const ExactKnnTable&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<Neighbor> entries_;
};

/// Exhaustive O(n^2) scan. Rows are split over `workers` threads.
inline ExactKnnTable exact_knn(const Dataset& data, std::size_t k, std::size_t workers = 1) {
  const std::size_t n = data.size();
  if (k < 1 || k > n - 1 || n < 2) {
    throw std::invalid_argument("exact_knn: K must be in [1, n-1], got K=" + std::to_string(k));
  }
  std::vector<Neighbor> entries(n * k);
  parallel_for(n, workers, [&](std::size_t i) {
    // Max-heap of the best k seen so far; the root is the current worst.
    std::vector<Neighbor> heap;
    heap.reserve(k + 1);
    const auto q = data.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Neighbor cand{j, distance(q, data.row(j))};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    std::sort_heap(heap.begin(), heap.end(), closer);
    std::copy(heap.begin(), heap.end(), entries.begin() + static_cast<std::ptrdiff_t>(i * k));
  });
  return ExactKnnTable(n, k, std::move(entries));
}

// Cache file: 8-byte magic "RPORACLE", u32 version, u64 checksum, u64 n,
// u64 K, then n*K x { u64 index, f64 distance }.
inline constexpr char kOracleMagic[8] = {'R', 'P', 'O', 'R', 'A', 'C', 'L', 'E'};
inline constexpr std::uint32_t kOracleFormatVersion = 1;

inline void save_exact_table(const ExactKnnTable& table, const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(kOracleMagic, sizeof kOracleMagic);
  detail::put<std::uint32_t>(out, kOracleFormatVersion);
  detail::put<std::uint64_t>(out, data.checksum());
  detail::put<std::uint64_t>(out, table.size());
  detail::put<std::uint64_t>(out, table.k());
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (const Neighbor& nb : table.neighbors(i)) {
      detail::put<std::uint64_t>(out, nb.index);
      detail::put<double>(out, nb.distance);
    }
  }
  if (!out) throw std::runtime_error("write failure on '" + path + "'");
}

/// Loads a cached table; returns nullopt if the file is missing or was
/// produced for a different dataset or K.
inline std::optional<ExactKnnTable> load_exact_table(const std::string& path, const Dataset& data, std::size_t k) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kOracleMagic)) return std::nullopt;
  try {
    if (detail::get<std::uint32_t>(in) != kOracleFormatVersion) return std::nullopt;
    if (detail::get<std::uint64_t>(in) != data.checksum()) return std::nullopt;
    if (detail::get<std::uint64_t>(in) != data.size()) return std::nullopt;
    if (detail::get<std::uint64_t>(in) != k) return std::nullopt;
    std::vector<Neighbor> entries(data.size() * k);
    for (Neighbor& nb : entries) {
      nb.index = detail::get<std::uint64_t>(in);
      nb.distance = detail::get<double>(in);
      if (nb.index >= data.size()) return std::nullopt;
    }
    return ExactKnnTable(data.size(), k, std::move(entries));
  } catch (const std::runtime_error&) {
    return std::nullopt;
  }
}

inline std::string exact_table_cache_name(const Dataset& data, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "oracle_%016llx_k%zu.bin", static_cast<unsigned long long>(data.checksum()), k);
  return buf;
}

/// exact_knn backed by an on-disk cache in `cache_dir`, keyed by
/// (dataset checksum, K).
inline ExactKnnTable exact_knn_cached(const Dataset& data, std::size_t k, const std::filesystem::path& cache_dir,
                                      std::size_t workers = 1) {
  const auto path = (cache_dir / exact_table_cache_name(data, k)).string();
  if (auto cached = load_exact_table(path, data, k)) return std::move(*cached);
  ExactKnnTable table = exact_knn(data, k, workers);
  std::filesystem::create_directories(cache_dir);
  save_exact_table(table, data, path);
  return table;
}

namespace detail {

inline void check_alignment(std::span<const QueryResult> approx, const ExactKnnTable& exact, std::size_t k) {
  if (exact.k() != k) throw std::invalid_argument("exact table was computed for a different K");
  if (approx.size() != exact.size()) throw std::invalid_argument("results must cover every dataset point");
  for (std::size_t i = 0; i < approx.size(); ++i) {
    if (!approx[i].query || approx[i].query->index != i) {
      throw std::invalid_argument("result " + std::to_string(i) + " is not for dataset point " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// m(i) per point: K minus the number of returned neighbors within d_k(i).
/// Counting by distance rather than index means a returned point tied with
/// the oracle's K-th neighbor is a hit, not a phantom miss.
inline std::vector<std::size_t> miss_counts(std::span<const QueryResult> approx, const ExactKnnTable& exact,
                                            std::size_t k) {
  detail::check_alignment(approx, exact, k);
  std::vector<std::size_t> out(approx.size());
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double dk = exact.kth_distance(i);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < std::min(k, approx[i].neighbors.size()); ++r) {
      if (approx[i].neighbors[r].distance <= dk) ++hits;
    }
    out[i] = k - hits;
  }
  return out;
}

/// Average missing rate: sum of m(i) over n*K.
inline double missing_rate(std::span<const QueryResult> approx, const ExactKnnTable& exact, std::size_t k) {
  const auto misses = miss_counts(approx, exact, k);
  std::size_t total = 0;
  for (std::size_t m : misses) total += m;
  return static_cast<double>(total) / (static_cast<double>(misses.size()) * static_cast<double>(k));
}

struct DiscrepancyReport {
  double mean_exact_dk = 0.0;
  double mean_approx_dk = 0.0;
  /// (approx - exact) / exact, with 0/0 taken as 0.
  double normalized = 0.0;
  /// Points included in the means.
  std::size_t evaluated = 0;
  /// Points left out because fewer than K neighbors came back.
  std::size_t shortfall = 0;
  /// Points whose returned K-th distance is below the exact one. Always 0
  /// unless something is broken.
  std::size_t dominance_violations = 0;
};

/// Mean exact and returned K-th neighbor distances over the points that got
/// a full K neighbors.
inline DiscrepancyReport discrepancy(std::span<const QueryResult> approx, const ExactKnnTable& exact, std::size_t k) {
  detail::check_alignment(approx, exact, k);
  DiscrepancyReport rep;
  double sum_exact = 0.0;
  double sum_approx = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    if (approx[i].neighbors.size() < k) {
      ++rep.shortfall;
      continue;
    }
    const double exact_dk = exact.kth_distance(i);
    const double approx_dk = approx[i].neighbors[k - 1].distance;
    if (approx_dk < exact_dk) ++rep.dominance_violations;
    sum_exact += exact_dk;
    sum_approx += approx_dk;
    ++rep.evaluated;
  }
  if (rep.evaluated > 0) {
    rep.mean_exact_dk = sum_exact / static_cast<double>(rep.evaluated);
    rep.mean_approx_dk = sum_approx / static_cast<double>(rep.evaluated);
  }
  const double gap = rep.mean_approx_dk - rep.mean_exact_dk;
  rep.normalized = rep.mean_exact_dk > 0.0 ? gap / rep.mean_exact_dk : 0.0;
  return rep;
}

struct AccuracyReport {
  double missing_rate = 0.0;
  double mean_exact_dk = 0.0;
  double mean_approx_dk = 0.0;
  double normalized_discrepancy = 0.0;
  std::size_t shortfall = 0;
  std::size_t dominance_violations = 0;
  std::size_t k = 0;
  std::size_t trees = 0;
  std::size_t n_try = 0;
  std::size_t leaf_capacity = 0;
  std::uint64_t seed = 0;
};

inline AccuracyReport evaluate(std::span<const QueryResult> approx, const ExactKnnTable& exact, std::size_t k,
                               const ForestParams& params) {
  const DiscrepancyReport d = discrepancy(approx, exact, k);
  AccuracyReport rep;
  rep.missing_rate = missing_rate(approx, exact, k);
  rep.mean_exact_dk = d.mean_exact_dk;
  rep.mean_approx_dk = d.mean_approx_dk;
  rep.normalized_discrepancy = d.normalized;
  rep.shortfall = d.shortfall;
  rep.dominance_violations = d.dominance_violations;
  rep.k = k;
  rep.trees = params.trees;
  rep.n_try = params.tree.n_try;
  rep.leaf_capacity = params.tree.leaf_capacity;
  rep.seed = params.master_seed;
  return rep;
}

/// Inputs to the ensemble separation bound: pair distance d, neck size nu,
/// per-split neck shrink factor gamma, at most J splits per tree, and the
/// ensemble size.
struct SeparationBoundParams {
  double distance = 0.0;
  double neck = 0.0;
  double shrink = 0.5;
  std::size_t max_splits = 2;
  std::size_t ensemble_size = 1;

  void validate() const {
    if (!(distance > 0.0) || !std::isfinite(distance)) throw std::invalid_argument("bound: d must be > 0");
    if (!(neck > 0.0) || !std::isfinite(neck)) throw std::invalid_argument("bound: neck size must be > 0");
    if (!(shrink > 0.0 && shrink < 1.0)) throw std::invalid_argument("bound: gamma must lie in (0, 1)");
    if (max_splits < 2) throw std::invalid_argument("bound: J must be at least 2");
    if (ensemble_size < 1) throw std::invalid_argument("bound: ensemble size must be at least 1");
  }
};

/// Single-tree factor 2d / (pi nu gamma^(J-2) (1-gamma)).
inline double theorem_bound_base(const SeparationBoundParams& p) {
  p.validate();
  const double denom = std::numbers::pi * p.neck * std::pow(p.shrink, static_cast<double>(p.max_splits - 2)) *
                       (1.0 - p.shrink);
  return (2.0 * p.distance) / denom;
}

/// Upper bound on the probability that two points at distance d end up in
/// different leaves in every tree of the ensemble. Values above 1 are
/// returned as-is (the bound is vacuous there).
inline double theorem_bound(const SeparationBoundParams& p) {
  return std::pow(theorem_bound_base(p), static_cast<double>(p.ensemble_size));
}

/// Upper estimate of the neck size (the smallest projected range over all
/// directions) from `n_dirs` sampled directions. Nested samples from the
/// same stream state can only lower the estimate.
inline double estimate_neck(std::span<const std::size_t> points, const Dataset& data, std::size_t n_dirs,
                            RngStream& rng) {
  if (points.size() < 2) throw std::invalid_argument("estimate_neck: need at least two points");
  if (n_dirs < 1) throw std::invalid_argument("estimate_neck: need at least one direction");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n_dirs; ++t) {
    const Direction dir = random_direction(data.dim(), rng);
    best = std::min(best, project(points, data, dir).extent());
  }
  return best;
}

/// Fraction of `trials` freshly grown forests in which `a` and `b` fall in
/// different leaves in every tree. Trial t grows its forest from
/// derive_seed(params.master_seed, {t}); trials run on params.workers threads.
inline double separation_probability(const Dataset& data, PointRef a, PointRef b, const ForestParams& params,
                                     std::size_t trials) {
  params.validate();
  data.checked(a);
  data.checked(b);
  if (a == b) throw std::invalid_argument("separation_probability: pair must be distinct");
  if (trials < 1) throw std::invalid_argument("separation_probability: need at least one trial");

  std::vector<char> separated(trials, 0);
  parallel_for(trials, params.workers, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(params.master_seed, {t});
    bool all_apart = true;
    for (std::size_t i = 0; i < params.trees && all_apart; ++i) {
      RngStream rng = tree_stream(seed, i);
      const RpTree tree = build_tree(data, params.tree, rng);
      all_apart = &tree.leaf_for(data.row(a)) != &tree.leaf_for(data.row(b));
    }
    separated[t] = all_apart ? 1 : 0;
  });
  const auto count = static_cast<std::size_t>(std::count(separated.begin(), separated.end(), 1));
  return static_cast<double>(count) / static_cast<double>(trials);
}

}  // namespace rpforest
