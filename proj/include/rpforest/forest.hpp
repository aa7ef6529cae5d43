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
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpforest/dataset.hpp"
#include "rpforest/parallel.hpp"
#include "rpforest/rng.hpp"
#include "rpforest/rptree.hpp"

namespace rpforest {

struct ForestParams {
  std::size_t trees = 10;
  TreeParams tree;
  std::uint64_t master_seed = 0;
  /// Thread count hint for build and batch queries. Never affects results.
  std::size_t workers = 1;

  void validate() const {
    if (trees < 1) throw std::invalid_argument("forest needs at least one tree");
    if (workers < 1) throw std::invalid_argument("workers must be at least 1");
    tree.validate();
  }
};

/// Stream used to grow tree `index` of a forest seeded with `master_seed`.
inline RngStream tree_stream(std::uint64_t master_seed, std::size_t index) {
  return RngStream(derive_seed(master_seed, {index}));
}

/// An ensemble of trees over one dataset. The forest refers to the dataset
/// and must not outlive it.
class Forest {
 public:
  Forest(const Dataset& data, ForestParams params, std::vector<RpTree> trees)
      : data_(&data), params_(std::move(params)), trees_(std::move(trees)) {
    if (trees_.empty()) throw std::invalid_argument("forest needs at least one tree");
    for (const RpTree& t : trees_) {
      if (t.dim() != data.dim() || t.point_count() != data.size()) {
        throw std::invalid_argument("tree was not built over this dataset");
      }
    }
    params_.trees = trees_.size();
  }

  const Dataset& data() const noexcept { return *data_; }
  const ForestParams& params() const noexcept { return params_; }
  const std::vector<RpTree>& trees() const noexcept { return trees_; }
  std::size_t size() const noexcept { return trees_.size(); }

  void save(const std::string& path) const;
  static Forest load(const std::string& path, const Dataset& data);

 private:
  const Dataset* data_;
  ForestParams params_;
  std::vector<RpTree> trees_;
};

/// Grows params.trees trees, tree i from tree_stream(master_seed, i).
/// Trees are distributed across params.workers threads.
inline Forest build_forest(const Dataset& data, const ForestParams& params) {
  params.validate();
  std::vector<RpTree> trees(params.trees);
  parallel_for(params.trees, params.workers, [&](std::size_t i) {
    RngStream rng = tree_stream(params.master_seed, i);
    trees[i] = build_tree(data, params.tree, rng);
  });
  return Forest(data, params, std::move(trees));
}

struct QueryResult {
  /// Set when the query is a dataset row (and so excluded from its own result).
  std::optional<PointRef> query;
  /// Ascending by distance, smaller index first on ties.
  std::vector<Neighbor> neighbors;
  /// Size of the deduplicated candidate union.
  std::size_t candidate_count = 0;
  /// Fewer than K candidates were available.
  bool shortfall = false;

  friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

namespace detail {

inline std::vector<std::size_t> candidate_union(const Forest& forest, std::span<const double> q,
                                                std::optional<std::size_t> exclude) {
  if (q.size() != forest.data().dim()) throw std::invalid_argument("query dimension mismatch");
  std::vector<std::size_t> out;
  for (const RpTree& tree : forest.trees()) {
    const auto bucket = route(tree, q);
    out.insert(out.end(), bucket.begin(), bucket.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (exclude) {
    const auto it = std::lower_bound(out.begin(), out.end(), *exclude);
    if (it != out.end() && *it == *exclude) out.erase(it);
  }
  return out;
}

inline QueryResult top_k(const Forest& forest, std::span<const double> q, std::optional<PointRef> self,
                         std::size_t k) {
  if (k < 1) throw std::invalid_argument("K must be at least 1");
  const Dataset& data = forest.data();
  const auto cands = candidate_union(forest, q, self ? std::optional<std::size_t>(self->index) : std::nullopt);

  std::vector<Neighbor> all;
  all.reserve(cands.size());
  for (std::size_t idx : cands) all.push_back({idx, distance(q, data.row(idx))});
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), closer);
  all.resize(keep);

  QueryResult result;
  result.query = self;
  result.neighbors = std::move(all);
  result.candidate_count = cands.size();
  result.shortfall = cands.size() < k;
  return result;
}

}  // namespace detail

/// Union of the leaves `q` reaches across all trees, sorted ascending.
inline std::vector<std::size_t> candidates(const Forest& forest, std::span<const double> q) {
  return detail::candidate_union(forest, q, std::nullopt);
}

/// As above for a dataset row; the row itself is removed.
inline std::vector<std::size_t> candidates(const Forest& forest, PointRef p) {
  const Dataset& data = forest.data();
  return detail::candidate_union(forest, data.row(p), data.checked(p));
}

/// Exact top-K over the candidate union of raw coordinates `q`. Nothing is
/// excluded, so a duplicate of q in the data is returned at distance 0.
inline QueryResult knn_query(const Forest& forest, std::span<const double> q, std::size_t k) {
  return detail::top_k(forest, q, std::nullopt, k);
}

/// Exact top-K over the candidate union of dataset row `p`, excluding p.
inline QueryResult knn_query(const Forest& forest, PointRef p, std::size_t k) {
  const Dataset& data = forest.data();
  data.checked(p);
  return detail::top_k(forest, data.row(p), p, k);
}

/// knn_query for every row in `queries`, in order, spread over `workers`
/// threads (defaults to the forest's setting).
inline std::vector<QueryResult> batch_knn(const Forest& forest, std::span<const PointRef> queries, std::size_t k,
                                          std::optional<std::size_t> workers = std::nullopt) {
  if (queries.empty()) throw std::invalid_argument("batch_knn: empty query set");
  if (k < 1) throw std::invalid_argument("K must be at least 1");
  for (PointRef p : queries) forest.data().checked(p);
  std::vector<QueryResult> out(queries.size());
  parallel_for(queries.size(), workers.value_or(forest.params().workers),
               [&](std::size_t i) { out[i] = knn_query(forest, queries[i], k); });
  return out;
}

/// Every dataset row, in order. Convenience for Q = U.
inline std::vector<PointRef> all_points(const Dataset& data) {
  std::vector<PointRef> out(data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

// File layout: 8-byte magic "RPFOREST", u32 version, u64 n, u64 D,
// u64 dataset checksum, u64 tree count, u64 leaf capacity, u64 nTry,
// u64 max retries, u8 has-min-extent, f64 min extent, u64 master seed,
// then each tree in RpTree::write layout.
inline constexpr std::array<char, 8> kForestMagic{'R', 'P', 'F', 'O', 'R', 'E', 'S', 'T'};
inline constexpr std::uint32_t kForestFormatVersion = 1;

inline void Forest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(kForestMagic.data(), kForestMagic.size());
  detail::put<std::uint32_t>(out, kForestFormatVersion);
  detail::put<std::uint64_t>(out, data_->size());
  detail::put<std::uint64_t>(out, data_->dim());
  detail::put<std::uint64_t>(out, data_->checksum());
  detail::put<std::uint64_t>(out, trees_.size());
  detail::put<std::uint64_t>(out, params_.tree.leaf_capacity);
  detail::put<std::uint64_t>(out, params_.tree.n_try);
  detail::put<std::uint64_t>(out, params_.tree.max_retries);
  detail::put<std::uint8_t>(out, params_.tree.min_extent.has_value());
  detail::put<double>(out, params_.tree.min_extent.value_or(0.0));
  detail::put<std::uint64_t>(out, params_.master_seed);
  for (const RpTree& t : trees_) t.write(out);
  if (!out) throw std::runtime_error("write failure on '" + path + "'");
}

inline Forest Forest::load(const std::string& path, const Dataset& data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kForestMagic) throw std::runtime_error("not a forest file: '" + path + "'");
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kForestFormatVersion) {
    throw std::runtime_error("unsupported forest format version " + std::to_string(version));
  }
  const auto n = detail::get<std::uint64_t>(in);
  const auto dim = detail::get<std::uint64_t>(in);
  const auto checksum = detail::get<std::uint64_t>(in);
  if (n != data.size() || dim != data.dim() || checksum != data.checksum()) {
    throw std::runtime_error("forest was built over a different dataset");
  }
  ForestParams params;
  params.trees = detail::get<std::uint64_t>(in);
  params.tree.leaf_capacity = detail::get<std::uint64_t>(in);
  params.tree.n_try = detail::get<std::uint64_t>(in);
  params.tree.max_retries = detail::get<std::uint64_t>(in);
  const bool has_min_extent = detail::get<std::uint8_t>(in) != 0;
  const double min_extent = detail::get<double>(in);
  if (has_min_extent) params.tree.min_extent = min_extent;
  params.master_seed = detail::get<std::uint64_t>(in);
  if (params.trees == 0 || params.trees > (1u << 24)) throw std::runtime_error("corrupt tree count");

  std::vector<RpTree> trees;
  trees.reserve(params.trees);
  for (std::size_t i = 0; i < params.trees; ++i) trees.push_back(RpTree::read(in));
  return Forest(data, params, std::move(trees));
}

}  // namespace rpforest
