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

// Shared helpers for the test suites. Everything here is written
// independently of the library's own search and evaluation paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "rpforest/rpforest.hpp"

namespace rpforest::testing {

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "rpforest_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

inline std::string write_file(const std::string& name, const std::string& contents) {
  const auto path = temp_path(name);
  std::ofstream(path, std::ios::binary) << contents;
  return path.string();
}

inline Dataset uniform_data(std::size_t n, std::size_t dim, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> coords(n * dim);
  for (double& c : coords) c = u(gen);
  return Dataset(std::move(coords), dim);
}

inline Dataset line_data(const std::vector<double>& xs) { return Dataset(xs, 1); }

/// Sum of squares in long double, elementwise.
inline long double reference_distance(std::span<const double> a, std::span<const double> b) {
  long double s = 0.0L;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const long double d = static_cast<long double>(a[k]) - static_cast<long double>(b[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Quadratic scan with a full sort per row: the second, independent oracle.
inline std::vector<std::vector<Neighbor>> brute_force_knn(const Dataset& data, std::size_t k) {
  std::vector<std::vector<Neighbor>> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::pair<long double, std::size_t>> all;
    for (std::size_t j = 0; j < data.size(); ++j) {
      if (j != i) all.emplace_back(reference_distance(data.row(i), data.row(j)), j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t r = 0; r < k; ++r) {
      out[i].push_back({all[r].second, static_cast<double>(all[r].first)});
    }
  }
  return out;
}

struct AuditResult {
  bool disjoint = true;
  bool covers_all = true;
  bool self_routes = true;
  bool capacity_ok = true;
  bool children_partition = true;
};

/// Exhaustive structural audit of a built tree against its dataset.
inline AuditResult audit_tree(const RpTree& tree, const Dataset& data, std::size_t leaf_capacity) {
  AuditResult res;
  std::vector<int> owner(data.size(), -1);
  const auto& nodes = tree.nodes();
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const auto& node = nodes[id];
    if (!node.is_leaf()) {
      // Every point of the node must sit on the side its split record says.
      const auto dir = tree.split_direction(node);
      const double cut = tree.split_cut(node);
      for (std::size_t idx : tree.bucket(nodes[static_cast<std::size_t>(node.left)])) {
        if (!(dot(dir, data.row(idx)) < cut)) res.children_partition = false;
      }
      for (std::size_t idx : tree.bucket(nodes[static_cast<std::size_t>(node.right)])) {
        if (!(dot(dir, data.row(idx)) >= cut)) res.children_partition = false;
      }
      continue;
    }
    if (node.kind == LeafKind::regular && node.size() >= leaf_capacity) res.capacity_ok = false;
    for (std::size_t idx : tree.bucket(node)) {
      if (owner[idx] != -1) res.disjoint = false;
      owner[idx] = static_cast<int>(id);
    }
  }
  for (int o : owner) {
    if (o == -1) res.covers_all = false;
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto bucket = route(tree, data.row(i));
    if (std::find(bucket.begin(), bucket.end(), i) == bucket.end()) res.self_routes = false;
  }
  return res;
}

}  // namespace rpforest::testing
