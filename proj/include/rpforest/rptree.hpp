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
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "rpforest/dataset.hpp"
#include "rpforest/projection.hpp"
#include "rpforest/rng.hpp"

namespace rpforest {

struct TreeParams {
  /// Nodes with at least this many points are split.
  std::size_t leaf_capacity = 20;
  /// Candidate directions drawn per split.
  std::size_t n_try = 1;
  /// Extra cut draws when a cut leaves one side empty.
  std::size_t max_retries = 3;
  /// Nodes whose projected extent is at or below this become leaves. When
  /// unset, 1e-12 * max(1, |a|, |b|) is used.
  std::optional<double> min_extent;

  void validate() const {
    if (leaf_capacity < 2) throw std::invalid_argument("leaf capacity must be at least 2");
    if (n_try < 1) throw std::invalid_argument("nTry must be at least 1");
    if (min_extent && !(*min_extent >= 0.0)) throw std::invalid_argument("min extent must be >= 0");
  }

  double extent_threshold(double a, double b) const noexcept {
    if (min_extent) return *min_extent;
    return 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
  }
};

/// Default leaf capacity for a given K: 20 for K <= 5, 30 above.
constexpr std::size_t default_leaf_capacity(std::size_t k) noexcept { return k <= 5 ? 20 : 30; }

/// Points with r.x < cut go left, the rest go right.
struct SplitRecord {
  Direction direction;
  double cut = 0.0;

  bool goes_left(std::span<const double> x) const noexcept { return direction.apply(x) < cut; }
};

enum class LeafKind : std::uint8_t {
  regular = 0,
  zero_extent = 1,        ///< projected extent <= min_extent
  retries_exhausted = 2,  ///< every cut draw left one side empty
};

struct SplitResult {
  SplitRecord record;
  /// The first `left_count` entries of the node's index span form the left child.
  std::size_t left_count = 0;
};

struct LeafResult {
  LeafKind kind = LeafKind::regular;
};

using SplitOutcome = std::variant<SplitResult, LeafResult>;

/// Splits one node. On success `points` is reordered in place so the left
/// child precedes the right child; on a leaf outcome `points` is untouched.
inline SplitOutcome split_node(std::span<std::size_t> points, const Dataset& data, const TreeParams& params,
                               RngStream& rng) {
  DirectionChoice choice = select_direction(points, data, params.n_try, rng);
  const double a = choice.coeffs.min;
  const double b = choice.coeffs.max;
  if (b - a <= params.extent_threshold(a, b)) return LeafResult{LeafKind::zero_extent};

  const auto& values = choice.coeffs.values;
  std::uniform_real_distribution<double> uniform(a, b);
  for (std::size_t attempt = 0; attempt <= params.max_retries; ++attempt) {
    const double cut = uniform(rng.engine());
    const auto left_count =
        static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [cut](double v) { return v < cut; }));
    if (left_count == 0 || left_count == points.size()) continue;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    left.reserve(left_count);
    right.reserve(points.size() - left_count);
    for (std::size_t k = 0; k < points.size(); ++k) (values[k] < cut ? left : right).push_back(points[k]);
    std::copy(left.begin(), left.end(), points.begin());
    std::copy(right.begin(), right.end(), points.begin() + static_cast<std::ptrdiff_t>(left_count));
    return SplitResult{SplitRecord{std::move(choice.direction), cut}, left_count};
  }
  return LeafResult{LeafKind::retries_exhausted};
}

/// A random projection tree. Point indices are stored once, permuted so that
/// every node (internal or leaf) owns a contiguous range; leaf buckets are
/// the leaves' ranges.
class RpTree {
 public:
  struct Node {
    std::int64_t left = -1;  ///< child node ids, -1 for leaves
    std::int64_t right = -1;
    std::size_t split = 0;   ///< split table row, internal nodes only
    std::size_t begin = 0;   ///< index range [begin, end) covered by the node
    std::size_t end = 0;
    LeafKind kind = LeafKind::regular;

    bool is_leaf() const noexcept { return left < 0; }
    std::size_t size() const noexcept { return end - begin; }

    friend bool operator==(const Node&, const Node&) = default;
  };

  RpTree() = default;

  /// Assembles a tree from raw parts and checks its structure: children
  /// partition their parent's range, leaves tile [0, n), and `indices` is a
  /// permutation of [0, n). Throws std::invalid_argument otherwise.
  RpTree(std::size_t dim, std::vector<Node> nodes, std::vector<double> directions, std::vector<double> cuts,
         std::vector<std::size_t> indices)
      : dim_(dim),
        nodes_(std::move(nodes)),
        directions_(std::move(directions)),
        cuts_(std::move(cuts)),
        indices_(std::move(indices)) {
    check_structure();
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t point_count() const noexcept { return indices_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  std::size_t split_count() const noexcept { return cuts_.size(); }

  std::span<const std::size_t> bucket(const Node& node) const noexcept {
    return std::span<const std::size_t>(indices_).subspan(node.begin, node.size());
  }
  std::span<const double> split_direction(const Node& node) const noexcept {
    return std::span<const double>(directions_).subspan(node.split * dim_, dim_);
  }
  double split_cut(const Node& node) const noexcept { return cuts_[node.split]; }

  /// Descends from the root: left when r.q < cut, right otherwise.
  const Node& leaf_for(std::span<const double> q) const {
    if (q.size() != dim_) throw std::invalid_argument("route: query dimension mismatch");
    const Node* node = &nodes_.front();
    while (!node->is_leaf()) {
      const bool left = dot(split_direction(*node), q) < split_cut(*node);
      node = &nodes_[static_cast<std::size_t>(left ? node->left : node->right)];
    }
    return *node;
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      const auto [id, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      const Node& node = nodes_[id];
      if (!node.is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(node.left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(node.right), d + 1);
      }
    }
    return best;
  }

  friend bool operator==(const RpTree&, const RpTree&) = default;

  void write(std::ostream& out) const;
  static RpTree read(std::istream& in);

 private:
  friend RpTree build_tree(const Dataset&, const TreeParams&, RngStream&);

  void check_structure() const;

  std::size_t dim_ = 0;
  std::vector<Node> nodes_;
  std::vector<double> directions_;
  std::vector<double> cuts_;
  std::vector<std::size_t> indices_;
};

/// Grows one tree over the whole dataset. Nodes are expanded depth-first;
/// each split consumes the stream in that fixed order.
inline RpTree build_tree(const Dataset& data, const TreeParams& params, RngStream& rng) {
  params.validate();
  RpTree tree;
  tree.dim_ = data.dim();
  tree.indices_.resize(data.size());
  std::iota(tree.indices_.begin(), tree.indices_.end(), std::size_t{0});
  tree.nodes_.push_back(RpTree::Node{.begin = 0, .end = data.size()});

  std::vector<std::size_t> work{0};
  while (!work.empty()) {
    const std::size_t id = work.back();
    work.pop_back();
    const std::size_t begin = tree.nodes_[id].begin;
    const std::size_t end = tree.nodes_[id].end;
    if (end - begin < params.leaf_capacity) continue;

    auto span = std::span<std::size_t>(tree.indices_).subspan(begin, end - begin);
    SplitOutcome outcome = split_node(span, data, params, rng);
    if (auto* leaf = std::get_if<LeafResult>(&outcome)) {
      tree.nodes_[id].kind = leaf->kind;
      continue;
    }
    auto& split = std::get<SplitResult>(outcome);
    const std::size_t mid = begin + split.left_count;
    const auto left_id = static_cast<std::int64_t>(tree.nodes_.size());
    tree.nodes_.push_back(RpTree::Node{.begin = begin, .end = mid});
    tree.nodes_.push_back(RpTree::Node{.begin = mid, .end = end});

    RpTree::Node& node = tree.nodes_[id];
    node.left = left_id;
    node.right = left_id + 1;
    node.split = tree.cuts_.size();
    const auto dir = split.record.direction.components();
    tree.directions_.insert(tree.directions_.end(), dir.begin(), dir.end());
    tree.cuts_.push_back(split.record.cut);

    work.push_back(static_cast<std::size_t>(left_id + 1));
    work.push_back(static_cast<std::size_t>(left_id));
  }
  return tree;
}

/// The bucket of the leaf that `q` falls into.
inline std::span<const std::size_t> route(const RpTree& tree, std::span<const double> q) {
  return tree.bucket(tree.leaf_for(q));
}

inline std::span<const std::size_t> route(const RpTree& tree, PointRef p, const Dataset& data) {
  return route(tree, data.row(p));
}

// Binary layout (little-endian host order):
//   u64 dim, u64 node_count, u64 split_count, u64 point_count
//   node_count x { i64 left, i64 right, u64 split, u64 begin, u64 end, u8 kind }
//   split_count x dim f64 directions, split_count f64 cuts
//   point_count u64 indices
namespace detail {

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("truncated index stream");
  return v;
}

template <class T>
void put_vector(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> get_vector(std::istream& in, std::size_t count) {
  constexpr std::size_t limit = std::size_t{1} << 34;
  if (count > limit / sizeof(T)) throw std::runtime_error("implausible array length in index stream");
  std::vector<T> v(count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (!in) throw std::runtime_error("truncated index stream");
  return v;
}

}  // namespace detail

inline void RpTree::write(std::ostream& out) const {
  detail::put<std::uint64_t>(out, dim_);
  detail::put<std::uint64_t>(out, nodes_.size());
  detail::put<std::uint64_t>(out, cuts_.size());
  detail::put<std::uint64_t>(out, indices_.size());
  for (const Node& node : nodes_) {
    detail::put<std::int64_t>(out, node.left);
    detail::put<std::int64_t>(out, node.right);
    detail::put<std::uint64_t>(out, node.split);
    detail::put<std::uint64_t>(out, node.begin);
    detail::put<std::uint64_t>(out, node.end);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(node.kind));
  }
  detail::put_vector(out, directions_);
  detail::put_vector(out, cuts_);
  std::vector<std::uint64_t> idx(indices_.begin(), indices_.end());
  detail::put_vector(out, idx);
}

inline RpTree RpTree::read(std::istream& in) {
  const auto dim = detail::get<std::uint64_t>(in);
  const auto node_count = detail::get<std::uint64_t>(in);
  const auto split_count = detail::get<std::uint64_t>(in);
  const auto point_count = detail::get<std::uint64_t>(in);
  if (dim == 0 || node_count == 0 || node_count > (std::uint64_t{1} << 34)) {
    throw std::runtime_error("corrupt tree header");
  }
  std::vector<Node> nodes(node_count);
  for (Node& node : nodes) {
    node.left = detail::get<std::int64_t>(in);
    node.right = detail::get<std::int64_t>(in);
    node.split = detail::get<std::uint64_t>(in);
    node.begin = detail::get<std::uint64_t>(in);
    node.end = detail::get<std::uint64_t>(in);
    const auto kind = detail::get<std::uint8_t>(in);
    if (kind > 2) throw std::runtime_error("corrupt leaf kind");
    node.kind = static_cast<LeafKind>(kind);
  }
  auto directions = detail::get_vector<double>(in, split_count * dim);
  auto cuts = detail::get_vector<double>(in, split_count);
  auto raw = detail::get_vector<std::uint64_t>(in, point_count);
  std::vector<std::size_t> indices(raw.begin(), raw.end());
  try {
    return RpTree(dim, std::move(nodes), std::move(directions), std::move(cuts), std::move(indices));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("corrupt tree: ") + e.what());
  }
}

inline void RpTree::check_structure() const {
  auto fail = [](const char* what) { throw std::invalid_argument(what); };
  if (dim_ == 0) fail("tree dimension must be at least 1");
  if (nodes_.empty()) fail("tree has no nodes");
  if (directions_.size() != cuts_.size() * dim_) fail("split table size mismatch");
  const std::size_t n = indices_.size();

  std::vector<char> seen(n, 0);
  for (std::size_t idx : indices_) {
    if (idx >= n || seen[idx]) fail("indices are not a permutation");
    seen[idx] = 1;
  }
  if (nodes_.front().begin != 0 || nodes_.front().end != n) fail("root must cover every point");

  std::vector<char> visited(nodes_.size(), 0);
  std::vector<char> split_used(cuts_.size(), 0);
  std::size_t covered = 0;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const std::size_t id = stack.back();
    stack.pop_back();
    if (visited[id]) fail("node reachable twice");
    visited[id] = 1;
    const Node& node = nodes_[id];
    if (node.begin > node.end || node.end > n) fail("node range out of bounds");
    if (node.is_leaf()) {
      if (node.right >= 0) fail("half-linked node");
      covered += node.size();
      continue;
    }
    const auto count = static_cast<std::int64_t>(nodes_.size());
    if (node.right < 0 || node.left >= count || node.right >= count) fail("child id out of range");
    if (node.split >= cuts_.size() || split_used[node.split]) fail("bad split reference");
    split_used[node.split] = 1;
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    if (l.begin != node.begin || l.end != r.begin || r.end != node.end) fail("children do not partition parent");
    stack.push_back(static_cast<std::size_t>(node.left));
    stack.push_back(static_cast<std::size_t>(node.right));
  }
  if (covered != n) fail("leaves do not cover every point");
  if (std::find(visited.begin(), visited.end(), 0) != visited.end()) fail("unreachable node");
}

}  // namespace rpforest
