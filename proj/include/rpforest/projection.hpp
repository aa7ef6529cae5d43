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
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "rpforest/dataset.hpp"
#include "rpforest/rng.hpp"

namespace rpforest {

/// A unit vector in R^D.
class Direction {
 public:
  /// Normalizes `components`; throws on a zero or non-finite vector.
  explicit Direction(std::vector<double> components) : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("direction must have at least one component");
    const double norm = std::sqrt(dot(components_, components_));
    if (!(norm > 0.0) || !std::isfinite(norm)) throw std::invalid_argument("direction must be finite and nonzero");
    for (double& c : components_) c /= norm;
  }

  static Direction axis(std::size_t dim, std::size_t k) {
    std::vector<double> e(dim, 0.0);
    e.at(k) = 1.0;
    return Direction(std::move(e));
  }

  std::size_t dim() const noexcept { return components_.size(); }
  std::span<const double> components() const noexcept { return components_; }
  double operator[](std::size_t k) const noexcept { return components_[k]; }

  double apply(std::span<const double> x) const noexcept { return dot(components_, x); }

  friend bool operator==(const Direction&, const Direction&) = default;

 private:
  std::vector<double> components_;
};

/// Projection coefficients r.x of a node's points, in input order, with
/// their extrema.
struct ProjectionCoeffs {
  std::vector<double> values;
  double min = 0.0;
  double max = 0.0;

  double extent() const noexcept { return max - min; }
};

/// Uniform on the unit sphere: a normalized i.i.d. standard Gaussian vector.
inline Direction random_direction(std::size_t dim, RngStream& rng) {
  if (dim == 0) throw std::invalid_argument("random_direction: D must be at least 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  while (true) {
    for (double& c : v) c = normal(rng.engine());
    if (dot(v, v) > 0.0) return Direction(std::move(v));
  }
}

inline ProjectionCoeffs project(std::span<const std::size_t> points, const Dataset& data, const Direction& dir) {
  if (points.empty()) throw std::invalid_argument("project: empty point set");
  if (dir.dim() != data.dim()) throw std::invalid_argument("project: direction dimension mismatch");
  ProjectionCoeffs out;
  out.values.resize(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) out.values[k] = dir.apply(data.row(points[k]));
  const auto [lo, hi] = std::minmax_element(out.values.begin(), out.values.end());
  out.min = *lo;
  out.max = *hi;
  return out;
}

/// Sample standard deviation (divisor n-1), 0 for a single value.
inline double spread(std::span<const double> values) noexcept {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  // Shifted by the first value so constant input is exactly 0.
  const double shift = values[0];
  double mean = 0.0;
  for (double v : values) mean += v - shift;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - shift - mean) * (v - shift - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

inline double spread(const ProjectionCoeffs& coeffs) noexcept { return spread(coeffs.values); }

struct DirectionChoice {
  Direction direction;
  ProjectionCoeffs coeffs;
  double spread = 0.0;
};

/// Draws `tries` random directions and keeps the one whose projected
/// coefficients have the largest spread; the earliest candidate wins ties.
/// With tries == 1 the single draw is returned unconditionally. When
/// `candidate_spreads` is given, the spread of every candidate is appended
/// to it in draw order.
inline DirectionChoice select_direction(std::span<const std::size_t> points, const Dataset& data, std::size_t tries,
                                        RngStream& rng, std::vector<double>* candidate_spreads = nullptr) {
  if (tries == 0) throw std::invalid_argument("select_direction: nTry must be at least 1");
  if (points.empty()) throw std::invalid_argument("select_direction: empty point set");

  Direction first = random_direction(data.dim(), rng);
  ProjectionCoeffs first_coeffs = project(points, data, first);
  const double first_spread = spread(first_coeffs);
  DirectionChoice best{std::move(first), std::move(first_coeffs), first_spread};
  if (candidate_spreads) candidate_spreads->push_back(best.spread);

  for (std::size_t t = 1; t < tries; ++t) {
    Direction dir = random_direction(data.dim(), rng);
    ProjectionCoeffs coeffs = project(points, data, dir);
    const double s = spread(coeffs);
    if (candidate_spreads) candidate_spreads->push_back(s);
    if (s > best.spread) best = DirectionChoice{std::move(dir), std::move(coeffs), s};
  }
  return best;
}

}  // namespace rpforest
