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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rpforest/rng.hpp"

namespace rpforest {

/// Row index into a Dataset.
struct PointRef {
  std::size_t index = 0;

  friend bool operator==(PointRef, PointRef) = default;
  friend auto operator<=>(PointRef, PointRef) = default;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Orders neighbors by ascending distance, smaller index first on ties.
inline bool closer(const Neighbor& a, const Neighbor& b) noexcept {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.index < b.index;
}

/// Malformed or unusable input data. `line` and `column` are 1-based
/// positions in the source file, 0 when not applicable.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    std::string out = what;
    if (line != 0) {
      out += " (row " + std::to_string(line);
      if (column != 0) out += ", column " + std::to_string(column);
      out += ")";
    }
    return out;
  }

  std::size_t line_;
  std::size_t column_;
};

/// Immutable n x D matrix of finite coordinates, stored row-major.
class Dataset {
 public:
  Dataset(std::vector<double> coords, std::size_t dim, std::vector<std::string> ids = {})
      : coords_(std::move(coords)), dim_(dim), ids_(std::move(ids)) {
    if (dim_ == 0) throw DataError("dataset dimension must be at least 1");
    if (coords_.empty()) throw DataError("dataset must contain at least one point");
    if (coords_.size() % dim_ != 0) throw DataError("coordinate count is not a multiple of the dimension");
    n_ = coords_.size() / dim_;
    if (!ids_.empty() && ids_.size() != n_) throw DataError("id count does not match point count");
    for (std::size_t k = 0; k < coords_.size(); ++k) {
      if (!std::isfinite(coords_[k])) throw DataError("non-finite coordinate", k / dim_ + 1, k % dim_ + 1);
    }
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> row(std::size_t i) const noexcept { return {coords_.data() + i * dim_, dim_}; }
  std::span<const double> row(PointRef p) const { return row(checked(p)); }
  std::span<const double> coords() const noexcept { return coords_; }

  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::size_t checked(PointRef p) const {
    if (p.index >= n_) throw std::out_of_range("point index " + std::to_string(p.index) + " out of range");
    return p.index;
  }

  /// FNV-1a over (n, D, coordinate bytes). Used to key caches and to check
  /// that a persisted forest belongs to this dataset.
  std::uint64_t checksum() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t len) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t k = 0; k < len; ++k) {
        h ^= b[k];
        h *= 0x100000001b3ULL;
      }
    };
    const std::uint64_t header[2] = {n_, dim_};
    mix(header, sizeof header);
    mix(coords_.data(), coords_.size() * sizeof(double));
    return h;
  }

 private:
  std::vector<double> coords_;
  std::size_t dim_ = 0;
  std::size_t n_ = 0;
  std::vector<std::string> ids_;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Euclidean distance. Every distance in the library goes through here.
inline double distance(std::span<const double> a, std::span<const double> b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

inline double distance(PointRef a, PointRef b, const Dataset& data) {
  return distance(data.row(a), data.row(b));
}

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool blank(std::string_view s) noexcept { return trim(s).empty(); }

}  // namespace detail

enum class FileFormat { csv };

struct LoadOptions {
  FileFormat format = FileFormat::csv;
  bool has_header = false;
};

/// Reads a comma-separated numeric matrix. Row order is preserved; blank
/// lines are ignored.
inline Dataset load_points(const std::string& path, LoadOptions options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::vector<double> coords;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  bool header_pending = options.has_header;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (detail::blank(view)) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }

    std::size_t column = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = view.find(',', start);
      const std::string_view cell =
          detail::trim(view.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      ++column;
      if (dim != 0 && column > dim) throw DataError("ragged row: too many columns", line_no, column);
      double value = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, value);
      if (cell.empty() || ec != std::errc() || ptr != last) {
        throw DataError("non-numeric cell '" + std::string(cell) + "'", line_no, column);
      }
      if (!std::isfinite(value)) throw DataError("non-finite cell '" + std::string(cell) + "'", line_no, column);
      coords.push_back(value);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (dim == 0) {
      dim = column;
    } else if (column != dim) {
      throw DataError("ragged row: expected " + std::to_string(dim) + " columns, found " + std::to_string(column),
                      line_no, column);
    }
  }
  if (in.bad()) throw DataError("read failure on '" + path + "'");
  if (coords.empty()) throw DataError("no data rows in '" + path + "'");
  return Dataset(std::move(coords), dim);
}

/// Writes the dataset as CSV using shortest round-trip representations, so
/// load_points reproduces every coordinate bit for bit.
inline void save_points(const Dataset& data, const std::string& path, bool write_header = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  if (write_header) {
    for (std::size_t j = 0; j < data.dim(); ++j) out << (j ? "," : "") << "x" << j;
    out << '\n';
  }
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = data.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, row[j]);
      if (j) out.put(',');
      out.write(buf, res.ptr - buf);
    }
    out.put('\n');
  }
  if (!out) throw DataError("write failure on '" + path + "'");
}

/// Axis-aligned Gaussian sample with zero mean and per-axis standard
/// deviations `scales`.
inline Dataset gen_gaussian(std::size_t n, std::size_t dim, std::span<const double> scales, std::uint64_t seed) {
  if (n == 0 || dim == 0) throw std::invalid_argument("gen_gaussian: n and D must be at least 1");
  if (scales.size() != dim) throw std::invalid_argument("gen_gaussian: need one scale per dimension");
  for (double s : scales) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("gen_gaussian: scales must be finite and >= 0");
  }
  RngStream rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> coords(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) coords[i * dim + j] = scales[j] * normal(rng.engine());
  }
  return Dataset(std::move(coords), dim);
}

inline Dataset gen_gaussian(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::vector<double> unit(dim, 1.0);
  return gen_gaussian(n, dim, unit, seed);
}

/// Per-column z-scores (sample SD, divisor n-1). Constant columns are
/// centered only.
inline Dataset standardize(const Dataset& data) {
  const std::size_t n = data.size();
  const std::size_t dim = data.dim();
  std::vector<double> mean(dim, 0.0);
  std::vector<double> sd(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < dim; ++j) mean[j] += r[j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < dim; ++j) sd[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  }
  for (double& s : sd) s = n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : 0.0;

  std::vector<double> out(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      const double centered = r[j] - mean[j];
      out[i * dim + j] = sd[j] > 0.0 ? centered / sd[j] : centered;
    }
  }
  return Dataset(std::move(out), dim, data.ids());
}

}  // namespace rpforest
