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

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "rpforest/projection.hpp"
#include "test_support.hpp"

using namespace rpforest;

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST_CASE("random_direction in one dimension is +1 or -1", "[projection]") {
  RngStream rng(1);
  for (int t = 0; t < 50; ++t) {
    const Direction d = random_direction(1, rng);
    CHECK(std::abs(d[0]) == 1.0);
  }
}

TEST_CASE("random_direction has unit norm", "[projection]") {
  RngStream rng(2);
  for (std::size_t dim : {1u, 2u, 3u, 17u, 200u}) {
    for (int t = 0; t < 100; ++t) {
      const Direction d = random_direction(dim, rng);
      REQUIRE(d.dim() == dim);
      REQUIRE(std::abs(std::sqrt(dot(d.components(), d.components())) - 1.0) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(random_direction(0, rng), std::invalid_argument);
}

TEST_CASE("random_direction is symmetric on the sphere", "[projection]") {
  RngStream rng(3);
  double sum[3] = {0, 0, 0};
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const Direction d = random_direction(3, rng);
    for (int k = 0; k < 3; ++k) sum[k] += d[k];
  }
  const double norm = std::sqrt(sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]) / draws;
  CHECK(norm < 0.05);
}

TEST_CASE("random_direction is deterministic per stream", "[projection]") {
  RngStream a(77), b(77);
  for (int t = 0; t < 10; ++t) CHECK(random_direction(5, a) == random_direction(5, b));
}

TEST_CASE("project examples", "[projection]") {
  const Dataset data({3.0, 4.0, 0.0, 2.0}, 2);
  const std::vector<std::size_t> first{0};
  CHECK(project(first, data, Direction::axis(2, 0)).values[0] == 3.0);
  const std::vector<std::size_t> second{1};
  CHECK(project(second, data, Direction::axis(2, 0)).values[0] == 0.0);

  const auto both = project(std::vector<std::size_t>{0, 1}, data, Direction::axis(2, 1));
  CHECK(both.values == std::vector<double>{4.0, 2.0});
  CHECK(both.min == 2.0);
  CHECK(both.max == 4.0);
}

TEST_CASE("project matches an independent dot product on a random 20-d node", "[projection]") {
  const Dataset data = rpforest::testing::uniform_data(64, 20, 8, -3.0, 3.0);
  RngStream rng(9);
  const Direction dir = random_direction(20, rng);
  const std::vector<std::size_t> node{5, 0, 63, 17, 40, 2};
  const auto coeffs = project(node, data, dir);
  REQUIRE(coeffs.values.size() == node.size());
  for (std::size_t k = 0; k < node.size(); ++k) {
    long double want = 0.0L;
    const auto x = data.row(node[k]);
    for (std::size_t j = 0; j < 20; ++j) want += static_cast<long double>(dir[j]) * x[j];
    CHECK(std::abs(coeffs.values[k] - static_cast<double>(want)) <= 1e-13);
  }
  CHECK(coeffs.min == *std::min_element(coeffs.values.begin(), coeffs.values.end()));
  CHECK(coeffs.max == *std::max_element(coeffs.values.begin(), coeffs.values.end()));
}

TEST_CASE("project rejects empty sets and dimension mismatch", "[projection]") {
  const Dataset data({1.0, 2.0}, 2);
  CHECK_THROWS_AS(project(std::vector<std::size_t>{}, data, Direction::axis(2, 0)), std::invalid_argument);
  CHECK_THROWS_AS(project(std::vector<std::size_t>{0}, data, Direction::axis(3, 0)), std::invalid_argument);
}

TEST_CASE("project is linear in the data", "[projection][property]") {
  const Dataset data = rpforest::testing::uniform_data(40, 6, 21);
  std::vector<double> scaled(data.coords().begin(), data.coords().end());
  for (double& c : scaled) c *= 4.0;  // power of two keeps the check exact
  const Dataset big(std::move(scaled), 6);
  RngStream rng(4);
  const auto idx = iota_indices(40);
  for (int t = 0; t < 20; ++t) {
    const Direction dir = random_direction(6, rng);
    const auto a = project(idx, data, dir);
    const auto b = project(idx, big, dir);
    for (std::size_t k = 0; k < idx.size(); ++k) REQUIRE(b.values[k] == 4.0 * a.values[k]);
  }
}

TEST_CASE("spread examples", "[projection]") {
  CHECK(spread(std::vector<double>{2.5, 2.5, 2.5}) == 0.0);
  CHECK(spread(std::vector<double>{0.0, 2.0}) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(spread(std::vector<double>{42.0}) == 0.0);

  const std::vector<double> v{0.3, -1.2, 4.4, 2.0, 0.0};
  std::vector<double> shifted = v;
  for (double& x : shifted) x += 1000.0;
  CHECK(spread(shifted) == Catch::Approx(spread(v)).epsilon(1e-12));
}

TEST_CASE("select_direction with nTry=1 returns the single draw", "[projection]") {
  const Dataset data = rpforest::testing::uniform_data(30, 4, 5);
  const auto idx = iota_indices(30);
  RngStream a(123), b(123);
  const auto choice = select_direction(idx, data, 1, a);
  const Direction direct = random_direction(4, b);
  CHECK(choice.direction == direct);
  CHECK(choice.coeffs.values == project(idx, data, direct).values);
}

TEST_CASE("select_direction on identical points has zero spread", "[projection]") {
  const Dataset data(std::vector<double>(3 * 12, 0.75), 3);
  RngStream rng(6);
  const auto choice = select_direction(iota_indices(12), data, 5, rng);
  CHECK(choice.spread == 0.0);
  CHECK(choice.coeffs.extent() == 0.0);
}

TEST_CASE("select_direction picks the largest spread among its candidates", "[projection][property]") {
  const Dataset data = gen_gaussian(200, 8, std::vector<double>{5, 1, 1, 2, 1, 1, 1, 0.5}, 10);
  const auto idx = iota_indices(200);
  RngStream rng(11);
  for (std::size_t tries : {1u, 2u, 5u, 20u}) {
    for (int rep = 0; rep < 25; ++rep) {
      std::vector<double> spreads;
      const auto choice = select_direction(idx, data, tries, rng, &spreads);
      REQUIRE(spreads.size() == tries);
      const auto best = std::max_element(spreads.begin(), spreads.end());
      REQUIRE(choice.spread == *best);
      REQUIRE(choice.spread == spread(choice.coeffs));
      for (double s : spreads) REQUIRE(choice.spread >= s);
    }
  }
}

TEST_CASE("select_direction is deterministic", "[projection][property]") {
  const Dataset data = rpforest::testing::uniform_data(50, 5, 12);
  const auto idx = iota_indices(50);
  RngStream a(5), b(5);
  const auto x = select_direction(idx, data, 7, a);
  const auto y = select_direction(idx, data, 7, b);
  CHECK(x.direction == y.direction);
  CHECK(x.coeffs.values == y.coeffs.values);
}

TEST_CASE("more candidates align splits with the stretched axis", "[projection]") {
  std::vector<double> scales(10, 1.0);
  scales[0] = 10.0;
  const Dataset data = gen_gaussian(500, 10, scales, 13);
  const auto idx = iota_indices(500);
  RngStream rng(14);
  double single = 0.0, many = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    single += std::abs(select_direction(idx, data, 1, rng).direction[0]);
    many += std::abs(select_direction(idx, data, 20, rng).direction[0]);
  }
  CHECK(many / 100 > single / 100);
}

TEST_CASE("select_direction rejects nTry=0 and empty sets", "[projection]") {
  const Dataset data({1.0, 2.0}, 1);
  RngStream rng(1);
  CHECK_THROWS_AS(select_direction(std::vector<std::size_t>{0, 1}, data, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(select_direction(std::vector<std::size_t>{}, data, 1, rng), std::invalid_argument);
}

TEST_CASE("Direction normalizes and rejects zero vectors", "[projection]") {
  const Direction d(std::vector<double>{3.0, 4.0});
  CHECK(d[0] == Catch::Approx(0.6));
  CHECK(d[1] == Catch::Approx(0.8));
  CHECK_THROWS_AS(Direction(std::vector<double>{0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(Direction(std::vector<double>{}), std::invalid_argument);
}
