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

// Builds a forest over synthetic data, answers a few queries, and reports
// the missing rate against the exact oracle.

#include <cstdio>

#include "rpforest/rpforest.hpp"

int main() {
  const rpforest::Dataset data = rpforest::gen_gaussian(3000, 16, /*seed=*/42);

  rpforest::ForestParams params;
  params.trees = 30;
  params.tree.leaf_capacity = 20;
  params.tree.n_try = 5;
  params.master_seed = 7;
  const rpforest::Forest forest = rpforest::build_forest(data, params);

  const auto first = rpforest::knn_query(forest, rpforest::PointRef{0}, 5);
  std::printf("point 0: %zu candidates\n", first.candidate_count);
  for (const auto& nb : first.neighbors) std::printf("  #%zu at %.4f\n", nb.index, nb.distance);

  const auto queries = rpforest::all_points(data);
  const auto results = rpforest::batch_knn(forest, queries, 5);
  const auto exact = rpforest::exact_knn(data, 5);
  const auto report = rpforest::evaluate(results, exact, 5, forest.params());
  std::printf("missing rate %.5f, normalized discrepancy %.5f\n", report.missing_rate,
              report.normalized_discrepancy);
  return 0;
}
