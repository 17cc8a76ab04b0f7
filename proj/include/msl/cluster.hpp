/* Copyright 2026 The Motion Scaling Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Rollout aggregation: R sampled trajectories become K representative ones.
// Greedy farthest-first NMS (medoid seed, suppression radius tied to the miss
// tolerance) proposes diverse exemplars; K-means under the trajectory ADE
// metric with pointwise-mean centroids refines them. Probabilities are member
// fractions. The procedure is fully deterministic.

#ifndef MSL_CLUSTER_HPP_
#define MSL_CLUSTER_HPP_

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "msl/metrics.hpp"

namespace msl {

inline ClusteredForecast aggregate_rollouts(std::span<const std::vector<Vec2>> rollouts, int K,
                                            double suppression_radius = 1.0,
                                            int max_iters = 100) {
  const int R = static_cast<int>(rollouts.size());
  if (K < 1) throw std::invalid_argument("aggregate: K must be >= 1");
  if (R < K) throw std::invalid_argument("aggregate: fewer rollouts than clusters");
  const size_t T = rollouts[0].size();
  if (T == 0) throw std::invalid_argument("aggregate: empty trajectories");
  for (const auto& r : rollouts) {
    if (r.size() != T) throw std::invalid_argument("aggregate: ragged rollouts");
  }

  std::vector<double> dist(static_cast<size_t>(R) * R, 0.0);
  for (int i = 0; i < R; ++i) {
    for (int j = i + 1; j < R; ++j) {
      const double d = track_ade(rollouts[i], rollouts[j]);
      dist[i * R + j] = d;
      dist[j * R + i] = d;
    }
  }

  // Medoid first: the rollout with the smallest total distance to the rest.
  int medoid = 0;
  double best_total = std::numeric_limits<double>::infinity();
  for (int i = 0; i < R; ++i) {
    double total = 0.0;
    for (int j = 0; j < R; ++j) total += dist[i * R + j];
    if (total < best_total) {
      best_total = total;
      medoid = i;
    }
  }
  std::vector<int> exemplars = {medoid};
  std::vector<char> taken(R, 0);
  taken[medoid] = 1;
  while (static_cast<int>(exemplars.size()) < K) {
    // Farthest-first among candidates clear of every exemplar's suppression
    // radius; when all survivors are suppressed, fall back to farthest overall.
    int best = -1;
    double best_gap = -1.0;
    int fallback = -1;
    double fallback_gap = -1.0;
    for (int i = 0; i < R; ++i) {
      if (taken[i]) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (int e : exemplars) nearest = std::min(nearest, dist[i * R + e]);
      if (nearest > fallback_gap) {
        fallback_gap = nearest;
        fallback = i;
      }
      if (nearest > suppression_radius && nearest > best_gap) {
        best_gap = nearest;
        best = i;
      }
    }
    const int pick = best >= 0 ? best : fallback;
    exemplars.push_back(pick);
    taken[pick] = 1;
  }

  // K-means refinement in trajectory space.
  std::vector<std::vector<Vec2>> centroids;
  centroids.reserve(K);
  for (int e : exemplars) centroids.push_back(rollouts[e]);
  std::vector<int> assign(R, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < R; ++i) {
      int best_k = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        const double d = track_ade(rollouts[i], centroids[k]);
        if (d < best_d - 1e-15) {
          best_d = d;
          best_k = k;
        }
      }
      if (assign[i] != best_k) {
        assign[i] = best_k;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    for (int k = 0; k < K; ++k) {
      std::vector<Vec2> mean(T, Vec2{0, 0});
      int count = 0;
      for (int i = 0; i < R; ++i) {
        if (assign[i] != k) continue;
        ++count;
        for (size_t t = 0; t < T; ++t) mean[t] += rollouts[i][t];
      }
      if (count > 0) {
        for (size_t t = 0; t < T; ++t) mean[t] = mean[t] * (1.0 / count);
        centroids[k] = std::move(mean);
      }
      // Empty clusters keep their exemplar; they simply collect no mass.
    }
  }

  std::vector<int> counts(K, 0);
  for (int i = 0; i < R; ++i) ++counts[assign[i]];

  // Stable output order: descending cluster mass, ties by exemplar order.
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&counts](int a, int b) { return counts[a] > counts[b]; });

  ClusteredForecast out;
  for (int k : order) {
    out.trajectories.push_back(centroids[k]);
    out.probabilities.push_back(static_cast<double>(counts[k]) / static_cast<double>(R));
  }
  out.validate();
  return out;
}

}  // namespace msl

#endif  // MSL_CLUSTER_HPP_
