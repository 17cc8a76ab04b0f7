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

// Inference-compute sweeps: metrics as a function of the number of sampled
// rollouts, and the crossover frontier picking the best model per FLOPs range.
// Rollouts are sampled once at the largest count per scene; smaller counts
// evaluate prefixes, which is exact because each rollout is independently
// seeded.

#ifndef MSL_SWEEP_HPP_
#define MSL_SWEEP_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "msl/cluster.hpp"
#include "msl/compute.hpp"
#include "msl/io.hpp"
#include "msl/metrics.hpp"

namespace msl {

// Joint rollouts and ground truth for one evaluation scene.
// rollouts[r][a] is modeled agent a's trajectory in joint sample r.
struct SceneRollouts {
  std::vector<std::vector<std::vector<Vec2>>> rollouts;
  std::vector<std::vector<Vec2>> gt;  // per modeled agent
  std::vector<double> speeds_mps;     // per modeled agent, at prediction time

  void validate() const {
    if (rollouts.empty()) throw std::invalid_argument("SceneRollouts: no rollouts");
    const size_t agents = gt.size();
    if (agents == 0) throw std::invalid_argument("SceneRollouts: no agents");
    if (speeds_mps.size() != agents) throw std::invalid_argument("SceneRollouts: speeds mismatch");
    for (const auto& r : rollouts) {
      if (r.size() != agents) throw std::invalid_argument("SceneRollouts: agent count mismatch");
    }
  }
};

struct InferenceSweepRow {
  int samples = 0;
  u64 flops = 0;  // per-scene sampling cost at this count
  double min_ade = 0, w_ade = 0, min_fde = 0, miss_rate = 0, mean_ap = 0;
};

struct InferenceSweepTable {
  std::string model_id;
  ModelShape shape;
  std::vector<InferenceSweepRow> rows;  // ascending sample counts
};

// Evaluate clustered metrics using only the first `samples` rollouts of each
// scene.
inline InferenceSweepRow eval_rollout_prefix(std::span<const SceneRollouts> scenes, int samples,
                                             int K, double horizon_s, const MissThresholds& th,
                                             double suppression_radius) {
  if (scenes.empty()) throw std::invalid_argument("eval: no scenes");
  if (samples < K) throw std::invalid_argument("eval: samples < clusters");
  std::vector<AgentEval> agents;
  for (const SceneRollouts& scene : scenes) {
    scene.validate();
    if (static_cast<int>(scene.rollouts.size()) < samples) {
      throw std::invalid_argument("eval: scene has fewer rollouts than requested");
    }
    const size_t num_agents = scene.gt.size();
    for (size_t a = 0; a < num_agents; ++a) {
      std::vector<std::vector<Vec2>> tracks;
      tracks.reserve(samples);
      for (int r = 0; r < samples; ++r) tracks.push_back(scene.rollouts[r][a]);
      AgentEval ev;
      ev.forecast = aggregate_rollouts(tracks, K, suppression_radius);
      ev.gt = scene.gt[a];
      ev.speed_mps = scene.speeds_mps[a];
      agents.push_back(std::move(ev));
    }
  }
  InferenceSweepRow row;
  row.samples = samples;
  row.min_ade = mean_min_ade(agents);
  row.w_ade = mean_w_ade(agents);
  row.min_fde = mean_min_fde(agents);
  row.miss_rate = miss_rate(agents, horizon_s, th);
  row.mean_ap = map_metric(agents, horizon_s, th);
  return row;
}

inline InferenceSweepTable inference_sweep_from_rollouts(
    std::span<const SceneRollouts> scenes, const ModelShape& shape, std::string model_id,
    std::span<const int> sample_counts, int K, double horizon_s, const MissThresholds& th) {
  if (sample_counts.empty()) throw std::invalid_argument("inference_sweep: no sample counts");
  InferenceSweepTable table;
  table.model_id = std::move(model_id);
  table.shape = shape;
  std::vector<int> counts(sample_counts.begin(), sample_counts.end());
  std::sort(counts.begin(), counts.end());
  const double radius = th.lateral(horizon_s, th.high_speed_mps);
  for (int s : counts) {
    InferenceSweepRow row = eval_rollout_prefix(scenes, s, K, horizon_s, th, radius);
    row.flops = inference_flops(shape, static_cast<u64>(s));
    table.rows.push_back(row);
  }
  return table;
}

inline std::string sweep_table_csv(const InferenceSweepTable& table) {
  CsvWriter csv({"model", "samples", "inference_flops", "min_ade", "w_ade", "min_fde",
                 "miss_rate", "mean_ap"});
  for (const auto& r : table.rows) {
    csv.append_row({table.model_id, format_number(r.samples), format_number(double(r.flops)),
                    format_number(r.min_ade), format_number(r.w_ade), format_number(r.min_fde),
                    format_number(r.miss_rate), format_number(r.mean_ap)});
  }
  return csv.str();
}

// ---------------------------------------------------------------------------
// Crossover frontier

struct FrontierSegment {
  double flops_lo = 0;
  double flops_hi = 0;
  int model_index = -1;
};

// Lower envelope of per-model metric curves (piecewise linear in log FLOPs).
// Curves compete only where they are defined. Breakpoints include exact
// pairwise segment intersections; interval ties go to the model that was
// better at smaller FLOPs, then to input order.
inline std::vector<FrontierSegment> crossover_frontier(
    std::span<const std::vector<std::pair<double, double>>> curves) {
  const int M = static_cast<int>(curves.size());
  if (M == 0) throw std::invalid_argument("crossover_frontier: no curves");
  for (const auto& c : curves) {
    if (c.size() < 1) throw std::invalid_argument("crossover_frontier: empty curve");
    for (size_t i = 0; i + 1 < c.size(); ++i) {
      if (!(c[i].first < c[i + 1].first)) {
        throw std::invalid_argument("crossover_frontier: flops must be strictly increasing");
      }
    }
    for (const auto& [x, y] : c) {
      if (!(x > 0) || !std::isfinite(y)) throw std::invalid_argument("crossover_frontier: bad point");
    }
  }

  // Piecewise-linear evaluation in u = ln x; quiet NaN outside the domain.
  auto value_at = [&curves](int m, double u) {
    const auto& c = curves[m];
    const double x0 = std::log(c.front().first), x1 = std::log(c.back().first);
    if (u < x0 - 1e-12 || u > x1 + 1e-12) return std::numeric_limits<double>::quiet_NaN();
    if (c.size() == 1) return c.front().second;
    for (size_t i = 0; i + 1 < c.size(); ++i) {
      const double a = std::log(c[i].first), b = std::log(c[i + 1].first);
      if (u <= b + 1e-12) {
        const double t = (u - a) / (b - a);
        return c[i].second + t * (c[i + 1].second - c[i].second);
      }
    }
    return c.back().second;
  };

  std::vector<double> breaks;
  for (const auto& c : curves) {
    for (const auto& [x, y] : c) breaks.push_back(std::log(x));
  }
  // Exact pairwise segment intersections in (ln x, y).
  for (int i = 0; i < M; ++i) {
    for (int j = i + 1; j < M; ++j) {
      for (size_t si = 0; si + 1 < curves[i].size(); ++si) {
        for (size_t sj = 0; sj + 1 < curves[j].size(); ++sj) {
          const double ai = std::log(curves[i][si].first);
          const double bi = std::log(curves[i][si + 1].first);
          const double aj = std::log(curves[j][sj].first);
          const double bj = std::log(curves[j][sj + 1].first);
          const double lo = std::max(ai, aj), hi = std::min(bi, bj);
          if (lo >= hi) continue;
          const double yi0 = curves[i][si].second, yi1 = curves[i][si + 1].second;
          const double yj0 = curves[j][sj].second, yj1 = curves[j][sj + 1].second;
          const double slope_i = (yi1 - yi0) / (bi - ai);
          const double slope_j = (yj1 - yj0) / (bj - aj);
          const double gap0 = (yi0 + slope_i * (lo - ai)) - (yj0 + slope_j * (lo - aj));
          const double gap1 = (yi0 + slope_i * (hi - ai)) - (yj0 + slope_j * (hi - aj));
          if (gap0 == 0.0) breaks.push_back(lo);
          if (gap1 == 0.0) breaks.push_back(hi);
          if ((gap0 < 0) != (gap1 < 0) && gap0 != gap1) {
            breaks.push_back(lo + (hi - lo) * (gap0 / (gap0 - gap1)));
          }
        }
      }
    }
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               breaks.end());

  std::vector<FrontierSegment> segments;
  for (size_t b = 0; b + 1 < breaks.size(); ++b) {
    const double mid = 0.5 * (breaks[b] + breaks[b + 1]);
    int winner = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < M; ++m) {
      const double v = value_at(m, mid);
      if (std::isnan(v)) continue;
      if (v < best - 1e-12) {
        best = v;
        winner = m;
      } else if (winner >= 0 && std::abs(v - best) <= 1e-12) {
        // Tie on the interval: prefer the model that was better just left.
        const double vl = value_at(m, breaks[b]);
        const double wl = value_at(winner, breaks[b]);
        if (!std::isnan(vl) && (std::isnan(wl) || vl < wl - 1e-12)) winner = m;
      }
    }
    if (winner < 0) continue;
    const double lo = std::exp(breaks[b]), hi = std::exp(breaks[b + 1]);
    if (!segments.empty() && segments.back().model_index == winner &&
        std::abs(segments.back().flops_hi - lo) < 1e-9 * lo) {
      segments.back().flops_hi = hi;
    } else {
      segments.push_back({lo, hi, winner});
    }
  }
  if (segments.empty()) {
    // Degenerate single-point curves: attribute the point to the best model.
    double best = std::numeric_limits<double>::infinity();
    int winner = 0;
    for (int m = 0; m < M; ++m) {
      if (curves[m].front().second < best) {
        best = curves[m].front().second;
        winner = m;
      }
    }
    segments.push_back({curves[winner].front().first, curves[winner].front().first, winner});
  }
  return segments;
}

}  // namespace msl

#endif  // MSL_SWEEP_HPP_
