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

// Open-loop forecasting metrics over clustered trajectory sets: minADE, wADE,
// minFDE, miss rate with speed- and horizon-scaled lateral/longitudinal
// tolerances, and mean average precision over behavior buckets.

#ifndef MSL_METRICS_HPP_
#define MSL_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "msl/common.hpp"
#include "msl/geometry.hpp"

namespace msl {

struct ClusteredForecast {
  std::vector<std::vector<Vec2>> trajectories;  // K tracks, equal horizon
  std::vector<double> probabilities;            // K weights, sum to 1

  void validate() const {
    if (trajectories.empty()) throw std::invalid_argument("forecast: need K >= 1");
    if (trajectories.size() != probabilities.size()) {
      throw std::invalid_argument("forecast: K trajectories vs probabilities mismatch");
    }
    double sum = 0.0;
    for (double p : probabilities) {
      if (!(p >= 0.0)) throw std::invalid_argument("forecast: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("forecast: weights must sum to 1");
    for (const auto& tr : trajectories) {
      if (tr.size() != trajectories.front().size()) {
        throw std::invalid_argument("forecast: ragged trajectory horizons");
      }
    }
  }
};

namespace detail {

inline void check_horizon(const ClusteredForecast& f, std::span<const Vec2> gt) {
  f.validate();
  if (gt.empty()) throw std::invalid_argument("metrics: empty ground truth");
  if (f.trajectories.front().size() != gt.size()) {
    throw std::invalid_argument("metrics: forecast horizon != ground-truth horizon");
  }
}

}  // namespace detail

// Mean pointwise Euclidean distance between two equal-length tracks.
inline double track_ade(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("track_ade: bad tracks");
  double sum = 0.0;
  for (size_t t = 0; t < a.size(); ++t) sum += (a[t] - b[t]).norm();
  return sum / static_cast<double>(a.size());
}

inline double min_ade(const ClusteredForecast& f, std::span<const Vec2> gt) {
  detail::check_horizon(f, gt);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tr : f.trajectories) best = std::min(best, track_ade(tr, gt));
  return best;
}

inline double w_ade(const ClusteredForecast& f, std::span<const Vec2> gt) {
  detail::check_horizon(f, gt);
  double sum = 0.0;
  for (size_t k = 0; k < f.trajectories.size(); ++k) {
    sum += f.probabilities[k] * track_ade(f.trajectories[k], gt);
  }
  return sum;
}

inline double min_fde(const ClusteredForecast& f, std::span<const Vec2> gt) {
  detail::check_horizon(f, gt);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tr : f.trajectories) best = std::min(best, (tr.back() - gt.back()).norm());
  return best;
}

// ---------------------------------------------------------------------------
// Miss definition

// Tolerances declared at a reference horizon, stretched linearly with the
// actual horizon and shrunk for slow agents (half tolerance at walking pace,
// full tolerance at driving speed, linear in between).
struct MissThresholds {
  double lateral_base = 1.0;        // meters at the reference horizon
  double longitudinal_base = 2.0;   // meters at the reference horizon
  double reference_horizon_s = 3.0;
  double low_speed_mps = 1.4;
  double high_speed_mps = 11.0;
  double low_speed_scale = 0.5;
  double high_speed_scale = 1.0;

  void validate() const {
    for (double v : {lateral_base, longitudinal_base, reference_horizon_s, low_speed_mps,
                     high_speed_mps, low_speed_scale, high_speed_scale}) {
      if (!(v > 0.0)) throw std::invalid_argument("MissThresholds: all fields must be > 0");
    }
    if (!(high_speed_mps > low_speed_mps)) {
      throw std::invalid_argument("MissThresholds: speed knees out of order");
    }
  }

  double speed_factor(double speed_mps) const {
    if (speed_mps <= low_speed_mps) return low_speed_scale;
    if (speed_mps >= high_speed_mps) return high_speed_scale;
    const double t = (speed_mps - low_speed_mps) / (high_speed_mps - low_speed_mps);
    return low_speed_scale + t * (high_speed_scale - low_speed_scale);
  }

  double lateral(double horizon_s, double speed_mps) const {
    return lateral_base * (horizon_s / reference_horizon_s) * speed_factor(speed_mps);
  }
  double longitudinal(double horizon_s, double speed_mps) const {
    return longitudinal_base * (horizon_s / reference_horizon_s) * speed_factor(speed_mps);
  }
};

namespace detail {

// Longitudinal axis at the endpoint: last resolvable ground-truth motion
// direction, falling back to the overall displacement, then to +x.
inline Vec2 endpoint_axis(std::span<const Vec2> gt) {
  for (size_t i = gt.size(); i-- > 1;) {
    const Vec2 d = gt[i] - gt[i - 1];
    if (d.norm() > 1e-6) return d * (1.0 / d.norm());
  }
  const Vec2 d = gt.back() - gt.front();
  if (d.norm() > 1e-6) return d * (1.0 / d.norm());
  return {1.0, 0.0};
}

}  // namespace detail

// An agent is missed when no clustered trajectory lands within the lateral
// and longitudinal tolerances of the ground truth at the final step.
inline bool is_miss(const ClusteredForecast& f, std::span<const Vec2> gt, double speed_mps,
                    double horizon_s, const MissThresholds& th) {
  detail::check_horizon(f, gt);
  th.validate();
  const Vec2 lon = detail::endpoint_axis(gt);
  const Vec2 lat{-lon.y, lon.x};
  const double lat_tol = th.lateral(horizon_s, speed_mps);
  const double lon_tol = th.longitudinal(horizon_s, speed_mps);
  for (const auto& tr : f.trajectories) {
    const Vec2 err = tr.back() - gt.back();
    if (std::abs(err.dot(lat)) <= lat_tol && std::abs(err.dot(lon)) <= lon_tol) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Behavior buckets

enum class TrajectoryBucket : int {
  kStationary = 0,
  kStraight = 1,
  kStraightLeft = 2,
  kStraightRight = 3,
  kLeft = 4,
  kRight = 5,
  kLeftUTurn = 6,
  kRightUTurn = 7,
};
inline constexpr int kNumBuckets = 8;

inline const char* bucket_name(TrajectoryBucket b) {
  switch (b) {
    case TrajectoryBucket::kStationary: return "stationary";
    case TrajectoryBucket::kStraight: return "straight";
    case TrajectoryBucket::kStraightLeft: return "straight-left";
    case TrajectoryBucket::kStraightRight: return "straight-right";
    case TrajectoryBucket::kLeft: return "left";
    case TrajectoryBucket::kRight: return "right";
    case TrajectoryBucket::kLeftUTurn: return "left-u-turn";
    case TrajectoryBucket::kRightUTurn: return "right-u-turn";
  }
  throw std::invalid_argument("unknown bucket");
}

// Rules: displacement < 2 m is stationary; |heading change| < 15 degrees is
// the straight family, split left/right when the lateral offset in the
// initial-heading frame exceeds 2 m; 15 to 135 degrees turns left/right; past
// 135 degrees becomes a u-turn.
inline TrajectoryBucket behavior_bucket(std::span<const Vec2> gt) {
  if (gt.size() < 2) throw std::invalid_argument("behavior_bucket: track too short");
  const Vec2 disp = gt.back() - gt.front();
  if (disp.norm() < 2.0) return TrajectoryBucket::kStationary;
  const double dh = total_heading_change(gt);
  const double adh = std::abs(dh);
  if (adh < deg2rad(15.0)) {
    const double h0 = initial_heading(gt);
    const Vec2 fwd{std::cos(h0), std::sin(h0)};
    const double lateral = fwd.cross(disp);  // +left, -right of initial heading
    if (lateral > 2.0) return TrajectoryBucket::kStraightLeft;
    if (lateral < -2.0) return TrajectoryBucket::kStraightRight;
    return TrajectoryBucket::kStraight;
  }
  if (adh <= deg2rad(135.0)) {
    return dh > 0 ? TrajectoryBucket::kLeft : TrajectoryBucket::kRight;
  }
  return dh > 0 ? TrajectoryBucket::kLeftUTurn : TrajectoryBucket::kRightUTurn;
}

// ---------------------------------------------------------------------------
// Dataset-level aggregation

struct AgentEval {
  ClusteredForecast forecast;
  std::vector<Vec2> gt;
  double speed_mps = 0.0;  // ground-truth speed at prediction time
};

inline double mean_min_ade(std::span<const AgentEval> agents) {
  if (agents.empty()) throw std::invalid_argument("metrics: no agents");
  double sum = 0.0;
  for (const auto& a : agents) sum += min_ade(a.forecast, a.gt);
  return sum / static_cast<double>(agents.size());
}

inline double mean_w_ade(std::span<const AgentEval> agents) {
  if (agents.empty()) throw std::invalid_argument("metrics: no agents");
  double sum = 0.0;
  for (const auto& a : agents) sum += w_ade(a.forecast, a.gt);
  return sum / static_cast<double>(agents.size());
}

inline double mean_min_fde(std::span<const AgentEval> agents) {
  if (agents.empty()) throw std::invalid_argument("metrics: no agents");
  double sum = 0.0;
  for (const auto& a : agents) sum += min_fde(a.forecast, a.gt);
  return sum / static_cast<double>(agents.size());
}

inline double miss_rate(std::span<const AgentEval> agents, double horizon_s,
                        const MissThresholds& th) {
  if (agents.empty()) throw std::invalid_argument("metrics: no agents");
  int misses = 0;
  for (const auto& a : agents) {
    if (is_miss(a.forecast, a.gt, a.speed_mps, horizon_s, th)) ++misses;
  }
  return static_cast<double>(misses) / static_cast<double>(agents.size());
}

// Mean average precision over behavior buckets. Each agent contributes one
// detection: a hit when any trajectory is inside the miss tolerance, with
// confidence equal to the probability of the best hitting trajectory (or the
// model's most confident trajectory when missed). Per bucket, detections are
// swept in confidence order and AP is the trapezoid area under the P/R curve
// anchored at (recall 0, precision 1).
inline double map_metric(std::span<const AgentEval> agents, double horizon_s,
                         const MissThresholds& th) {
  if (agents.empty()) throw std::invalid_argument("metrics: no agents");
  struct Detection {
    double confidence;
    bool hit;
    size_t index;
  };
  std::array<std::vector<Detection>, kNumBuckets> buckets;
  for (size_t i = 0; i < agents.size(); ++i) {
    const AgentEval& a = agents[i];
    detail::check_horizon(a.forecast, a.gt);
    const TrajectoryBucket bucket = behavior_bucket(a.gt);
    const Vec2 lon = detail::endpoint_axis(a.gt);
    const Vec2 lat{-lon.y, lon.x};
    const double lat_tol = th.lateral(horizon_s, a.speed_mps);
    const double lon_tol = th.longitudinal(horizon_s, a.speed_mps);
    bool hit = false;
    double conf = 0.0;
    double max_prob = 0.0;
    for (size_t k = 0; k < a.forecast.trajectories.size(); ++k) {
      max_prob = std::max(max_prob, a.forecast.probabilities[k]);
      const Vec2 err = a.forecast.trajectories[k].back() - a.gt.back();
      if (std::abs(err.dot(lat)) <= lat_tol && std::abs(err.dot(lon)) <= lon_tol) {
        hit = true;
        conf = std::max(conf, a.forecast.probabilities[k]);
      }
    }
    if (!hit) conf = max_prob;
    buckets[static_cast<int>(bucket)].push_back({conf, hit, i});
  }
  double ap_sum = 0.0;
  int populated = 0;
  for (auto& dets : buckets) {
    if (dets.empty()) continue;
    ++populated;
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.hit != b.hit) return a.hit;
      return a.index < b.index;
    });
    const double total = static_cast<double>(dets.size());
    double prev_recall = 0.0, prev_precision = 1.0;
    double tp = 0.0, ap = 0.0;
    for (size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].hit) tp += 1.0;
      const double recall = tp / total;
      const double precision = tp / static_cast<double>(i + 1);
      ap += (recall - prev_recall) * 0.5 * (precision + prev_precision);
      prev_recall = recall;
      prev_precision = precision;
    }
    ap_sum += ap;
  }
  return ap_sum / populated;
}

}  // namespace msl

#endif  // MSL_METRICS_HPP_
