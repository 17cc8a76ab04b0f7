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

// Deterministic synthetic driving world: a four-way intersection with lane
// centerlines, crosswalks, and constant traffic lights. Agents follow
// behavior primitives (straight, turns, u-turns, stop-and-go, pedestrian
// crossings, cyclist weaving) with curvature-aware speed profiles under a
// global acceleration bound. Departure times are scheduled greedily so logged
// tracks are collision-free; unschedulable agents park on the shoulder.

#ifndef MSL_SYNTH_HPP_
#define MSL_SYNTH_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "msl/codec.hpp"
#include "msl/common.hpp"
#include "msl/geometry.hpp"
#include "msl/random.hpp"
#include "msl/scene.hpp"

namespace msl {

enum class Behavior {
  kStraight = 0,
  kLeftTurn,
  kRightTurn,
  kUTurn,
  kStopAndGo,
  kPedCrossing,
  kCyclistWeave,
};
inline constexpr int kNumBehaviors = 7;

inline const char* behavior_name(Behavior b) {
  switch (b) {
    case Behavior::kStraight: return "straight";
    case Behavior::kLeftTurn: return "left_turn";
    case Behavior::kRightTurn: return "right_turn";
    case Behavior::kUTurn: return "u_turn";
    case Behavior::kStopAndGo: return "stop_and_go";
    case Behavior::kPedCrossing: return "ped_crossing";
    case Behavior::kCyclistWeave: return "cyclist_weave";
  }
  return "unknown";
}

struct WorldConfig {
  u64 seed = 1;
  int num_segments = 8;
  int num_agents = 16;  // context agents per scene, including the ego vehicle
  int num_modeled = 8;
  std::array<double, kNumBehaviors> mixture = {0.35, 0.12, 0.12, 0.06, 0.15, 0.12, 0.08};
  double noise_scale = 1.0;
  double accel_bound = 4.0;  // m/s^2, checked on logged positions
  double dt = 0.1;
  double duration_s = 30.0;

  void validate() const {
    if (num_segments < 1) throw std::invalid_argument("WorldConfig: num_segments");
    if (num_agents < 1 || num_agents > kMaxAgents) {
      throw std::invalid_argument("WorldConfig: num_agents out of range");
    }
    if (num_modeled < 1 || num_modeled > num_agents) {
      throw std::invalid_argument("WorldConfig: num_modeled out of range");
    }
    double sum = 0.0;
    for (double w : mixture) {
      if (w < 0.0) throw std::invalid_argument("WorldConfig: negative mixture weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("WorldConfig: mixture must sum to 1");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("WorldConfig: noise_scale");
    if (!(accel_bound > 0.0)) throw std::invalid_argument("WorldConfig: accel_bound");
    if (!(dt > 0.0) || !(duration_s >= 16.0)) throw std::invalid_argument("WorldConfig: timing");
  }
};

struct LoggedAgent {
  AgentInfo info;
  Behavior behavior = Behavior::kStraight;
  bool parked = false;  // shoulder fallback when no collision-free schedule exists
  std::vector<Vec2> pos;        // duration/dt + 1 samples
  std::vector<double> heading;  // same length

  Vec2 velocity_at(int t, double dt) const {
    const int n = static_cast<int>(pos.size());
    if (n < 2) return {0, 0};
    const int lo = std::max(0, t - 1);
    const int hi = std::min(n - 1, t + 1);
    return (pos[hi] - pos[lo]) * (1.0 / ((hi - lo) * dt));
  }
};

struct Segment {
  i64 id = 0;
  double dt = 0.1;
  std::vector<LoggedAgent> agents;  // agents[0] is the ego vehicle
  std::vector<MapSegment> roadgraph;
  std::vector<TrafficLight> lights;
  std::vector<Vec2> av_route;  // the ego vehicle's planned path polyline

  int steps() const { return agents.empty() ? 0 : static_cast<int>(agents[0].pos.size()) - 1; }
  double duration_s() const { return steps() * dt; }

  double miles() const {
    double meters = 0.0;
    for (const LoggedAgent& a : agents) meters += arc_length(a.pos);
    return meters / 1609.344;
  }
};

namespace worldgen {

// Road geometry constants. Lanes sit at +-kLaneOffset from the road axis,
// curb-to-curb half width is kRoadHalf, and turn arcs join at kApproachEnd.
inline constexpr double kLaneOffset = 1.75;
inline constexpr double kRoadHalf = 5.0;
inline constexpr double kRoadExtent = 150.0;
inline constexpr double kApproachEnd = -8.0;
inline constexpr double kEdgeOffset = 6.0;
inline constexpr double kCrosswalkX = 10.5;

inline Vec2 rotate90(const Vec2& p, int quarter) {
  switch (((quarter % 4) + 4) % 4) {
    case 0: return p;
    case 1: return {-p.y, p.x};
    case 2: return {-p.x, -p.y};
    default: return {p.y, -p.x};
  }
}

// Uniform arc-length lookup table for fast repeated position queries.
class SampledPath {
 public:
  SampledPath() = default;
  SampledPath(std::vector<Vec2> raw, double step) : step_(step) {
    if (raw.size() < 2) throw std::invalid_argument("SampledPath: need 2+ points");
    std::vector<double> cum(raw.size(), 0.0);
    for (size_t i = 1; i < raw.size(); ++i) cum[i] = cum[i - 1] + (raw[i] - raw[i - 1]).norm();
    const double total = cum.back();
    const int n = std::max(2, static_cast<int>(std::ceil(total / step_)) + 1);
    step_ = total / (n - 1);
    pts_.resize(n);
    size_t seg = 1;
    for (int i = 0; i < n; ++i) {
      const double s = i * step_;
      while (seg + 1 < raw.size() && cum[seg] < s) ++seg;
      const double den = cum[seg] - cum[seg - 1];
      const double f = den > 0.0 ? std::clamp((s - cum[seg - 1]) / den, 0.0, 1.0) : 0.0;
      pts_[i] = raw[seg - 1] + (raw[seg] - raw[seg - 1]) * f;
    }
  }

  double length() const { return step_ * (pts_.size() - 1); }

  Vec2 at(double s) const {
    if (s <= 0.0) return pts_.front();
    if (s >= length()) return pts_.back();
    const double u = s / step_;
    const int i = std::min(static_cast<int>(u), static_cast<int>(pts_.size()) - 2);
    const double f = u - i;
    return pts_[i] + (pts_[i + 1] - pts_[i]) * f;
  }

  double heading_at(double s) const {
    const double h = std::max(step_, 0.05);
    const Vec2 d = at(std::min(s + h, length())) - at(std::max(s - h, 0.0));
    if (d.norm() < 1e-12) return 0.0;
    return std::atan2(d.y, d.x);
  }

 private:
  double step_ = 0.1;
  std::vector<Vec2> pts_;
};

inline std::vector<Vec2> arc_points(Vec2 center, double radius, double a0, double a1,
                                    double chord = 0.1) {
  const double total = std::abs(a1 - a0) * radius;
  const int n = std::max(2, static_cast<int>(std::ceil(total / chord)) + 1);
  std::vector<Vec2> pts(n);
  for (int i = 0; i < n; ++i) {
    const double a = a0 + (a1 - a0) * i / (n - 1);
    pts[i] = center + Vec2{radius * std::cos(a), radius * std::sin(a)};
  }
  return pts;
}

inline void append_points(std::vector<Vec2>* out, const std::vector<Vec2>& pts) {
  for (const Vec2& p : pts) {
    if (!out->empty() && (out->back() - p).norm() < 1e-9) continue;
    out->push_back(p);
  }
}

// Canonical eastbound paths on the lane y = -kLaneOffset; other approaches are
// quarter-turn rotations of these. back_off extends the spawn point backward
// so agents sharing an approach start well separated.
inline std::vector<Vec2> canonical_vehicle_path(Behavior b, double back_off, double lane_jitter) {
  const double y = -kLaneOffset + lane_jitter;
  const double x0 = -kRoadExtent - back_off;
  std::vector<Vec2> pts;
  switch (b) {
    case Behavior::kStraight:
    case Behavior::kStopAndGo:
      pts = {{x0, y}, {kRoadExtent, y}};
      break;
    case Behavior::kRightTurn: {
      // Quarter arc from the entry (heading +x) onto the southbound exit lane
      // x = -kLaneOffset (heading -y); the center sits below the entry point.
      append_points(&pts, {{x0, y}, {kApproachEnd, y}});
      const double radius = y - kApproachEnd;
      append_points(&pts, arc_points({kApproachEnd, y - radius}, radius, std::numbers::pi / 2, 0.0));
      const double exit_x = kApproachEnd + radius;
      append_points(&pts, {{exit_x, y - radius}, {exit_x, -kRoadExtent}});
      break;
    }
    case Behavior::kLeftTurn: {
      // Quarter arc from the entry (heading +x) onto the northbound exit lane
      // x = +kLaneOffset (heading +y); the center sits above the entry point.
      append_points(&pts, {{x0, y}, {kApproachEnd, y}});
      const double radius = kLaneOffset - kApproachEnd;
      const double cy = y + radius;
      append_points(&pts,
                    arc_points({kApproachEnd, cy}, radius, -std::numbers::pi / 2, 0.0));
      append_points(&pts, {{kLaneOffset, cy}, {kLaneOffset, kRoadExtent}});
      break;
    }
    case Behavior::kUTurn: {
      const double xu = -5.0;
      append_points(&pts, {{x0, y}, {xu, y}});
      const double r = std::abs(y);
      append_points(&pts, arc_points({xu, 0.0}, r, -std::numbers::pi / 2, std::numbers::pi / 2));
      append_points(&pts, {{xu, -y}, {-kRoadExtent, -y}});
      break;
    }
    default:
      throw std::invalid_argument("canonical_vehicle_path: not a vehicle behavior");
  }
  return pts;
}

inline std::vector<Vec2> canonical_ped_path(double back_off, double lateral_slot) {
  const double x = kCrosswalkX + lateral_slot;
  std::vector<Vec2> pts;
  const double y0 = -30.0 - back_off;
  for (double y = y0; y <= 60.0; y += 0.5) pts.push_back({x, y});
  return pts;
}

inline std::vector<Vec2> canonical_cyclist_path(double back_off, double phase) {
  std::vector<Vec2> pts;
  const double x0 = -kRoadExtent - back_off;
  for (double x = x0; x <= kRoadExtent; x += 0.5) {
    const double u = (x - x0) / 30.0;
    pts.push_back({x, -kEdgeOffset + std::sin(2.0 * std::numbers::pi * u + phase)});
  }
  return pts;
}

inline double menger_curvature(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a, bc = c - b, ac = c - a;
  const double den = ab.norm() * bc.norm() * ac.norm();
  if (den < 1e-12) return 0.0;
  return 2.0 * std::abs(ab.cross(bc)) / den;
}

// Curvature-aware speed profile over uniform arc-length samples: cap at the
// lateral-acceleration limit, then backward and forward passes enforce the
// longitudinal limit. Starts and ends at rest.
inline std::vector<double> plan_speeds(const SampledPath& path, double v_cruise, double a_lon,
                                       double a_lat, const std::vector<double>& stop_at,
                                       double ds = 0.5) {
  const int n = std::max(2, static_cast<int>(std::ceil(path.length() / ds)) + 1);
  const double step = path.length() / (n - 1);
  std::vector<Vec2> p(n);
  for (int i = 0; i < n; ++i) p[i] = path.at(i * step);
  std::vector<double> v(n, v_cruise);
  for (int i = 1; i + 1 < n; ++i) {
    const double kappa = menger_curvature(p[i - 1], p[i], p[i + 1]);
    if (kappa > 1e-9) v[i] = std::min(v[i], std::sqrt(a_lat / kappa));
  }
  v[0] = 0.0;
  v[n - 1] = 0.0;
  for (double s : stop_at) {
    const int i = std::clamp(static_cast<int>(std::lround(s / step)), 0, n - 1);
    v[i] = 0.0;
  }
  for (int i = n - 2; i >= 0; --i) v[i] = std::min(v[i], std::sqrt(v[i + 1] * v[i + 1] + 2 * a_lon * step));
  for (int i = 1; i < n; ++i) v[i] = std::min(v[i], std::sqrt(v[i - 1] * v[i - 1] + 2 * a_lon * step));
  return v;
}

struct MotionPlan {
  SampledPath path;
  std::vector<double> speeds;  // uniform in s over the path
  double initial_wait = 0.0;
  double stop_s = -1.0;        // arc length of an en-route stop, if any
  double stop_wait = 0.0;
};

// Integrates s(t) through the speed profile, holding during waits and at the
// path end. A small creep floor pushes through planned zero-speed points.
inline void integrate_motion(const MotionPlan& plan, double extra_wait, double dt, int steps,
                             std::vector<Vec2>* pos, std::vector<double>* heading) {
  const double L = plan.path.length();
  const int n = static_cast<int>(plan.speeds.size());
  const double step = L / (n - 1);
  auto speed_at = [&](double s) {
    const double u = std::clamp(s / step, 0.0, double(n - 1));
    const int i = std::min(static_cast<int>(u), n - 2);
    const double f = u - i;
    return plan.speeds[i] * (1.0 - f) + plan.speeds[i + 1] * f;
  };
  pos->assign(steps + 1, Vec2{});
  heading->assign(steps + 1, 0.0);
  double s = 0.0;
  double wait = plan.initial_wait + extra_wait;
  bool stop_pending = plan.stop_s >= 0.0;
  for (int t = 0; t <= steps; ++t) {
    (*pos)[t] = plan.path.at(s);
    (*heading)[t] = plan.path.heading_at(s);
    if (wait > 0.0) {
      wait -= dt;
      continue;
    }
    // Hold bands are tight so the speed discarded at a snap stays small; the
    // planned profile has already decelerated to near zero at these points.
    if (stop_pending && s >= plan.stop_s - 0.05) {
      stop_pending = false;
      wait = plan.stop_wait;
      continue;
    }
    if (s >= L - 0.05) continue;  // parked at the end of the path
    s += std::max(speed_at(s), 0.05) * dt;
  }
}

inline Obb agent_obb(const LoggedAgent& a, int t) {
  return Obb{a.pos[t], a.heading[t], a.info.length, a.info.width};
}

inline bool tracks_collide(const LoggedAgent& a, const LoggedAgent& b) {
  const int n = static_cast<int>(std::min(a.pos.size(), b.pos.size()));
  const double reach = 0.5 * std::hypot(a.info.length, a.info.width) +
                       0.5 * std::hypot(b.info.length, b.info.width);
  const double reach2 = reach * reach;
  for (int t = 0; t < n; ++t) {
    if ((a.pos[t] - b.pos[t]).squared_norm() > reach2) continue;
    if (obb_overlap(agent_obb(a, t), agent_obb(b, t))) return true;
  }
  return false;
}

// A conservative closed-loop policy may freeze the ego anywhere in its early
// log positions, and log-replay traffic cannot react. Scheduled tracks
// therefore keep clear of the ego's first kSpawnProtectS seconds at all
// times, so a parked ego degrades to under-progress instead of being struck.
inline constexpr double kSpawnProtectS = 6.0;

inline bool hits_spawn_footprint(const LoggedAgent& candidate, const LoggedAgent& ego,
                                 double dt) {
  const int n = static_cast<int>(candidate.pos.size());
  const int protect =
      std::min(static_cast<int>(ego.pos.size()) - 1,
               static_cast<int>(std::lround(kSpawnProtectS / dt)));
  const double reach = 0.5 * std::hypot(candidate.info.length, candidate.info.width) +
                       0.5 * std::hypot(ego.info.length, ego.info.width);
  const double reach2 = reach * reach;
  for (int k = 0; k <= protect; ++k) {
    const Obb frozen = agent_obb(ego, k);
    for (int t = 0; t < n; ++t) {
      if ((candidate.pos[t] - frozen.center).squared_norm() > reach2) continue;
      if (obb_overlap(agent_obb(candidate, t), frozen)) return true;
    }
  }
  return false;
}

}  // namespace worldgen

inline Segment generate_segment(const WorldConfig& config, i64 id) {
  config.validate();
  using namespace worldgen;
  Rng rng(mix_seed(config.seed, static_cast<u64>(id)));
  Segment seg;
  seg.id = id;
  seg.dt = config.dt;
  const int steps = static_cast<int>(std::lround(config.duration_s / config.dt));

  // Static map: 4 lane centerlines split into 10 pieces each, 2 crosswalks,
  // 1 road-edge marker. 43 segments, matching the encoder budget.
  for (int q = 0; q < 4; ++q) {
    for (int i = 0; i < 10; ++i) {
      const double x0 = -kRoadExtent + 30.0 * i;
      const double x1 = x0 + 30.0;
      seg.roadgraph.push_back({rotate90({x0, -kLaneOffset}, q), rotate90({x1, -kLaneOffset}, q),
                               MapType::kLane});
    }
  }
  seg.roadgraph.push_back(
      {rotate90({kCrosswalkX, -kRoadHalf - 1.0}, 0), rotate90({kCrosswalkX, kRoadHalf + 1.0}, 0),
       MapType::kCrosswalk});
  seg.roadgraph.push_back(
      {rotate90({kCrosswalkX, -kRoadHalf - 1.0}, 1), rotate90({kCrosswalkX, kRoadHalf + 1.0}, 1),
       MapType::kCrosswalk});
  seg.roadgraph.push_back({{-kRoadExtent, -kEdgeOffset}, {kRoadExtent, -kEdgeOffset}, MapType::kEdge});

  const bool ew_green = rng.uniform() < 0.5;
  for (int q = 0; q < 4; ++q) {
    const bool ew = (q % 2 == 0);
    seg.lights.push_back({rotate90({-kCrosswalkX, -kRoadHalf - 0.5}, q),
                          (ew == ew_green) ? LightState::kGreen : LightState::kRed, 1.0});
  }

  // Behavior assignment. Agent 0 is the ego vehicle and draws from vehicle
  // behaviors with a route; others follow the configured mixture.
  std::array<int, 4> vehicle_slots{};  // per-approach spawn staggering
  std::array<int, 4> ped_slots{};
  std::array<int, 4> cyclist_slots{};

  auto build_agent = [&](int index) {
    LoggedAgent agent;
    MotionPlan plan;
    Behavior b;
    if (index == 0) {
      std::vector<double> w = {config.mixture[0], config.mixture[1], config.mixture[2],
                               config.mixture[4]};
      double sum = 0;
      for (double x : w) sum += x;
      if (sum <= 0.0) {
        b = Behavior::kStraight;
      } else {
        for (double& x : w) x /= sum;
        const int pick = rng.categorical(w);
        const Behavior table[] = {Behavior::kStraight, Behavior::kLeftTurn, Behavior::kRightTurn,
                                  Behavior::kStopAndGo};
        b = table[pick];
      }
    } else {
      std::vector<double> w(config.mixture.begin(), config.mixture.end());
      b = static_cast<Behavior>(rng.categorical(w));
    }
    agent.behavior = b;
    const int approach = rng.uniform_int(4);
    const double noise = config.noise_scale;

    // Realized deceleration into a planned stop peaks near twice the
    // longitudinal limit (speed interpolation near v = 0), so limits are set
    // with at least that headroom under the configured acceleration bound.
    std::vector<Vec2> raw;
    double v_cruise = 0.0, a_lon = 1.5, a_lat = 2.0;
    if (b == Behavior::kPedCrossing) {
      agent.info = {AgentType::kPedestrian, 0.6, 0.6, 1.8};
      const int slot = ped_slots[approach]++;
      raw = canonical_ped_path(8.0 * slot, 0.8 * slot);
      v_cruise = 1.3 + 0.2 * noise * rng.uniform(-1.0, 1.0);
      a_lon = 0.7;
      a_lat = 1.0;
      plan.initial_wait = noise * rng.uniform(0.0, 3.0);
    } else if (b == Behavior::kCyclistWeave) {
      agent.info = {AgentType::kCyclist, 1.9, 0.7, 1.7};
      const int slot = cyclist_slots[approach]++;
      raw = canonical_cyclist_path(40.0 * slot, rng.uniform(0.0, 2.0 * std::numbers::pi));
      v_cruise = 5.0 + 0.8 * noise * rng.uniform(-1.0, 1.0);
      a_lon = 1.2;
      a_lat = 1.8;
    } else {
      agent.info = {index == 0 ? AgentType::kAv : AgentType::kVehicle,
                    4.8 + 0.4 * noise * rng.uniform(-1.0, 1.0),
                    2.1 + 0.1 * noise * rng.uniform(-1.0, 1.0), 1.6};
      const int slot = vehicle_slots[approach]++;
      const double lane_jitter = 0.3 * noise * rng.uniform(-1.0, 1.0);
      raw = canonical_vehicle_path(b, 40.0 * slot, lane_jitter);
      const bool turning = b == Behavior::kLeftTurn || b == Behavior::kRightTurn;
      v_cruise = (b == Behavior::kUTurn     ? 6.0 + noise * rng.uniform(-1.0, 1.0)
                  : turning                 ? 8.0 + 1.5 * noise * rng.uniform(-1.0, 1.0)
                                            : 10.0 + 2.0 * noise * rng.uniform(-1.0, 1.0));
      if (b == Behavior::kStopAndGo) {
        plan.stop_wait = 2.0 + 2.0 * noise * rng.uniform(0.0, 1.0);
      }
    }
    for (Vec2& p : raw) p = rotate90(p, approach);
    plan.path = SampledPath(raw, 0.1);
    if (b == Behavior::kStopAndGo) {
      // Halt at the stop line 10 m before the intersection center; the path
      // runs from x0 to +kRoadExtent, so that line sits kRoadExtent + 10
      // meters short of the path end.
      plan.stop_s = plan.path.length() - (kRoadExtent + 10.0);
      if (plan.stop_s < 1.0) plan.stop_s = 0.5 * plan.path.length();
    }
    std::vector<double> stop_list;
    if (plan.stop_s >= 0.0) stop_list.push_back(plan.stop_s);
    plan.speeds = plan_speeds(plan.path, v_cruise, a_lon, a_lat, stop_list);
    if (index == 0) {
      seg.av_route.clear();
      const int route_samples = 64;
      for (int i = 0; i <= route_samples; ++i) {
        seg.av_route.push_back(plan.path.at(plan.path.length() * i / route_samples));
      }
    }
    return std::pair<LoggedAgent, MotionPlan>(std::move(agent), std::move(plan));
  };

  for (int index = 0; index < config.num_agents; ++index) {
    auto [agent, plan] = build_agent(index);
    bool placed = false;
    for (int delay = 0; delay <= 12 && !placed; ++delay) {
      LoggedAgent candidate = agent;
      worldgen::integrate_motion(plan, double(delay), config.dt, steps, &candidate.pos,
                                 &candidate.heading);
      bool collides =
          index > 0 && worldgen::hits_spawn_footprint(candidate, seg.agents[0], config.dt);
      for (const LoggedAgent& other : seg.agents) {
        if (collides) break;
        if (worldgen::tracks_collide(candidate, other)) collides = true;
      }
      if (!collides) {
        seg.agents.push_back(std::move(candidate));
        placed = true;
      }
    }
    if (!placed) {
      // Shoulder fallback: park beside the spawn point, pushed outward until
      // clear of every scheduled track and of the ego spawn footprint.
      const Vec2 start = plan.path.at(0.0);
      const double h = plan.path.heading_at(0.0);
      const Vec2 right{std::sin(h), -std::cos(h)};
      for (double off = kEdgeOffset + 2.0;; off += 3.0) {
        LoggedAgent candidate = agent;
        candidate.parked = true;
        candidate.pos.assign(steps + 1, start + right * off);
        candidate.heading.assign(steps + 1, h);
        bool collides = !seg.agents.empty() &&
                        worldgen::hits_spawn_footprint(candidate, seg.agents[0], config.dt);
        for (const LoggedAgent& other : seg.agents) {
          if (collides) break;
          if (worldgen::tracks_collide(candidate, other)) collides = true;
        }
        if (!collides) {
          seg.agents.push_back(std::move(candidate));
          break;
        }
      }
    }
  }
  return seg;
}

// ---------------------------------------------------------------------------
// Sliding-window example extraction

struct WindowParams {
  double history_s = 5.0;
  double future_s = 11.0;
  double stride_s = 1.5;
  bool include_route = false;  // attach the ego route (planning fine-tune)
};

namespace detail {

// Rigid transform into the frame anchored at the ego pose (origin at its
// position, +x along its heading).
struct Frame {
  Vec2 origin;
  double heading;
  Vec2 to_local(const Vec2& p) const { return (p - origin).rotated(-heading); }
  Vec2 rotate(const Vec2& v) const { return v.rotated(-heading); }
};

}  // namespace detail

inline std::vector<Example> window_examples(const Segment& seg, const TokenVocab& vocab,
                                            int num_modeled, const WindowParams& wp = {}) {
  vocab.validate();
  if (seg.agents.empty()) throw std::invalid_argument("window_examples: empty segment");
  const double duration = seg.duration_s();
  if (duration + 1e-9 < wp.history_s + wp.future_s) {
    throw std::invalid_argument("window_examples: segment shorter than one window");
  }
  const double dt = seg.dt;
  auto index_of = [&](double t) { return static_cast<int>(std::lround(t / dt)); };
  const int token_stride = index_of(vocab.token_dt);
  const int hist_stride = index_of(kHistorySpacing);
  const int T_tokens = static_cast<int>(std::lround(wp.future_s / vocab.token_dt));

  std::vector<Example> out;
  for (double t0 = wp.history_s; t0 <= duration - wp.future_s + 1e-9; t0 += wp.stride_s) {
    const int i0 = index_of(t0);
    Example ex;
    ex.segment_id = seg.id;
    ex.t0 = t0;
    const LoggedAgent& av = seg.agents[0];
    const detail::Frame frame{av.pos[i0], av.heading[i0]};

    for (const LoggedAgent& a : seg.agents) {
      ex.context.agent_info.push_back(a.info);
      std::array<AgentSnapshot, kHistorySamples> hist{};
      for (int k = 0; k < kHistorySamples; ++k) {
        const int t = i0 - (kHistorySamples - 1 - k) * hist_stride;
        const Vec2 p = frame.to_local(a.pos[t]);
        const Vec2 v = frame.rotate(a.velocity_at(t, dt));
        hist[k] = {p.x, p.y, 0.0, wrap_angle(a.heading[t] - frame.heading), v.x, v.y, true};
      }
      ex.context.agent_history.push_back(hist);
    }
    for (const MapSegment& m : seg.roadgraph) {
      ex.context.roadgraph.push_back({frame.to_local(m.a), frame.to_local(m.b), m.type});
    }
    for (const TrafficLight& l : seg.lights) {
      ex.context.traffic_lights.push_back({frame.to_local(l.position), l.state, l.confidence});
    }
    if (wp.include_route) {
      std::vector<Vec2> rp;
      for (const Vec2& p : seg.av_route) rp.push_back(frame.to_local(p));
      const Polyline route_line(rp);
      for (int i = 0; i < kMaxRouteSegments; ++i) {
        const double s0 = route_line.length() * i / kMaxRouteSegments;
        const double s1 = route_line.length() * (i + 1) / kMaxRouteSegments;
        ex.context.route.push_back(
            {route_line.point_at(s0), route_line.point_at(s1), MapType::kLane});
      }
    }

    for (int i = 0; i < static_cast<int>(seg.agents.size()); ++i) {
      const LoggedAgent& a = seg.agents[i];
      AgentTarget tgt;
      tgt.agent = i;
      for (int k = -1; k <= T_tokens; ++k) {
        tgt.track.push_back(frame.to_local(a.pos[i0 + k * token_stride]));
      }
      tgt.tokens = encode_track(tgt.track, vocab);
      tgt.speed_mps = a.velocity_at(i0, dt).norm();
      ex.targets.push_back(std::move(tgt));
    }
    const int m = std::min<int>(num_modeled, static_cast<int>(seg.agents.size()));
    for (int i = 0; i < m; ++i) ex.context.modeled.push_back(i);
    ex.validate(vocab);
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset transforms and accounting

struct ExcludeResult {
  std::vector<Example> examples;
  int dropped = 0;
};

// Reassigns modeled slots away from the given agent type. The excluded type
// stays in the context (it is still observed); scenes without enough eligible
// agents are dropped and counted.
inline ExcludeResult exclude_agent(const std::vector<Example>& dataset, int num_modeled,
                                   AgentType excluded = AgentType::kAv) {
  ExcludeResult result;
  for (const Example& ex : dataset) {
    std::vector<int> eligible;
    for (const AgentTarget& t : ex.targets) {
      if (ex.context.agent_info[t.agent].type != excluded) eligible.push_back(t.agent);
    }
    if (static_cast<int>(eligible.size()) < num_modeled) {
      ++result.dropped;
      continue;
    }
    Example copy = ex;
    copy.context.modeled.assign(eligible.begin(), eligible.begin() + num_modeled);
    result.examples.push_back(std::move(copy));
  }
  return result;
}

// Miles driven by the modeled agents across a dataset's future windows, the
// data-volume axis for sample-efficiency comparisons.
inline double modeled_future_miles(const std::vector<Example>& dataset) {
  double meters = 0.0;
  for (const Example& ex : dataset) {
    for (int m : ex.context.modeled) {
      const AgentTarget& t = ex.target_for(m);
      meters += arc_length(std::span<const Vec2>(t.track).subspan(1));
    }
  }
  return meters / 1609.344;
}

inline std::vector<Segment> generate_world(const WorldConfig& config) {
  config.validate();
  std::vector<Segment> segments;
  segments.reserve(config.num_segments);
  for (int id = 0; id < config.num_segments; ++id) {
    segments.push_back(generate_segment(config, id));
  }
  return segments;
}

// ---------------------------------------------------------------------------
// Segment serialization (one JSON object per segment; fixed precision)

inline nlohmann::json to_json(const Segment& seg) {
  nlohmann::json agents = nlohmann::json::array();
  for (const LoggedAgent& a : seg.agents) {
    nlohmann::json pos = nlohmann::json::array();
    for (const Vec2& p : a.pos) pos.push_back(detail::vec2_json(p));
    nlohmann::json heading = nlohmann::json::array();
    for (double h : a.heading) heading.push_back(round6(h));
    agents.push_back({{"type", static_cast<int>(a.info.type)},
                      {"size", {round6(a.info.length), round6(a.info.width), round6(a.info.height)}},
                      {"behavior", static_cast<int>(a.behavior)},
                      {"parked", a.parked},
                      {"pos", pos},
                      {"heading", heading}});
  }
  nlohmann::json map = nlohmann::json::array();
  for (const MapSegment& s : seg.roadgraph) {
    map.push_back({detail::vec2_json(s.a), detail::vec2_json(s.b), static_cast<int>(s.type)});
  }
  nlohmann::json lights = nlohmann::json::array();
  for (const TrafficLight& l : seg.lights) {
    lights.push_back(
        {detail::vec2_json(l.position), static_cast<int>(l.state), round6(l.confidence)});
  }
  nlohmann::json route = nlohmann::json::array();
  for (const Vec2& p : seg.av_route) route.push_back(detail::vec2_json(p));
  return {{"id", seg.id},     {"dt", seg.dt},       {"agents", agents},
          {"map", map},       {"lights", lights},   {"route", route}};
}

inline Segment segment_from_json(const nlohmann::json& j) {
  Segment seg;
  seg.id = j.at("id").get<i64>();
  seg.dt = j.at("dt").get<double>();
  for (const auto& a : j.at("agents")) {
    LoggedAgent agent;
    agent.info.type = agent_type_from_int(a.at("type").get<int>());
    agent.info.length = a.at("size").at(0).get<double>();
    agent.info.width = a.at("size").at(1).get<double>();
    agent.info.height = a.at("size").at(2).get<double>();
    agent.behavior = static_cast<Behavior>(a.at("behavior").get<int>());
    agent.parked = a.at("parked").get<bool>();
    for (const auto& p : a.at("pos")) agent.pos.push_back(detail::vec2_from(p));
    for (const auto& h : a.at("heading")) agent.heading.push_back(h.get<double>());
    if (agent.pos.size() != agent.heading.size()) {
      throw std::invalid_argument("segment json: pos/heading length mismatch");
    }
    seg.agents.push_back(std::move(agent));
  }
  for (const auto& m : j.at("map")) {
    seg.roadgraph.push_back({detail::vec2_from(m.at(0)), detail::vec2_from(m.at(1)),
                             static_cast<MapType>(m.at(2).get<int>())});
  }
  for (const auto& l : j.at("lights")) {
    seg.lights.push_back({detail::vec2_from(l.at(0)), static_cast<LightState>(l.at(1).get<int>()),
                          l.at(2).get<double>()});
  }
  for (const auto& p : j.at("route")) seg.av_route.push_back(detail::vec2_from(p));
  return seg;
}

inline void write_segments_jsonl(const std::filesystem::path& path,
                                 const std::vector<Segment>& segments) {
  std::string body;
  for (const Segment& seg : segments) {
    body += to_json(seg).dump();
    body += '\n';
  }
  write_text_file(path, body);
}

inline std::vector<Segment> read_segments_jsonl(const std::filesystem::path& path) {
  std::vector<Segment> out;
  for_each_jsonl(path, [&out](const nlohmann::json& j) { out.push_back(segment_from_json(j)); });
  return out;
}

}  // namespace msl

#endif  // MSL_SYNTH_HPP_
