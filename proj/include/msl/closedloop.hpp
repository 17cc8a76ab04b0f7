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

// Log-playback closed-loop simulator. The ego vehicle replans every 100 ms:
// a policy proposes sampled plans, a progress-biased medoid rule picks one,
// and only the first 100 ms of it is executed while every other agent replays
// its log. Scenarios are scored ok / over-progress / under-progress /
// collision against the logged reference drive, and the progress bias alpha
// is calibrated by bisection until over- and under-progress failures balance.

#ifndef MSL_CLOSEDLOOP_HPP_
#define MSL_CLOSEDLOOP_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "msl/geometry.hpp"
#include "msl/io.hpp"
#include "msl/model.hpp"
#include "msl/random.hpp"
#include "msl/synth.hpp"

namespace msl {

enum class Outcome { kOk = 0, kOverProgress = 1, kUnderProgress = 2, kCollision = 3 };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kOk: return "ok";
    case Outcome::kOverProgress: return "over_progress";
    case Outcome::kUnderProgress: return "under_progress";
    case Outcome::kCollision: return "collision";
  }
  return "?";
}

// A closed-loop evaluation case: a logged world, the ego route, and the
// 30 s window to drive. The log before start_s seeds the planner history.
struct Scenario {
  i64 id = 0;
  Segment segment;  // agents[0] is the logged ego reference drive
  Polyline route;
  double start_s = 5.0;
  double duration_s = 30.0;

  void validate() const {
    if (segment.agents.empty()) throw std::invalid_argument("Scenario: no agents");
    if (route.empty() || !(route.length() > 0.0)) {
      throw std::invalid_argument("Scenario: route must have positive length");
    }
    if (!(start_s >= kHistorySpacing * (kHistorySamples - 1))) {
      throw std::invalid_argument("Scenario: start must cover the history window");
    }
    if (segment.duration_s() + 1e-9 < start_s + duration_s) {
      throw std::invalid_argument("Scenario: log shorter than start + duration");
    }
  }
};

// Per-step planning inputs handed to a policy. av_pos/av_heading hold the
// simulated ego states at 10 Hz from segment time zero (log-seeded before
// start_s), newest last; everything else comes from the scenario log.
struct PlanRequest {
  const Scenario* scenario = nullptr;
  double t = 0.0;  // absolute segment time of the newest ego state
  std::vector<Vec2> av_pos;
  std::vector<double> av_heading;

  int step() const { return static_cast<int>(av_pos.size()) - 1; }
};

// A policy proposes candidate plans in the world frame at the token rate:
// point k sits at time t + (k - 1) * token_dt, so index 1 is the current
// position and indices 2+ are the planned future.
class PlanPolicy {
 public:
  virtual ~PlanPolicy() = default;
  virtual std::vector<std::vector<Vec2>> plan(const PlanRequest& req, int num_rollouts,
                                              u64 seed) = 0;
};

inline constexpr int kPlanSeedPoints = 2;

// Arc-length coordinate along the route of the point nearest the trajectory
// endpoint.
inline double progress(std::span<const Vec2> track, const Polyline& route) {
  if (track.empty()) throw std::invalid_argument("progress: empty trajectory");
  return route.project(track.back());
}

inline double average_displacement(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("average_displacement: length mismatch");
  }
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / double(a.size());
}

// Progress-biased medoid rule over candidate futures:
//   argmin_i mean_j ADE(y_i, y_j) - alpha * (Progress(y_i) - mean_j Progress(y_j)).
// Ties break to the lowest index.
inline int select_plan(const std::vector<std::vector<Vec2>>& futures, const Polyline& route,
                       double alpha) {
  if (futures.empty()) throw std::invalid_argument("select_plan: no candidates");
  const int r = static_cast<int>(futures.size());
  std::vector<double> prog(r);
  for (int i = 0; i < r; ++i) prog[i] = progress(futures[i], route);
  const double mean_prog = std::accumulate(prog.begin(), prog.end(), 0.0) / r;
  int best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (int i = 0; i < r; ++i) {
    double mean_ade = 0.0;
    for (int j = 0; j < r; ++j) mean_ade += average_displacement(futures[i], futures[j]);
    mean_ade /= r;
    const double score = mean_ade - alpha * (prog[i] - mean_prog);
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

struct SimResult {
  Outcome outcome = Outcome::kOk;
  double policy_progress = 0.0;
  double log_progress = 0.0;
  int collision_step = -1;       // absolute step index, -1 if none
  std::string diagnostic;        // set when the policy aborted the scenario
  std::vector<Vec2> executed;    // ego positions over [start_s, start_s + duration_s]
};

// Progress deviations beyond max(5 m, 15% of the logged progress) count as
// failures; the constants stand in for the reference's unspecified
// "significantly more/less" thresholds.
inline constexpr double kProgressSlackMeters = 5.0;
inline constexpr double kProgressSlackFraction = 0.15;

inline Outcome classify_progress(double policy_prog, double log_prog) {
  const double slack = std::max(kProgressSlackMeters, kProgressSlackFraction * log_prog);
  if (policy_prog - log_prog > slack) return Outcome::kOverProgress;
  if (log_prog - policy_prog > slack) return Outcome::kUnderProgress;
  return Outcome::kOk;
}

// Steps the scenario at 10 Hz: sample plans, select one, execute its first
// 100 ms (cubic interpolation of the token-rate plan), replay all other
// agents from the log, and flag the first bounding-box overlap. A policy
// emitting non-finite positions freezes the ego with a diagnostic and the
// scenario is then classified by the usual progress rules.
inline SimResult simulate(PlanPolicy& policy, const Scenario& sc, int num_rollouts, double alpha,
                          u64 seed) {
  sc.validate();
  if (num_rollouts < 1) throw std::invalid_argument("simulate: num_rollouts >= 1");
  const Segment& seg = sc.segment;
  const double dt = seg.dt;
  const int start = static_cast<int>(std::lround(sc.start_s / dt));
  const int end = start + static_cast<int>(std::lround(sc.duration_s / dt));
  const LoggedAgent& av = seg.agents[0];

  PlanRequest req;
  req.scenario = &sc;
  req.av_pos.assign(av.pos.begin(), av.pos.begin() + start + 1);
  req.av_heading.assign(av.heading.begin(), av.heading.begin() + start + 1);

  SimResult res;
  for (int k = start; k < end; ++k) {
    req.t = k * dt;
    auto plans = policy.plan(req, num_rollouts, mix_seed(seed, u64(k), 0xC1));
    if (static_cast<int>(plans.size()) != num_rollouts) {
      throw std::invalid_argument("simulate: policy returned wrong rollout count");
    }
    bool finite = true;
    for (const auto& p : plans) {
      if (p.size() < kPlanSeedPoints + 2 || p.size() != plans[0].size()) {
        throw std::invalid_argument("simulate: plan too short or ragged");
      }
      for (const Vec2& q : p) finite = finite && std::isfinite(q.x) && std::isfinite(q.y);
    }
    if (!finite) {
      res.diagnostic = "non-finite plan at t=" + std::to_string(req.t) + "s; ego frozen";
      const Vec2 hold = req.av_pos.back();
      const double hold_heading = req.av_heading.back();
      while (static_cast<int>(req.av_pos.size()) <= end) {
        req.av_pos.push_back(hold);
        req.av_heading.push_back(hold_heading);
      }
      break;
    }

    std::vector<std::vector<Vec2>> futures(plans.size());
    for (size_t i = 0; i < plans.size(); ++i) {
      futures[i].assign(plans[i].begin() + kPlanSeedPoints, plans[i].end());
    }
    const int chosen = select_plan(futures, sc.route, alpha);
    // Plan point 0 sits at t - token_dt; the next sim step is 0.1 s past t.
    const TokenVocab grid;  // token_dt only
    const Vec2 action = catmull_rom(plans[chosen], grid.token_dt, grid.token_dt + dt);

    const Vec2 motion = action - req.av_pos.back();
    const double heading =
        motion.norm() > 1e-6 ? std::atan2(motion.y, motion.x) : req.av_heading.back();
    req.av_pos.push_back(action);
    req.av_heading.push_back(heading);

    const Obb ego{action, heading, av.info.length, av.info.width};
    for (size_t i = 1; i < seg.agents.size(); ++i) {
      if (obb_overlap(ego, worldgen::agent_obb(seg.agents[i], k + 1))) {
        res.outcome = Outcome::kCollision;
        res.collision_step = k + 1;
        break;
      }
    }
    if (res.outcome == Outcome::kCollision) break;
  }

  const int have = std::min<int>(static_cast<int>(req.av_pos.size()) - 1, end);
  res.executed.assign(req.av_pos.begin() + start, req.av_pos.begin() + have + 1);
  res.policy_progress = progress(res.executed, sc.route);
  res.log_progress =
      progress(std::span<const Vec2>(av.pos).subspan(size_t(start), size_t(end - start) + 1),
               sc.route);
  if (res.outcome != Outcome::kCollision) {
    res.outcome = classify_progress(res.policy_progress, res.log_progress);
    // An aborted scenario always counts as failed; a frozen ego that was
    // still within the progress band lands in the under-progress bucket.
    if (!res.diagnostic.empty() && res.outcome == Outcome::kOk) {
      res.outcome = Outcome::kUnderProgress;
    }
  }
  return res;
}

struct FailureReport {
  int ok = 0, over = 0, under = 0, collisions = 0;
  std::vector<SimResult> results;

  int eta() const { return over + under + collisions; }
  int total() const { return ok + eta(); }

  // Over/under failure balance; 1.0 when no progress failures at all.
  double ratio() const {
    if (under == 0) {
      return over == 0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
    return double(over) / double(under);
  }

  void add(const SimResult& r) {
    results.push_back(r);
    switch (r.outcome) {
      case Outcome::kOk: ++ok; break;
      case Outcome::kOverProgress: ++over; break;
      case Outcome::kUnderProgress: ++under; break;
      case Outcome::kCollision: ++collisions; break;
    }
  }
};

inline FailureReport run_scenarios(PlanPolicy& policy, const std::vector<Scenario>& scenarios,
                                   int num_rollouts, double alpha, u64 seed) {
  FailureReport report;
  for (const Scenario& sc : scenarios) {
    report.add(simulate(policy, sc, num_rollouts, alpha, mix_seed(seed, u64(sc.id), 0x5C)));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Progress-bias calibration

struct CalibrationOptions {
  double alpha0 = 0.5;
  double alpha_max = 8.0;
  int max_iters = 12;
  double ratio_lo = 0.8;
  double ratio_hi = 1.25;
};

struct CalibrationResult {
  double alpha = 0.0;
  double ratio = 1.0;
  bool calibrated = false;
  int evals = 0;
};

// Bisects alpha until the over/under failure ratio lands in the target band.
// The ratio is empirically nondecreasing in alpha (more progress bias, more
// over-progress); an unreachable band returns the nearest boundary alpha
// flagged uncalibrated.
inline CalibrationResult calibrate_alpha(PlanPolicy& policy,
                                         const std::vector<Scenario>& scenarios, int num_rollouts,
                                         u64 seed, const CalibrationOptions& opt = {}) {
  if (scenarios.empty()) throw std::invalid_argument("calibrate_alpha: no scenarios");
  CalibrationResult out;
  auto ratio_at = [&](double alpha) {
    ++out.evals;
    return run_scenarios(policy, scenarios, num_rollouts, alpha, seed).ratio();
  };
  auto in_band = [&](double r) { return r >= opt.ratio_lo && r <= opt.ratio_hi; };

  double r0 = ratio_at(opt.alpha0);
  if (in_band(r0)) {
    out.alpha = opt.alpha0;
    out.ratio = r0;
    out.calibrated = true;
    return out;
  }

  double lo, hi, r_lo, r_hi;
  if (r0 < opt.ratio_lo) {  // too timid: raise alpha
    lo = opt.alpha0;
    r_lo = r0;
    hi = opt.alpha_max;
    r_hi = ratio_at(hi);
    if (in_band(r_hi)) {
      out.alpha = hi;
      out.ratio = r_hi;
      out.calibrated = true;
      return out;
    }
    if (r_hi < opt.ratio_lo) {  // band unreachable from below
      out.alpha = hi;
      out.ratio = r_hi;
      return out;
    }
  } else {  // too assertive: lower alpha
    hi = opt.alpha0;
    r_hi = r0;
    lo = 0.0;
    r_lo = ratio_at(lo);
    if (in_band(r_lo)) {
      out.alpha = lo;
      out.ratio = r_lo;
      out.calibrated = true;
      return out;
    }
    if (r_lo > opt.ratio_hi) {  // band unreachable from above
      out.alpha = lo;
      out.ratio = r_lo;
      return out;
    }
  }

  double best_alpha = lo, best_ratio = r_lo;
  auto closer = [](double r, double best) {
    auto dist = [](double x) {
      if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
      return std::abs(std::log(std::max(x, 1e-9)));
    };
    return dist(r) < dist(best);
  };
  for (int it = 0; it < opt.max_iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = ratio_at(mid);
    if (closer(r, best_ratio)) {
      best_ratio = r;
      best_alpha = mid;
    }
    if (in_band(r)) {
      out.alpha = mid;
      out.ratio = r;
      out.calibrated = true;
      return out;
    }
    if (r < opt.ratio_lo) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.alpha = best_alpha;
  out.ratio = best_ratio;
  return out;
}

// ---------------------------------------------------------------------------
// Reference policies

// Replays the logged ego drive (perfect imitation).
class OraclePolicy : public PlanPolicy {
 public:
  std::vector<std::vector<Vec2>> plan(const PlanRequest& req, int num_rollouts, u64) override {
    const Segment& seg = req.scenario->segment;
    const LoggedAgent& av = seg.agents[0];
    const TokenVocab grid;
    const int stride = static_cast<int>(std::lround(grid.token_dt / seg.dt));
    const int t_tokens = plan_tokens();
    std::vector<Vec2> p;
    for (int j = -1; j <= t_tokens; ++j) {
      const int idx = std::clamp(req.step() + j * stride, 0, seg.steps());
      p.push_back(av.pos[idx]);
    }
    return std::vector<std::vector<Vec2>>(size_t(num_rollouts), p);
  }

  static int plan_tokens() {
    const TokenVocab grid;
    const WindowParams wp;
    return static_cast<int>(std::lround(wp.future_s / grid.token_dt));
  }
};

// Never moves; the degenerate under-progress baseline.
class StationaryPolicy : public PlanPolicy {
 public:
  std::vector<std::vector<Vec2>> plan(const PlanRequest& req, int num_rollouts, u64) override {
    std::vector<Vec2> p(size_t(OraclePolicy::plan_tokens()) + 2, req.av_pos.back());
    return std::vector<std::vector<Vec2>>(size_t(num_rollouts), p);
  }
};

// Wraps a single-agent planning model: builds the ego-frame scene from the
// simulated ego history plus the logged world, samples rollouts, and maps
// the decoded plans back to the world frame.
class PlannerPolicy : public PlanPolicy {
 public:
  PlannerPolicy(JointModel* model, double temperature = 1.0)
      : model_(model), temperature_(temperature) {
    if (model_->config().num_modeled != 1) {
      throw std::invalid_argument("PlannerPolicy: needs a single-agent planner");
    }
  }

  std::vector<std::vector<Vec2>> plan(const PlanRequest& req, int num_rollouts,
                                      u64 seed) override {
    const Segment& seg = req.scenario->segment;
    const double dt = seg.dt;
    const TokenVocab& vocab = model_->config().vocab;
    const int i0 = req.step();
    const int hist_stride = static_cast<int>(std::lround(kHistorySpacing / dt));
    const int token_stride = static_cast<int>(std::lround(vocab.token_dt / dt));
    const detail::Frame frame{req.av_pos[size_t(i0)], req.av_heading[size_t(i0)]};

    Example ex;
    ex.segment_id = seg.id;
    ex.t0 = req.t;
    SceneContext& ctx = ex.context;
    for (int i = 0; i < static_cast<int>(seg.agents.size()); ++i) {
      const LoggedAgent& a = seg.agents[i];
      ctx.agent_info.push_back(a.info);
      std::array<AgentSnapshot, kHistorySamples> hist{};
      for (int k = 0; k < kHistorySamples; ++k) {
        const int t = i0 - (kHistorySamples - 1 - k) * hist_stride;
        Vec2 p, v;
        double heading;
        if (i == 0) {
          p = req.av_pos[size_t(t)];
          heading = req.av_heading[size_t(t)];
          const int lo = std::max(0, t - 1);
          const int hi = std::min(i0, t + 1);
          v = hi > lo ? (req.av_pos[size_t(hi)] - req.av_pos[size_t(lo)]) * (1.0 / ((hi - lo) * dt))
                      : Vec2{0.0, 0.0};
        } else {
          p = a.pos[size_t(t)];
          heading = a.heading[size_t(t)];
          v = a.velocity_at(t, dt);
        }
        const Vec2 lp = frame.to_local(p);
        const Vec2 lv = frame.rotate(v);
        hist[k] = {lp.x, lp.y, 0.0, wrap_angle(heading - frame.heading), lv.x, lv.y, true};
      }
      ctx.agent_history.push_back(hist);
    }
    for (const MapSegment& m : seg.roadgraph) {
      ctx.roadgraph.push_back({frame.to_local(m.a), frame.to_local(m.b), m.type});
    }
    for (const TrafficLight& l : seg.lights) {
      ctx.traffic_lights.push_back({frame.to_local(l.position), l.state, l.confidence});
    }
    if (model_->config().with_route) {
      std::vector<Vec2> rp;
      for (const Vec2& p : req.scenario->route.points()) rp.push_back(frame.to_local(p));
      const Polyline route_line(rp);
      for (int i = 0; i < kMaxRouteSegments; ++i) {
        const double s0 = route_line.length() * i / kMaxRouteSegments;
        const double s1 = route_line.length() * (i + 1) / kMaxRouteSegments;
        ctx.route.push_back({route_line.point_at(s0), route_line.point_at(s1), MapType::kLane});
      }
    }
    ctx.modeled = {0};

    const int t_tokens = model_->config().t_tokens;
    AgentTarget tgt;
    tgt.agent = 0;
    tgt.track.push_back(frame.to_local(req.av_pos[size_t(i0 - token_stride)]));
    tgt.track.push_back(frame.to_local(req.av_pos[size_t(i0)]));
    tgt.track.resize(size_t(t_tokens) + 2, tgt.track.back());
    tgt.tokens.assign(size_t(t_tokens), vocab.center_token());
    tgt.speed_mps = 0.0;
    ex.targets.push_back(std::move(tgt));

    auto rolls = model_->sample_rollouts(ex, num_rollouts, temperature_, seed);
    std::vector<std::vector<Vec2>> plans;
    plans.reserve(rolls.size());
    for (const JointRollout& r : rolls) {
      std::vector<Vec2> world;
      world.reserve(r.decoded[0].size());
      for (const Vec2& p : r.decoded[0]) world.push_back(frame.origin + p.rotated(frame.heading));
      plans.push_back(std::move(world));
    }
    return plans;
  }

 private:
  JointModel* model_;
  double temperature_;
};

// ---------------------------------------------------------------------------
// Scenario generation and reporting

// Builds scenarios from freshly generated log segments; the world's duration
// is stretched to cover history seeding plus the full drive.
inline std::vector<Scenario> make_scenarios(WorldConfig config, int count, double duration_s = 30.0,
                                            double start_s = 5.0) {
  config.duration_s = std::max(config.duration_s, start_s + duration_s);
  config.validate();
  std::vector<Scenario> out;
  for (int i = 0; i < count; ++i) {
    Scenario sc;
    sc.id = i;
    sc.segment = generate_segment(config, i);
    sc.route = Polyline(sc.segment.av_route);
    sc.start_s = start_s;
    sc.duration_s = duration_s;
    sc.validate();
    out.push_back(std::move(sc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compute-vs-failures sweep rows

struct EtaJob {
  std::string model_id;
  u64 compute = 0;  // pretraining FLOPs of the underlying model
  PlanPolicy* policy = nullptr;
  double alpha = 0.0;
};

struct EtaRow {
  std::string model_id;
  u64 compute = 0;
  double alpha = 0.0;
  int eta = 0;
  double ratio = 1.0;
};

inline std::vector<EtaRow> eta_sweep(const std::vector<EtaJob>& jobs,
                                     const std::vector<Scenario>& scenarios, int num_rollouts,
                                     u64 seed) {
  std::vector<EtaRow> rows;
  for (const EtaJob& job : jobs) {
    if (job.policy == nullptr) throw std::invalid_argument("eta_sweep: null policy");
    FailureReport rep = run_scenarios(*job.policy, scenarios, num_rollouts, job.alpha, seed);
    rows.push_back({job.model_id, job.compute, job.alpha, rep.eta(), rep.ratio()});
  }
  return rows;
}

inline void write_eta_csv(const std::filesystem::path& path, const std::vector<EtaRow>& rows) {
  std::string body = "model,compute,alpha,eta,ratio\n";
  for (const EtaRow& r : rows) {
    body += r.model_id + "," + std::to_string(r.compute) + "," + format_number(r.alpha) + "," +
            std::to_string(r.eta) + "," + format_number(r.ratio) + "\n";
  }
  write_text_file(path, body);
}

inline void write_outcomes_jsonl(const std::filesystem::path& path, const std::string& model_id,
                                 const std::vector<Scenario>& scenarios,
                                 const FailureReport& report) {
  if (scenarios.size() != report.results.size()) {
    throw std::invalid_argument("write_outcomes_jsonl: size mismatch");
  }
  std::string body;
  for (size_t i = 0; i < scenarios.size(); ++i) {
    const SimResult& r = report.results[i];
    Json j = {{"model", model_id},
              {"scenario", scenarios[i].id},
              {"outcome", outcome_name(r.outcome)},
              {"policy_progress", round6(r.policy_progress)},
              {"log_progress", round6(r.log_progress)},
              {"collision_step", r.collision_step}};
    if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
    body += j.dump() + "\n";
  }
  write_text_file(path, body);
}

}  // namespace msl

#endif  // MSL_CLOSEDLOOP_HPP_
