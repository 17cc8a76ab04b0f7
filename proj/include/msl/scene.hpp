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

// Scene representation shared by the world generator, the forecasting model,
// and the closed-loop driver. A scene holds agent history, a polyline
// roadgraph, traffic lights, and an optional planning route, all expressed in
// one global frame anchored at the ego vehicle's pose at prediction time.

#ifndef MSL_SCENE_HPP_
#define MSL_SCENE_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msl/codec.hpp"
#include "msl/common.hpp"
#include "msl/geometry.hpp"
#include "msl/io.hpp"

namespace msl {

// Token budget of the scene encoder. One token per agent, map segment, and
// traffic light, plus one learned null token that is always valid; routes add
// a block of extra tokens for the planning fine-tune.
inline constexpr int kMaxAgents = 16;
inline constexpr int kMaxMapSegments = 43;
inline constexpr int kMaxLights = 4;
inline constexpr int kMaxRouteSegments = 8;
inline constexpr int kSceneTokens = 1 + kMaxAgents + kMaxMapSegments + kMaxLights;  // 64
inline constexpr int kSceneTokensWithRoute = kSceneTokens + kMaxRouteSegments;      // 72

// Agent history is sampled at 1 Hz over the 5 s window ending at prediction
// time, newest sample last.
inline constexpr int kHistorySamples = 6;
inline constexpr double kHistorySpacing = 1.0;

// Raw feature widths per token before the learned projection to model width.
inline constexpr int kAgentFeatureDim = kHistorySamples * 7 + 3 + kNumAgentTypes;  // 49
inline constexpr int kMapFeatureDim = 9;
inline constexpr int kLightFeatureDim = 7;

enum class MapType { kLane = 0, kEdge = 1, kCrosswalk = 2 };
inline constexpr int kNumMapTypes = 3;

enum class LightState { kUnknown = 0, kRed = 1, kYellow = 2, kGreen = 3 };
inline constexpr int kNumLightStates = 4;

struct AgentSnapshot {
  double x = 0.0, y = 0.0, z = 0.0;
  double heading = 0.0;
  double vx = 0.0, vy = 0.0;
  bool valid = false;
};

struct AgentInfo {
  AgentType type = AgentType::kVehicle;
  double length = 4.8, width = 2.1, height = 1.6;
};

struct MapSegment {
  Vec2 a, b;
  MapType type = MapType::kLane;
};

struct TrafficLight {
  Vec2 position;
  LightState state = LightState::kUnknown;
  double confidence = 1.0;
};

struct SceneContext {
  std::vector<AgentInfo> agent_info;                                   // [S_a]
  std::vector<std::array<AgentSnapshot, kHistorySamples>> agent_history;  // [S_a]
  std::vector<MapSegment> roadgraph;                                   // [S_r]
  std::vector<TrafficLight> traffic_lights;                            // [S_tls]
  std::vector<MapSegment> route;                                       // planner only
  std::vector<int> modeled;                                            // M indices

  int num_agents() const { return static_cast<int>(agent_info.size()); }

  void validate() const {
    if (agent_info.size() != agent_history.size()) {
      throw std::invalid_argument("SceneContext: agent_info/history size mismatch");
    }
    if (num_agents() > kMaxAgents) throw std::invalid_argument("SceneContext: too many agents");
    if (roadgraph.size() > kMaxMapSegments) {
      throw std::invalid_argument("SceneContext: too many map segments");
    }
    if (traffic_lights.size() > kMaxLights) {
      throw std::invalid_argument("SceneContext: too many traffic lights");
    }
    if (route.size() > kMaxRouteSegments) {
      throw std::invalid_argument("SceneContext: too many route segments");
    }
    for (int m : modeled) {
      if (m < 0 || m >= num_agents()) throw std::invalid_argument("SceneContext: modeled index");
    }
    for (const auto& hist : agent_history) {
      for (const auto& s : hist) {
        if (s.valid && !(std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.heading) &&
                         std::isfinite(s.vx) && std::isfinite(s.vy))) {
          throw std::invalid_argument("SceneContext: non-finite valid snapshot");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Raw per-token features. The model applies learned per-modality projections
// on top of these; tests use them to probe permutation and masking behavior.

inline std::array<double, kAgentFeatureDim> agent_features(const SceneContext& ctx, int i) {
  std::array<double, kAgentFeatureDim> f{};
  int k = 0;
  for (const AgentSnapshot& s : ctx.agent_history[i]) {
    f[k++] = s.valid ? s.x : 0.0;
    f[k++] = s.valid ? s.y : 0.0;
    f[k++] = s.valid ? std::cos(s.heading) : 0.0;
    f[k++] = s.valid ? std::sin(s.heading) : 0.0;
    f[k++] = s.valid ? s.vx : 0.0;
    f[k++] = s.valid ? s.vy : 0.0;
    f[k++] = s.valid ? 1.0 : 0.0;
  }
  const AgentInfo& info = ctx.agent_info[i];
  f[k++] = info.length;
  f[k++] = info.width;
  f[k++] = info.height;
  f[k + static_cast<int>(info.type)] = 1.0;
  return f;
}

inline std::array<double, kMapFeatureDim> map_features(const MapSegment& seg) {
  std::array<double, kMapFeatureDim> f{};
  const Vec2 d = seg.b - seg.a;
  const double n = d.norm();
  f[0] = seg.a.x;
  f[1] = seg.a.y;
  f[2] = seg.b.x;
  f[3] = seg.b.y;
  f[4] = n > 0.0 ? d.x / n : 0.0;
  f[5] = n > 0.0 ? d.y / n : 0.0;
  f[6 + static_cast<int>(seg.type)] = 1.0;
  return f;
}

inline std::array<double, kLightFeatureDim> light_features(const TrafficLight& l) {
  std::array<double, kLightFeatureDim> f{};
  f[0] = l.position.x;
  f[1] = l.position.y;
  f[2 + static_cast<int>(l.state)] = 1.0;
  f[6] = l.confidence;
  return f;
}

// A modeled agent is usable only when observed through its entire history.
inline bool agent_fully_observed(const SceneContext& ctx, int i) {
  for (const AgentSnapshot& s : ctx.agent_history[i]) {
    if (!s.valid) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Training/eval examples

// Future motion of one agent at the token rate. track has T_tokens + 2
// points: the two Verlet seeds (one token step before prediction time, then
// prediction time itself) followed by the future samples.
struct AgentTarget {
  int agent = -1;
  std::vector<Vec2> track;
  std::vector<int> tokens;
  double speed_mps = 0.0;
};

struct Example {
  i64 segment_id = 0;
  double t0 = 0.0;  // prediction time within the source segment, seconds
  SceneContext context;
  std::vector<AgentTarget> targets;  // one per fully observed agent

  const AgentTarget& target_for(int agent) const {
    for (const AgentTarget& t : targets) {
      if (t.agent == agent) return t;
    }
    throw std::invalid_argument("Example: no target for agent " + std::to_string(agent));
  }

  void validate(const TokenVocab& vocab) const {
    context.validate();
    for (int m : context.modeled) target_for(m);
    for (const AgentTarget& t : targets) {
      if (t.track.size() != t.tokens.size() + 2) {
        throw std::invalid_argument("Example: target track/token length mismatch");
      }
      for (int tok : t.tokens) {
        if (tok < 0 || tok >= vocab.vocab_size()) {
          throw std::invalid_argument("Example: token out of range");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// JSON serialization (fixed precision for cross-platform stability)

namespace detail {

inline nlohmann::json vec2_json(const Vec2& v) {
  return nlohmann::json::array({round6(v.x), round6(v.y)});
}

inline Vec2 vec2_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace detail

inline nlohmann::json to_json(const SceneContext& ctx) {
  nlohmann::json agents = nlohmann::json::array();
  for (int i = 0; i < ctx.num_agents(); ++i) {
    nlohmann::json hist = nlohmann::json::array();
    for (const AgentSnapshot& s : ctx.agent_history[i]) {
      hist.push_back({round6(s.x), round6(s.y), round6(s.z), round6(s.heading), round6(s.vx),
                      round6(s.vy), s.valid ? 1 : 0});
    }
    const AgentInfo& info = ctx.agent_info[i];
    agents.push_back({{"type", static_cast<int>(info.type)},
                      {"size", {round6(info.length), round6(info.width), round6(info.height)}},
                      {"history", hist}});
  }
  nlohmann::json map = nlohmann::json::array();
  for (const MapSegment& s : ctx.roadgraph) {
    map.push_back({detail::vec2_json(s.a), detail::vec2_json(s.b), static_cast<int>(s.type)});
  }
  nlohmann::json lights = nlohmann::json::array();
  for (const TrafficLight& l : ctx.traffic_lights) {
    lights.push_back(
        {detail::vec2_json(l.position), static_cast<int>(l.state), round6(l.confidence)});
  }
  nlohmann::json route = nlohmann::json::array();
  for (const MapSegment& s : ctx.route) {
    route.push_back({detail::vec2_json(s.a), detail::vec2_json(s.b), static_cast<int>(s.type)});
  }
  return {{"agents", agents}, {"map", map},     {"lights", lights},
          {"route", route},   {"modeled", ctx.modeled}};
}

inline SceneContext scene_from_json(const nlohmann::json& j) {
  SceneContext ctx;
  for (const auto& a : j.at("agents")) {
    AgentInfo info;
    info.type = agent_type_from_int(a.at("type").get<int>());
    info.length = a.at("size").at(0).get<double>();
    info.width = a.at("size").at(1).get<double>();
    info.height = a.at("size").at(2).get<double>();
    std::array<AgentSnapshot, kHistorySamples> hist{};
    const auto& jh = a.at("history");
    if (jh.size() != kHistorySamples) throw std::invalid_argument("scene json: history length");
    for (int k = 0; k < kHistorySamples; ++k) {
      const auto& s = jh.at(k);
      hist[k] = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>(),
                 s.at(3).get<double>(), s.at(4).get<double>(), s.at(5).get<double>(),
                 s.at(6).get<int>() != 0};
    }
    ctx.agent_info.push_back(info);
    ctx.agent_history.push_back(hist);
  }
  for (const auto& m : j.at("map")) {
    ctx.roadgraph.push_back({detail::vec2_from(m.at(0)), detail::vec2_from(m.at(1)),
                             static_cast<MapType>(m.at(2).get<int>())});
  }
  for (const auto& l : j.at("lights")) {
    ctx.traffic_lights.push_back({detail::vec2_from(l.at(0)),
                                  static_cast<LightState>(l.at(1).get<int>()),
                                  l.at(2).get<double>()});
  }
  for (const auto& r : j.at("route")) {
    ctx.route.push_back({detail::vec2_from(r.at(0)), detail::vec2_from(r.at(1)),
                         static_cast<MapType>(r.at(2).get<int>())});
  }
  ctx.modeled = j.at("modeled").get<std::vector<int>>();
  ctx.validate();
  return ctx;
}

inline nlohmann::json to_json(const Example& ex) {
  nlohmann::json targets = nlohmann::json::array();
  for (const AgentTarget& t : ex.targets) {
    nlohmann::json track = nlohmann::json::array();
    for (const Vec2& p : t.track) track.push_back(detail::vec2_json(p));
    targets.push_back({{"agent", t.agent},
                       {"track", track},
                       {"tokens", t.tokens},
                       {"speed", round6(t.speed_mps)}});
  }
  return {{"segment_id", ex.segment_id},
          {"t0", round6(ex.t0)},
          {"context", to_json(ex.context)},
          {"targets", targets}};
}

inline Example example_from_json(const nlohmann::json& j) {
  Example ex;
  ex.segment_id = j.at("segment_id").get<i64>();
  ex.t0 = j.at("t0").get<double>();
  ex.context = scene_from_json(j.at("context"));
  for (const auto& t : j.at("targets")) {
    AgentTarget tgt;
    tgt.agent = t.at("agent").get<int>();
    for (const auto& p : t.at("track")) tgt.track.push_back(detail::vec2_from(p));
    tgt.tokens = t.at("tokens").get<std::vector<int>>();
    tgt.speed_mps = t.at("speed").get<double>();
    ex.targets.push_back(std::move(tgt));
  }
  return ex;
}

inline void write_examples_jsonl(const std::string& path, const std::vector<Example>& examples) {
  std::string body;
  for (const Example& ex : examples) {
    body += to_json(ex).dump();
    body += '\n';
  }
  write_text_file(path, body);
}

inline std::vector<Example> read_examples_jsonl(const std::string& path) {
  std::vector<Example> out;
  for_each_jsonl(path, [&out](const nlohmann::json& j) { out.push_back(example_from_json(j)); });
  return out;
}

}  // namespace msl

#endif  // MSL_SCENE_HPP_
