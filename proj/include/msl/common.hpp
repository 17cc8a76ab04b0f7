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

#ifndef MSL_COMMON_HPP_
#define MSL_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace msl {

using i32 = std::int32_t;
using i64 = std::int64_t;
using u64 = std::uint64_t;

// Agent categories used for per-type loss reporting and behavior mixtures.
enum class AgentType : int { kAv = 0, kVehicle = 1, kPedestrian = 2, kCyclist = 3 };
inline constexpr int kNumAgentTypes = 4;

inline const char* agent_type_name(AgentType t) {
  switch (t) {
    case AgentType::kAv: return "av";
    case AgentType::kVehicle: return "vehicle";
    case AgentType::kPedestrian: return "pedestrian";
    case AgentType::kCyclist: return "cyclist";
  }
  return "unknown";
}

inline AgentType agent_type_from_int(int v) {
  if (v < 0 || v >= kNumAgentTypes) {
    throw std::invalid_argument("agent type out of range: " + std::to_string(v));
  }
  return static_cast<AgentType>(v);
}

}  // namespace msl

#endif  // MSL_COMMON_HPP_
