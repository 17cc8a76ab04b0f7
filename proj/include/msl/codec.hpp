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

// Discrete motion tokens. A continuous BEV trajectory becomes a sequence of
// Verlet-wrapped displacement tokens: at each step the token encodes the
// quantized residual between the true next position and the constant-velocity
// extrapolation from the two previous decoded positions. Encoding feeds the
// quantized past back into the Verlet predictor, so teacher-forced targets
// are exactly reachable by the decoder at inference time.

#ifndef MSL_CODEC_HPP_
#define MSL_CODEC_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "msl/common.hpp"
#include "msl/geometry.hpp"

namespace msl {

struct TokenVocab {
  int bins_per_axis = 13;  // odd, so a zero-residual center token exists
  double delta_max = 1.0;  // meters, per-axis residual clamp
  double token_dt = 0.5;   // seconds between motion tokens

  int vocab_size() const { return bins_per_axis * bins_per_axis; }
  double bin_step() const { return 2.0 * delta_max / (bins_per_axis - 1); }

  void validate() const {
    if (bins_per_axis < 3 || bins_per_axis % 2 == 0) {
      throw std::invalid_argument("TokenVocab: bins_per_axis must be odd and >= 3");
    }
    if (!(delta_max > 0.0)) throw std::invalid_argument("TokenVocab: delta_max must be > 0");
    if (!(token_dt > 0.0)) throw std::invalid_argument("TokenVocab: token_dt must be > 0");
  }

  double axis_center(int i) const { return -delta_max + i * bin_step(); }

  // Nearest axis center after clamping to [-delta_max, +delta_max].
  int quantize_axis(double r) const {
    r = std::clamp(r, -delta_max, delta_max);
    int i = static_cast<int>(std::lround((r + delta_max) / bin_step()));
    return std::clamp(i, 0, bins_per_axis - 1);
  }

  int token_id(int ix, int iy) const { return ix * bins_per_axis + iy; }
  int center_token() const { return (vocab_size() - 1) / 2; }

  Vec2 token_delta(int token) const {
    if (token < 0 || token >= vocab_size()) throw std::out_of_range("token out of range");
    int ix = token / bins_per_axis;
    int iy = token % bins_per_axis;
    return {axis_center(ix), axis_center(iy)};
  }
};

struct AgentTrack {
  std::vector<Vec2> positions;  // sampled at token_dt
  std::vector<bool> valid;      // empty means all valid

  bool fully_valid() const {
    for (bool v : valid) {
      if (!v) return false;
    }
    return true;
  }
};

struct EncodeStats {
  i64 clamped_axes = 0;  // residual axes that exceeded +-delta_max
};

// Tokenize a (T+2)-point track into T tokens. The first two points seed the
// Verlet predictor; each later point contributes one token.
inline std::vector<int> encode_track(std::span<const Vec2> positions, const TokenVocab& vocab,
                                     EncodeStats* stats = nullptr) {
  vocab.validate();
  if (positions.size() < 2) throw std::invalid_argument("encode_track: need at least 2 points");
  for (const Vec2& p : positions) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("encode_track: non-finite position");
    }
  }
  std::vector<int> tokens;
  tokens.reserve(positions.size() - 2);
  Vec2 prev = positions[0];
  Vec2 cur = positions[1];
  for (size_t t = 2; t < positions.size(); ++t) {
    const Vec2 pred = cur * 2.0 - prev;
    const Vec2 residual = positions[t] - pred;
    if (stats) {
      if (std::abs(residual.x) > vocab.delta_max) ++stats->clamped_axes;
      if (std::abs(residual.y) > vocab.delta_max) ++stats->clamped_axes;
    }
    const int ix = vocab.quantize_axis(residual.x);
    const int iy = vocab.quantize_axis(residual.y);
    const int token = vocab.token_id(ix, iy);
    tokens.push_back(token);
    prev = cur;
    cur = pred + vocab.token_delta(token);
  }
  return tokens;
}

inline std::vector<int> encode_track(const AgentTrack& track, const TokenVocab& vocab,
                                     EncodeStats* stats = nullptr) {
  if (!track.fully_valid()) throw std::invalid_argument("encode_track: invalid steps in track");
  return encode_track(std::span<const Vec2>(track.positions), vocab, stats);
}

// Integrate tokens back into positions. Output holds the two seed points
// followed by one position per token.
inline std::vector<Vec2> decode_track(std::span<const int> tokens, Vec2 seed0, Vec2 seed1,
                                      const TokenVocab& vocab) {
  vocab.validate();
  std::vector<Vec2> positions;
  positions.reserve(tokens.size() + 2);
  positions.push_back(seed0);
  positions.push_back(seed1);
  Vec2 prev = seed0;
  Vec2 cur = seed1;
  for (int token : tokens) {
    const Vec2 next = cur * 2.0 - prev + vocab.token_delta(token);
    positions.push_back(next);
    prev = cur;
    cur = next;
  }
  return positions;
}

// Worst-case round-trip position error after T steps: per-step quantization
// error is at most half a bin per axis and compounds through the Verlet
// recursion into at most T * (delta_max / (V - 1)) per axis.
inline double round_trip_bound(const TokenVocab& vocab, int steps) {
  return steps * (vocab.delta_max / (vocab.bins_per_axis - 1));
}

}  // namespace msl

#endif  // MSL_CODEC_HPP_
