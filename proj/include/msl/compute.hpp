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

// Exact parameter and FLOPs accounting for the encoder-decoder family.
// Only attention and feed-forward einsum weights are counted; embeddings and
// normalization are excluded by definition. A multiply-add counts as 2 FLOPs.
// Training compute is forward-only so that FLOPs(N, D) matches the analytic
// formulas the fits assume.

#ifndef MSL_COMPUTE_HPP_
#define MSL_COMPUTE_HPP_

#include <stdexcept>
#include <string>

#include "msl/common.hpp"

namespace msl {

inline u64 checked_mul(u64 a, u64 b) {
  u64 r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("flop count overflow (mul)");
  return r;
}

inline u64 checked_add(u64 a, u64 b) {
  u64 r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("flop count overflow (add)");
  return r;
}

struct ModelShape {
  i64 n = 0;         // encoder layers
  i64 m = 0;         // decoder layers
  i64 d = 1;         // hidden dimension
  i64 E = 1;         // scene (encoder) token count
  i64 D_q = 1;       // decoder query token count, M agents x T tokens each
  i64 ffn_mult = 4;  // feed-forward hidden width multiplier, fixed

  void validate() const {
    if (n < 0) throw std::invalid_argument("ModelShape: n must be >= 0");
    if (m < 0) throw std::invalid_argument("ModelShape: m must be >= 0");
    if (d < 1) throw std::invalid_argument("ModelShape: d must be >= 1");
    if (E < 1) throw std::invalid_argument("ModelShape: E must be >= 1");
    if (D_q < 1) throw std::invalid_argument("ModelShape: D_q must be >= 1");
    if (ffn_mult != 4) throw std::invalid_argument("ModelShape: ffn_mult is fixed at 4");
  }
};

// Trainable weights: (12n + 16m) * d^2.
// Per encoder layer: 4d^2 self-attention + 8d^2 feed-forward = 12d^2.
// Per decoder layer: 4d^2 self-attention + 4d^2 cross-attention + 8d^2 = 16d^2.
inline u64 param_count(const ModelShape& s) {
  s.validate();
  u64 layers = checked_add(checked_mul(12, static_cast<u64>(s.n)),
                           checked_mul(16, static_cast<u64>(s.m)));
  u64 d2 = checked_mul(static_cast<u64>(s.d), static_cast<u64>(s.d));
  return checked_mul(layers, d2);
}

// Forward FLOPs for one example through the encoder stack: n * (24Ed^2 + 4dE^2).
inline u64 encoder_flops_per_example(const ModelShape& s) {
  s.validate();
  u64 d = static_cast<u64>(s.d), E = static_cast<u64>(s.E);
  u64 d2 = checked_mul(d, d), E2 = checked_mul(E, E);
  u64 per_layer = checked_add(checked_mul(24, checked_mul(E, d2)),
                              checked_mul(4, checked_mul(d, E2)));
  return checked_mul(static_cast<u64>(s.n), per_layer);
}

// Forward FLOPs for one example through the decoder stack:
// m * (28Dd^2 + 4dD^2 + 4Ed^2 + 4dDE) with D the query token count.
inline u64 decoder_flops_per_example(const ModelShape& s) {
  s.validate();
  u64 d = static_cast<u64>(s.d), E = static_cast<u64>(s.E), D = static_cast<u64>(s.D_q);
  u64 d2 = checked_mul(d, d);
  u64 per_layer = checked_mul(28, checked_mul(D, d2));
  per_layer = checked_add(per_layer, checked_mul(4, checked_mul(d, checked_mul(D, D))));
  per_layer = checked_add(per_layer, checked_mul(4, checked_mul(E, d2)));
  per_layer = checked_add(per_layer, checked_mul(4, checked_mul(d, checked_mul(D, E))));
  return checked_mul(static_cast<u64>(s.m), per_layer);
}

inline u64 forward_flops_per_example(const ModelShape& s) {
  return checked_add(encoder_flops_per_example(s), decoder_flops_per_example(s));
}

// Training compute is forward-only: C = forward FLOPs per example x examples.
inline u64 train_flops(const ModelShape& s, u64 examples) {
  return checked_mul(forward_flops_per_example(s), examples);
}

// Sampling cost: the scene is encoded once, then each sampled joint rollout
// pays one full-sequence decoder forward (no cache discount).
inline u64 inference_flops(const ModelShape& s, u64 num_samples) {
  if (num_samples < 1) throw std::invalid_argument("inference_flops: num_samples must be >= 1");
  return checked_add(encoder_flops_per_example(s),
                     checked_mul(num_samples, decoder_flops_per_example(s)));
}

struct ComputeBudget {
  u64 total_flops = 0;
  u64 examples = 0;
  u64 flops_per_example = 0;
};

// Realize a FLOP budget for a fixed shape: pick the example count whose exact
// total lands nearest the target (at least one example).
inline ComputeBudget make_budget(const ModelShape& s, u64 target_flops) {
  ComputeBudget b;
  b.flops_per_example = forward_flops_per_example(s);
  if (b.flops_per_example == 0) throw std::invalid_argument("make_budget: zero-cost shape");
  u64 lo = target_flops / b.flops_per_example;
  u64 rem = target_flops % b.flops_per_example;
  b.examples = (rem * 2 >= b.flops_per_example) ? lo + 1 : lo;
  if (b.examples < 1) b.examples = 1;
  b.total_flops = checked_mul(b.flops_per_example, b.examples);
  return b;
}

}  // namespace msl

#endif  // MSL_COMPUTE_HPP_
