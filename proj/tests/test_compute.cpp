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

#include <catch2/catch_amalgamated.hpp>

#include "msl/compute.hpp"

namespace msl {
namespace {

TEST_CASE("param_count matches closed form", "[compute]") {
  CHECK(param_count(ModelShape{0, 0, 64, 1, 1}) == 0);
  CHECK(param_count(ModelShape{2, 2, 128, 64, 176}) == 917504ull);
  // Decoder share of an n=2, m=2 model is 32/56 = 4/7 regardless of width.
  for (i64 d : {16, 64, 256}) {
    const u64 total = param_count(ModelShape{2, 2, d, 1, 1});
    const u64 decoder_only = param_count(ModelShape{0, 2, d, 1, 1});
    CHECK(decoder_only * 7 == total * 4);
  }
}

TEST_CASE("train_flops per-example formula", "[compute]") {
  CHECK(train_flops(ModelShape{1, 0, 1, 2, 1}, 1) == 64ull);
  CHECK(train_flops(ModelShape{0, 1, 1, 2, 3}, 1) == 152ull);
  CHECK(train_flops(ModelShape{1, 1, 1, 2, 3}, 1) == 216ull);
  // Frozen oracle for the default desk-scale shape (spreadsheet evaluation).
  const ModelShape s{2, 2, 128, 64, 176};
  CHECK(encoder_flops_per_example(s) == 54525952ull);
  CHECK(decoder_flops_per_example(s) == 213123072ull);
  CHECK(forward_flops_per_example(s) == 267649024ull);
}

TEST_CASE("train_flops is linear in examples", "[compute]") {
  const ModelShape s{2, 3, 32, 16, 24};
  const u64 one = train_flops(s, 1);
  CHECK(train_flops(s, 0) == 0);
  CHECK(train_flops(s, 17) == 17 * one);
  CHECK(train_flops(s, 1000) == 1000 * one);
}

TEST_CASE("inference_flops encoder once, decoder per sample", "[compute]") {
  const ModelShape s{2, 2, 128, 64, 176};
  CHECK(inference_flops(s, 1) == forward_flops_per_example(s));
  CHECK(inference_flops(s, 64) == 13694402560ull);
  // With no encoder the cost is exactly linear in samples.
  const ModelShape dec_only{0, 2, 16, 8, 12};
  CHECK(inference_flops(dec_only, 2) == 2 * inference_flops(dec_only, 1));
  // Affine in general: constant increments.
  const u64 f1 = inference_flops(s, 1);
  const u64 f2 = inference_flops(s, 2);
  const u64 f3 = inference_flops(s, 3);
  CHECK(f2 - f1 == f3 - f2);
}

TEST_CASE("overflow is reported, not wrapped", "[compute]") {
  const ModelShape s{64, 64, i64(1) << 32, 4096, 4096};
  CHECK_THROWS_AS(param_count(s), std::overflow_error);
  CHECK_THROWS_AS(train_flops(ModelShape{1, 1, 65536, 65536, 65536}, u64(1) << 40),
                  std::overflow_error);
}

TEST_CASE("shape invariants are enforced", "[compute]") {
  CHECK_THROWS_AS(param_count(ModelShape{-1, 0, 8, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(param_count(ModelShape{0, 0, 0, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(train_flops(ModelShape{0, 0, 8, 0, 1}, 1), std::invalid_argument);
  ModelShape bad_ffn{1, 1, 8, 2, 2};
  bad_ffn.ffn_mult = 2;
  CHECK_THROWS_AS(param_count(bad_ffn), std::invalid_argument);
  CHECK_THROWS_AS(inference_flops(ModelShape{1, 1, 8, 2, 2}, 0), std::invalid_argument);
}

TEST_CASE("budget realization keeps the exact integer relation", "[compute]") {
  const ModelShape s{2, 2, 64, 32, 88};
  const u64 per = forward_flops_per_example(s);
  for (u64 target : {per / 2, per, 10 * per + per / 3, u64(1) << 40}) {
    const ComputeBudget b = make_budget(s, target);
    CHECK(b.flops_per_example == per);
    CHECK(b.total_flops == b.flops_per_example * b.examples);
    CHECK(b.examples >= 1);
    // Nearest multiple: off by at most half of one example's cost,
    // unless the floor would be zero.
    if (target >= per) {
      const u64 err = b.total_flops > target ? b.total_flops - target : target - b.total_flops;
      CHECK(2 * err <= per);
    }
  }
}

}  // namespace
}  // namespace msl
