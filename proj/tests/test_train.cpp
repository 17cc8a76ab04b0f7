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

#include <cmath>
#include <vector>

#include "msl/train.hpp"

namespace msl {
namespace {

ModelConfig tiny_config(int num_modeled = 2, int t_tokens = 3, i64 d = 4) {
  ModelConfig mc;
  mc.vocab.bins_per_axis = 3;
  mc.num_modeled = num_modeled;
  mc.t_tokens = t_tokens;
  mc.shape = ModelShape{1, 1, d, 64, i64(num_modeled) * t_tokens};
  return mc;
}

Example tiny_example(const ModelConfig& mc, u64 seed) {
  Rng rng(mix_seed(0xBEEF, seed));
  SceneContext ctx;
  for (int i = 0; i < mc.num_modeled; ++i) {
    AgentInfo info;
    info.type = i == 0 ? AgentType::kAv : AgentType::kVehicle;
    ctx.agent_info.push_back(info);
    std::array<AgentSnapshot, kHistorySamples> hist{};
    for (int k = 0; k < kHistorySamples; ++k) {
      hist[k] = {rng.uniform(-10, 10), rng.uniform(-10, 10), 0.0, rng.uniform(-3, 3),
                 rng.uniform(-2, 2), rng.uniform(-2, 2), true};
    }
    ctx.agent_history.push_back(hist);
    ctx.modeled.push_back(i);
  }
  ctx.roadgraph.push_back({{-20, 0}, {20, 0}, MapType::kLane});

  Example ex;
  ex.segment_id = i64(seed);
  ex.t0 = 1.0;
  ex.context = ctx;
  for (int i = 0; i < mc.num_modeled; ++i) {
    AgentTarget t;
    t.agent = i;
    t.speed_mps = 2.0;
    for (int k = 0; k < mc.t_tokens + 2; ++k) t.track.push_back({0.2 * k + i, 0.1 * k});
    for (int k = 0; k < mc.t_tokens; ++k) {
      t.tokens.push_back(int(rng.uniform_int(mc.vocab.vocab_size())));
    }
    ex.targets.push_back(t);
  }
  return ex;
}

std::vector<Example> tiny_dataset(const ModelConfig& mc, int n, u64 seed0 = 0) {
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) out.push_back(tiny_example(mc, seed0 + i));
  return out;
}

TrainConfig tiny_train_config(const ModelConfig& mc) {
  TrainConfig cfg;
  cfg.shape = mc.shape;
  cfg.batch_examples = 4;
  cfg.total_steps = 10;
  cfg.warmup_steps = 2;
  cfg.seed = 5;
  return cfg;
}

TEST_CASE("schedule hits peak at warmup end and final at the last step exactly") {
  TrainConfig cfg;
  cfg.shape = ModelShape{1, 1, 4, 64, 6};
  cfg.total_steps = 1000;
  cfg.warmup_steps = 100;
  cfg.peak_lr = 2e-4;
  cfg.final_lr = 1e-6;
  cfg.validate();

  CHECK(learning_rate(cfg, cfg.warmup_steps) == cfg.peak_lr);
  CHECK(learning_rate(cfg, cfg.total_steps) == cfg.final_lr);
  CHECK(learning_rate(cfg, 0) == 0.0);
  CHECK(learning_rate(cfg, 50) == Catch::Approx(cfg.peak_lr * 0.5));
  // Ramp is increasing, decay is decreasing, all values within [final, peak].
  for (i64 s = 1; s <= cfg.warmup_steps; ++s) {
    CHECK(learning_rate(cfg, s) >= learning_rate(cfg, s - 1));
  }
  for (i64 s = cfg.warmup_steps + 1; s <= cfg.total_steps; ++s) {
    const double lr = learning_rate(cfg, s);
    CHECK(lr <= learning_rate(cfg, s - 1));
    CHECK(lr >= cfg.final_lr);
    CHECK(lr <= cfg.peak_lr);
  }
  // Halfway through the decay sits exactly at the midpoint of the two rates.
  const i64 mid = cfg.warmup_steps + (cfg.total_steps - cfg.warmup_steps) / 2;
  CHECK(learning_rate(cfg, mid) ==
        Catch::Approx(0.5 * (cfg.peak_lr + cfg.final_lr)).epsilon(1e-12));
}

TEST_CASE("config validation rejects inverted rates and bad step counts") {
  TrainConfig cfg;
  cfg.shape = ModelShape{1, 1, 4, 64, 6};
  cfg.total_steps = 10;
  cfg.warmup_steps = 2;
  cfg.validate();
  TrainConfig bad = cfg;
  bad.warmup_steps = 10;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.final_lr = bad.peak_lr;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_examples = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("adamw drives a convex quadratic to its minimum") {
  ParamStore ps;
  const int w = ps.add("w", 1, 2, ParamKind::kLayer, 0.0);
  ps.mat(w)(0, 0) = 5.0;
  ps.mat(w)(0, 1) = -3.0;
  AdamW opt(ps.size());
  for (int i = 0; i < 2000; ++i) {
    ps.zero_grad();
    ps.grad(w)(0, 0) = 2.0 * (ps.mat(w)(0, 0) - 1.0);
    ps.grad(w)(0, 1) = 2.0 * (ps.mat(w)(0, 1) + 2.0);
    opt.step(ps, 0.01, 0.0, 0.0);
  }
  CHECK(ps.mat(w)(0, 0) == Catch::Approx(1.0).margin(1e-3));
  CHECK(ps.mat(w)(0, 1) == Catch::Approx(-2.0).margin(1e-3));
  CHECK(opt.steps_taken() == 2000);
}

TEST_CASE("gradient clipping bounds the applied update") {
  ParamStore ps;
  const int w = ps.add("w", 1, 1, ParamKind::kLayer, 0.0);
  AdamW opt(ps.size());
  ps.grad(w)(0, 0) = 1e9;
  opt.step(ps, 1.0, 0.0, 1.0);
  // First-step update magnitude is at most lr regardless of gradient size.
  CHECK(std::abs(ps.mat(w)(0, 0)) <= 1.0 + 1e-9);
}

TEST_CASE("training memorizes a ten-example set") {
  ModelConfig mc = tiny_config(2, 3, 8);
  JointModel model(mc, 17);
  auto dataset = tiny_dataset(mc, 10);

  TrainConfig cfg;
  cfg.shape = mc.shape;
  cfg.batch_examples = 10;
  cfg.total_steps = 2000;
  cfg.warmup_steps = 100;
  cfg.peak_lr = 1e-2;
  cfg.final_lr = 1e-4;
  cfg.seed = 3;
  TrainResult res = train(model, dataset, dataset, cfg);

  const double threshold = 0.5 * std::log(double(mc.vocab.vocab_size()));
  CHECK(dataset_loss(model, dataset).total < threshold);
  CHECK(res.record.eval_loss < threshold);
  REQUIRE(res.loss_history.size() == 2000);
  CHECK(res.loss_history.back() < res.loss_history.front());
}

TEST_CASE("run records account for every consumed example") {
  ModelConfig mc = tiny_config();
  JointModel model(mc, 23);
  auto dataset = tiny_dataset(mc, 5);
  TrainConfig cfg = tiny_train_config(mc);
  cfg.total_steps = 3;
  cfg.warmup_steps = 1;
  cfg.batch_examples = 4;
  TrainResult res = train(model, dataset, dataset, cfg);

  CHECK(res.record.N == param_count(mc.shape));
  CHECK(res.record.D == 12);  // 3 steps x 4 examples, reuse counted
  CHECK(res.record.C == train_flops(mc.shape, 12));
  CHECK(res.record.miles > 0.0);
  CHECK(res.record.miles <= modeled_future_miles(dataset) + 1e-12);
  CHECK(res.record.eval_loss > 0.0);
  // Types present in the data have positive partial losses; absent stay zero.
  CHECK(res.record.per_type_losses[int(AgentType::kAv)] > 0.0);
  CHECK(res.record.per_type_losses[int(AgentType::kVehicle)] > 0.0);
  CHECK(res.record.per_type_losses[int(AgentType::kCyclist)] == 0.0);
}

TEST_CASE("training is deterministic in the seed") {
  ModelConfig mc = tiny_config();
  auto dataset = tiny_dataset(mc, 6);
  TrainConfig cfg = tiny_train_config(mc);

  JointModel a(mc, 40), b(mc, 40), c(mc, 40);
  TrainResult ra = train(a, dataset, dataset, cfg);
  TrainResult rb = train(b, dataset, dataset, cfg);
  CHECK(ra.loss_history == rb.loss_history);
  CHECK(a.params().values() == b.params().values());
  CHECK(ra.record.eval_loss == rb.record.eval_loss);

  cfg.seed += 1;
  TrainResult rc = train(c, dataset, dataset, cfg);
  CHECK(ra.loss_history != rc.loss_history);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  ModelConfig mc = tiny_config();
  JointModel model(mc, 2);
  model.params().values()[10] = std::numeric_limits<double>::quiet_NaN();
  auto dataset = tiny_dataset(mc, 3);
  TrainConfig cfg = tiny_train_config(mc);
  CHECK_THROWS_AS(train(model, dataset, dataset, cfg), std::runtime_error);
}

TEST_CASE("empty datasets and shape mismatches are rejected") {
  ModelConfig mc = tiny_config();
  JointModel model(mc, 2);
  TrainConfig cfg = tiny_train_config(mc);
  CHECK_THROWS_AS(train(model, {}, {}, cfg), std::invalid_argument);
  cfg.shape.d = 8;
  cfg.shape.D_q = 6;
  auto dataset = tiny_dataset(mc, 3);
  CHECK_THROWS_AS(train(model, dataset, dataset, cfg), std::invalid_argument);
}

TEST_CASE("dataset loss aggregates per-type partials by position count") {
  ModelConfig mc = tiny_config();
  JointModel model(mc, 71);
  auto dataset = tiny_dataset(mc, 4);
  LossBreakdown agg = dataset_loss(model, dataset);

  double manual_total = 0.0;
  std::array<double, kNumAgentTypes> sum{};
  std::array<int, kNumAgentTypes> cnt{};
  for (const Example& ex : dataset) {
    LossBreakdown lb = model.teacher_forced_loss(ex);
    manual_total += lb.total;
    for (int k = 0; k < kNumAgentTypes; ++k) {
      sum[k] += lb.per_type[k] * lb.type_positions[k];
      cnt[k] += lb.type_positions[k];
    }
  }
  CHECK(agg.total == Catch::Approx(manual_total / dataset.size()).epsilon(1e-12));
  for (int k = 0; k < kNumAgentTypes; ++k) {
    REQUIRE(agg.type_positions[k] == cnt[k]);
    if (cnt[k] > 0) CHECK(agg.per_type[k] == Catch::Approx(sum[k] / cnt[k]).epsilon(1e-12));
  }
}

TEST_CASE("planner transfer reproduces the single-agent pretrain loss on empty routes") {
  ModelConfig base = tiny_config(2, 3, 8);
  JointModel pretrained(base, 303);

  // Restriction of the pretrained model to one modeled agent, no route.
  ModelConfig solo = base;
  solo.num_modeled = 1;
  solo.shape.D_q = solo.t_tokens;
  JointModel restricted(solo, 1);
  REQUIRE(copy_matching_params(pretrained, restricted) ==
          int(restricted.params().entries().size()));

  ModelConfig pc = planner_config(base);
  REQUIRE(pc.shape.E == kSceneTokensWithRoute);
  JointModel planner(pc, 2);
  const int copied = copy_matching_params(pretrained, planner);
  REQUIRE(copied == int(planner.params().entries().size()) - 1);  // route proj is fresh

  ModelConfig data_cfg = solo;
  auto dataset = tiny_dataset(data_cfg, 6, 50);
  for (const Example& ex : dataset) {
    const double lp = planner.teacher_forced_loss(ex).total;
    const double lr = restricted.teacher_forced_loss(ex).total;
    CHECK(lp == Catch::Approx(lr).epsilon(1e-12));
  }
}

TEST_CASE("planner fine-tuning respects the compute budget and uses the route") {
  ModelConfig base = tiny_config(2, 3, 8);
  JointModel pretrained(base, 11);

  ModelConfig pc = planner_config(base);
  ModelConfig data_cfg = pc;
  data_cfg.num_modeled = 1;
  auto dataset = tiny_dataset(data_cfg, 8, 90);
  for (auto& ex : dataset) {
    ex.context.route.push_back({{0, 0}, {5, 0}, MapType::kLane});
    ex.context.route.push_back({{5, 0}, {10, 1}, MapType::kLane});
  }

  TrainConfig cfg;
  cfg.shape = pc.shape;
  cfg.batch_examples = 4;
  cfg.warmup_steps = 10;
  cfg.total_steps = 100;  // overwritten by the budget
  cfg.peak_lr = 3e-3;
  cfg.final_lr = 3e-5;
  cfg.seed = 7;
  const u64 budget = train_flops(pc.shape, 4) * 50 + 123;  // room for exactly 50 steps
  FinetuneResult ft = finetune_planner(pretrained, dataset, dataset, budget, cfg);
  CHECK(ft.consumed_flops <= budget);
  CHECK(ft.record.D == 200);
  CHECK(ft.record.eval_loss > 0.0);
  CHECK(ft.planner.config().with_route);

  // Below one step the budget is unusable.
  CHECK_THROWS_AS(finetune_planner(pretrained, dataset, dataset, 10, cfg),
                  std::invalid_argument);
}

}  // namespace
}  // namespace msl
