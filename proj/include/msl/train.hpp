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

// Training loop: adaptive moments with decoupled weight decay, linear warmup
// into a cosine schedule, seeded shuffling, and divergence abort. Each run
// emits the (N, D, C, losses) row that the scaling analysis consumes. Also
// hosts the planner fine-tune, which transfers pretrained weights into a
// route-conditioned single-agent head under a hard compute budget.

#ifndef MSL_TRAIN_HPP_
#define MSL_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "msl/compute.hpp"
#include "msl/fit.hpp"
#include "msl/model.hpp"
#include "msl/random.hpp"
#include "msl/synth.hpp"

namespace msl {

struct TrainConfig {
  ModelShape shape;
  int batch_examples = 32;
  i64 total_steps = 1;
  i64 warmup_steps = 100;
  double peak_lr = 3e-3;
  double final_lr = 3e-5;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  u64 seed = 0;

  void validate() const {
    shape.validate();
    if (batch_examples < 1) throw std::invalid_argument("TrainConfig: batch_examples >= 1");
    if (total_steps < 1) throw std::invalid_argument("TrainConfig: total_steps >= 1");
    if (warmup_steps < 0 || warmup_steps >= total_steps) {
      throw std::invalid_argument("TrainConfig: warmup_steps must be in [0, total_steps)");
    }
    if (!(peak_lr > final_lr && final_lr > 0.0)) {
      throw std::invalid_argument("TrainConfig: need peak_lr > final_lr > 0");
    }
    if (grad_clip < 0.0) throw std::invalid_argument("TrainConfig: grad_clip >= 0");
  }
};

// Learning rate for the 1-based update index: linear ramp reaching exactly
// peak_lr at warmup_steps, cosine reaching exactly final_lr at total_steps.
inline double learning_rate(const TrainConfig& cfg, i64 step) {
  if (step <= cfg.warmup_steps) {
    return cfg.warmup_steps == 0 ? cfg.peak_lr
                                 : cfg.peak_lr * (double(step) / double(cfg.warmup_steps));
  }
  const double progress = double(step - cfg.warmup_steps) / double(cfg.total_steps - cfg.warmup_steps);
  if (progress >= 1.0) return cfg.final_lr;
  return cfg.final_lr +
         0.5 * (cfg.peak_lr - cfg.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

// Adam with decoupled weight decay and global-norm gradient clipping.
class AdamW {
 public:
  explicit AdamW(size_t num_params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(num_params, 0.0), v_(num_params, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& ps, double lr, double weight_decay, double grad_clip) {
    auto& g = ps.grads();
    auto& w = ps.values();
    if (g.size() != m_.size() || w.size() != m_.size()) {
      throw std::invalid_argument("AdamW: parameter count changed");
    }
    double scale = 1.0;
    if (grad_clip > 0.0) {
      double sq = 0.0;
      for (double gi : g) sq += gi * gi;
      const double norm = std::sqrt(sq);
      if (norm > grad_clip) scale = grad_clip / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * scale;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * gi;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * gi * gi;
      const double update = (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
      w[i] -= lr * (update + weight_decay * w[i]);
    }
  }

  i64 steps_taken() const { return t_; }

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  i64 t_ = 0;
};

// Mean teacher-forced loss over a dataset; per-type entries are weighted by
// the number of contributing token positions. Zero marks an absent type.
inline LossBreakdown dataset_loss(JointModel& model, const std::vector<Example>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("dataset_loss: empty dataset");
  LossBreakdown agg;
  for (const Example& ex : dataset) {
    LossBreakdown lb = model.teacher_forced_loss(ex);
    agg.total += lb.total;
    for (int k = 0; k < kNumAgentTypes; ++k) {
      agg.per_type[k] += lb.per_type[k] * lb.type_positions[k];
      agg.type_positions[k] += lb.type_positions[k];
    }
  }
  agg.total /= double(dataset.size());
  for (int k = 0; k < kNumAgentTypes; ++k) {
    if (agg.type_positions[k] > 0) agg.per_type[k] /= agg.type_positions[k];
  }
  return agg;
}

struct TrainResult {
  RunRecord record;
  std::vector<double> loss_history;  // mean batch loss per step
};

inline std::string default_run_id(const TrainConfig& cfg) {
  return "n" + std::to_string(cfg.shape.n) + "m" + std::to_string(cfg.shape.m) + "d" +
         std::to_string(cfg.shape.d) + "_b" + std::to_string(cfg.batch_examples) + "_t" +
         std::to_string(cfg.total_steps) + "_s" + std::to_string(cfg.seed);
}

// Runs total_steps updates over a seeded epoch shuffle of train_set, then
// evaluates on eval_set. D counts every example consumed, including reuse
// across epochs; C follows the forward-only ledger convention. Aborts with a
// diagnostic if the loss leaves the finite range.
inline TrainResult train(JointModel& model, const std::vector<Example>& train_set,
                         const std::vector<Example>& eval_set, const TrainConfig& cfg,
                         const std::string& run_id = "") {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  const ModelShape& ms = model.config().shape;
  if (ms.n != cfg.shape.n || ms.m != cfg.shape.m || ms.d != cfg.shape.d || ms.E != cfg.shape.E ||
      ms.D_q != cfg.shape.D_q) {
    throw std::invalid_argument("train: model shape does not match config");
  }

  AdamW opt(model.params().size());
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();  // forces an initial shuffle
  u64 epoch = 0;
  std::vector<uint8_t> consumed(train_set.size(), 0);

  TrainResult result;
  result.loss_history.reserve(size_t(cfg.total_steps));
  for (i64 step = 0; step < cfg.total_steps; ++step) {
    model.params().zero_grad();
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_examples; ++b) {
      if (cursor == order.size()) {
        Rng shuffler(mix_seed(cfg.seed, epoch, 0xD5));
        shuffler.shuffle(order);
        cursor = 0;
        ++epoch;
      }
      const size_t idx = order[cursor++];
      consumed[idx] = 1;
      try {
        batch_loss += model.teacher_forced_loss(train_set[idx], true).total;
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: aborted at step " + std::to_string(step) + " (run " +
                                 default_run_id(cfg) + "): " + e.what());
      }
    }
    batch_loss /= cfg.batch_examples;
    if (!std::isfinite(batch_loss)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               " (run " + default_run_id(cfg) + ")");
    }
    const double inv_batch = 1.0 / cfg.batch_examples;
    for (double& g : model.params().grads()) g *= inv_batch;
    opt.step(model.params(), learning_rate(cfg, step + 1), cfg.weight_decay, cfg.grad_clip);
    result.loss_history.push_back(batch_loss);
  }

  const LossBreakdown ev = dataset_loss(model, eval_set.empty() ? train_set : eval_set);
  RunRecord& rec = result.record;
  rec.run_id = run_id.empty() ? default_run_id(cfg) : run_id;
  rec.shape = cfg.shape;
  rec.seed = cfg.seed;
  rec.N = param_count(cfg.shape);
  rec.D = u64(cfg.total_steps) * u64(cfg.batch_examples);
  rec.C = train_flops(cfg.shape, rec.D);
  rec.eval_loss = ev.total;
  rec.per_type_losses = ev.per_type;
  std::vector<Example> touched;
  for (size_t i = 0; i < train_set.size(); ++i) {
    if (consumed[i]) touched.push_back(train_set[i]);
  }
  rec.miles = modeled_future_miles(touched);
  rec.validate();
  return result;
}

// Copies every parameter tensor whose name and shape match; everything else
// (the planner's fresh route projection) keeps its initialization.
inline int copy_matching_params(const JointModel& src, JointModel& dst) {
  int copied = 0;
  const auto& sv = src.params().values();
  for (const auto& de : dst.params().entries()) {
    for (const auto& se : src.params().entries()) {
      if (se.name != de.name) continue;
      if (se.rows != de.rows || se.cols != de.cols) {
        throw std::invalid_argument("copy_matching_params: shape clash for " + se.name);
      }
      std::copy_n(sv.begin() + se.offset, size_t(se.rows) * se.cols,
                  dst.params().values().begin() + de.offset);
      ++copied;
      break;
    }
  }
  return copied;
}

// Planner configuration derived from a pretraining configuration: one modeled
// agent, route tokens enabled, identical width and depth.
inline ModelConfig planner_config(const ModelConfig& base) {
  ModelConfig pc = base;
  pc.num_modeled = 1;
  pc.with_route = true;
  pc.shape.E = kSceneTokensWithRoute;
  pc.shape.D_q = pc.t_tokens;
  return pc;
}

struct FinetuneResult {
  JointModel planner;
  RunRecord record;
  u64 consumed_flops = 0;
};

// Transfers pretrained weights into the planner head and fine-tunes it for as
// many steps as fit inside budget_flops (at least one).
inline FinetuneResult finetune_planner(const JointModel& pretrained,
                                       const std::vector<Example>& route_dataset,
                                       const std::vector<Example>& eval_set, u64 budget_flops,
                                       TrainConfig cfg) {
  if (route_dataset.empty()) throw std::invalid_argument("finetune_planner: empty dataset");
  const ModelConfig pc = planner_config(pretrained.config());
  JointModel planner(pc, cfg.seed);
  copy_matching_params(pretrained, planner);

  const u64 per_step = train_flops(pc.shape, u64(cfg.batch_examples));
  if (budget_flops < per_step) {
    throw std::invalid_argument("finetune_planner: budget below one training step");
  }
  cfg.shape = pc.shape;
  cfg.total_steps = i64(budget_flops / per_step);
  cfg.warmup_steps = std::min<i64>(cfg.warmup_steps, cfg.total_steps - 1);

  FinetuneResult out{std::move(planner), {}, 0};
  TrainResult tr = train(out.planner, route_dataset, eval_set, cfg, "planner_" + default_run_id(cfg));
  out.record = tr.record;
  out.consumed_flops = tr.record.C;
  if (out.consumed_flops > budget_flops) {
    throw std::logic_error("finetune_planner: budget accounting overflow");
  }
  return out;
}

}  // namespace msl

#endif  // MSL_TRAIN_HPP_
