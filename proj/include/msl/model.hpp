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

// Joint autoregressive motion forecaster. An early-fusion set encoder embeds
// agents, map segments, lights, and (optionally) a route in one shared frame;
// a decoder runs joint agent-time self-attention over flattened motion-token
// sequences with a causal-by-time mask and cross-attends to the scene. Agent
// identity reaches the decoder through each agent's own encoder output row,
// so identical agents get identical treatment by construction.

#ifndef MSL_MODEL_HPP_
#define MSL_MODEL_HPP_

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msl/codec.hpp"
#include "msl/compute.hpp"
#include "msl/io.hpp"
#include "msl/nn.hpp"
#include "msl/random.hpp"
#include "msl/scene.hpp"

namespace msl {

struct ModelConfig {
  ModelShape shape;
  TokenVocab vocab;
  int num_modeled = 8;
  int t_tokens = 22;
  bool with_route = false;

  int heads() const { return static_cast<int>(std::max<i64>(1, shape.d / 16)); }

  void validate() const {
    shape.validate();
    vocab.validate();
    const i64 expected_e = with_route ? kSceneTokensWithRoute : kSceneTokens;
    if (shape.E != expected_e) {
      throw std::invalid_argument("ModelConfig: shape.E must equal the scene token budget");
    }
    if (shape.D_q != i64(num_modeled) * t_tokens) {
      throw std::invalid_argument("ModelConfig: shape.D_q must equal num_modeled * t_tokens");
    }
    if (shape.d % heads() != 0) {
      throw std::invalid_argument("ModelConfig: head count must divide width");
    }
  }
};

struct LossBreakdown {
  double total = 0.0;
  std::array<double, kNumAgentTypes> per_type{};       // mean cross-entropy per agent type
  std::array<int, kNumAgentTypes> type_positions{};    // token positions contributing

  bool finite() const { return std::isfinite(total); }
};

struct JointRollout {
  std::vector<std::vector<int>> tokens;     // [M][T]
  std::vector<std::vector<double>> log_probs;  // [M][T], each <= 0
  std::vector<std::vector<Vec2>> decoded;   // [M][T + 2], seeds included
};

// Encoder output for one scene, reusable across many decoder calls.
struct SceneEncoding {
  Mat memory;                       // [E, d]
  std::vector<uint8_t> key_valid;   // [E]
  std::vector<int> binding;         // memory row for each modeled agent
};

class JointModel {
 public:
  JointModel(const ModelConfig& config, u64 seed) : cfg_(config) {
    cfg_.validate();
    build();
    Rng rng(mix_seed(seed, 0xA11CE));
    ps_.init(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  u64 layer_param_count() const { return ps_.count_of_kind(ParamKind::kLayer); }

  // ---------------------------------------------------------------------
  // Scene encoding

  SceneEncoding encode_scene(const SceneContext& ctx) {
    ctx.validate();
    SceneEncoding enc;
    Mat x = scene_tokens(ctx, &enc.key_valid);
    const Mat mask = key_mask(static_cast<int>(x.rows()), enc.key_valid);
    for (auto& layer : enc_layers_) x = layer.forward(ps_, x, mask);
    enc.memory = enc_final_.forward(x);
    for (int idx : ctx.modeled) enc.binding.push_back(1 + idx);
    return enc;
  }

  // ---------------------------------------------------------------------
  // Decoder queries

  // Logits for each modeled agent's next token after a common prefix length.
  // prefix[a] holds agent a's tokens so far; all must share one length t
  // with t < T. Returns [M, V^2].
  Mat next_token_logits(const SceneEncoding& enc, const std::vector<std::vector<int>>& prefix) {
    const int M = cfg_.num_modeled;
    if (static_cast<int>(prefix.size()) != M) {
      throw std::invalid_argument("next_token_logits: prefix agent count");
    }
    const int t = prefix.empty() ? 0 : static_cast<int>(prefix[0].size());
    for (const auto& p : prefix) {
      if (static_cast<int>(p.size()) != t) {
        throw std::invalid_argument("next_token_logits: ragged prefix");
      }
    }
    if (t >= cfg_.t_tokens) throw std::invalid_argument("next_token_logits: prefix too long");
    if (static_cast<int>(enc.binding.size()) != M) {
      throw std::invalid_argument("next_token_logits: scene modeled count");
    }
    Mat out = decode(enc, prefix, t + 1, enc.binding);
    Mat logits(M, cfg_.vocab.vocab_size());
    for (int a = 0; a < M; ++a) {
      logits.row(a) = out.row(a * (t + 1) + t) * ps_.mat(unembed_);
    }
    return logits;
  }

  // ---------------------------------------------------------------------
  // Teacher forcing

  // Logits at every teacher-forced position, [M*T, V^2]; row a*T + t predicts
  // agent a's token t.
  Mat teacher_logits(const Example& ex) {
    Prep p = prepare(ex);
    Mat out = decode(p.enc, p.teacher, cfg_.t_tokens, p.enc.binding);
    return out * ps_.mat(unembed_);
  }

  LossBreakdown teacher_forced_loss(const Example& ex, bool with_grad = false) {
    Prep p = prepare(ex);
    const SceneContext& ctx = ex.context;
    const int M = cfg_.num_modeled;
    const int T = cfg_.t_tokens;
    const int V2 = cfg_.vocab.vocab_size();
    Mat out = decode(p.enc, p.teacher, T, p.enc.binding);  // [M*T, d]
    Mat logits = out * ps_.mat(unembed_);                  // readout, not metered

    LossBreakdown lb;
    Mat dlogits;
    if (with_grad) dlogits = Mat::Zero(logits.rows(), logits.cols());
    const double inv_positions = 1.0 / double(M * T);
    for (int a = 0; a < M; ++a) {
      const int type = static_cast<int>(ctx.agent_info[ctx.modeled[a]].type);
      for (int t = 0; t < T; ++t) {
        const int row = a * T + t;
        const int target = p.targets[a]->tokens[t];
        if (target < 0 || target >= V2) throw std::invalid_argument("loss: token out of range");
        const double mx = logits.row(row).maxCoeff();
        const Eigen::ArrayXd ex_row = (logits.row(row).array() - mx).exp().transpose();
        const double z = ex_row.sum();
        const double ce = std::log(z) + mx - logits(row, target);
        lb.total += ce;
        lb.per_type[type] += ce;
        ++lb.type_positions[type];
        if (with_grad) {
          dlogits.row(row) = (ex_row / z).matrix().transpose() * inv_positions;
          dlogits(row, target) -= inv_positions;
        }
      }
    }
    lb.total *= inv_positions;
    for (int k = 0; k < kNumAgentTypes; ++k) {
      if (lb.type_positions[k] > 0) lb.per_type[k] /= lb.type_positions[k];
    }

    if (with_grad) {
      ps_.grad(unembed_) += out.transpose() * dlogits;
      Mat dout = dlogits * ps_.mat(unembed_).transpose();
      Mat dmemory = Mat::Zero(p.enc.memory.rows(), p.enc.memory.cols());
      decode_backward(dout, &dmemory, p.enc.binding);
      Mat dx = enc_final_.backward(dmemory);
      for (int l = static_cast<int>(enc_layers_.size()) - 1; l >= 0; --l) {
        dx = enc_layers_[l].backward(ps_, dx);
      }
      scene_tokens_backward(ctx, dx);
    }
    return lb;
  }

  // ---------------------------------------------------------------------
  // Sampling

  JointRollout sample_one(const SceneEncoding& enc, const Example& ex, double temperature,
                          u64 seed) {
    const int M = cfg_.num_modeled;
    const int T = cfg_.t_tokens;
    Rng rng(seed);
    JointRollout roll;
    roll.tokens.assign(M, {});
    roll.log_probs.assign(M, {});
    std::vector<std::vector<int>> prefix(M);
    for (int t = 0; t < T; ++t) {
      Mat logits = next_token_logits(enc, prefix);
      for (int a = 0; a < M; ++a) {
        int choice;
        double logp;
        pick_token(logits.row(a), temperature, rng, &choice, &logp);
        prefix[a].push_back(choice);
        roll.tokens[a].push_back(choice);
        roll.log_probs[a].push_back(logp);
      }
    }
    for (int a = 0; a < M; ++a) {
      const AgentTarget& tgt = ex.target_for(ex.context.modeled[a]);
      roll.decoded.push_back(decode_track(roll.tokens[a], tgt.track[0], tgt.track[1], cfg_.vocab));
    }
    return roll;
  }

  // R rollouts with per-rollout independent streams: rollout r depends only
  // on (seed, r), so the first R' of R rollouts equal an R'-sample run.
  std::vector<JointRollout> sample_rollouts(const Example& ex, int num_samples, double temperature,
                                            u64 seed) {
    if (num_samples < 1) throw std::invalid_argument("sample_rollouts: need >= 1 sample");
    SceneEncoding enc = encode_scene(ex.context);
    std::vector<JointRollout> out;
    out.reserve(num_samples);
    for (int r = 0; r < num_samples; ++r) {
      out.push_back(sample_one(enc, ex, temperature, mix_seed(seed, u64(r), 0x5A)));
    }
    return out;
  }

  // ---------------------------------------------------------------------
  // Checkpointing: raw little-endian doubles plus a JSON manifest.

  void save(const std::string& stem, i64 step, u64 seed) const {
    const auto& vals = ps_.values();
    std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("cannot write checkpoint: " + stem + ".bin");
    bin.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(double)));
    bin.close();
    nlohmann::json manifest = {
        {"version", 1},
        {"shape",
         {{"n", cfg_.shape.n},
          {"m", cfg_.shape.m},
          {"d", cfg_.shape.d},
          {"E", cfg_.shape.E},
          {"D_q", cfg_.shape.D_q}}},
        {"vocab",
         {{"bins_per_axis", cfg_.vocab.bins_per_axis},
          {"delta_max", cfg_.vocab.delta_max},
          {"token_dt", cfg_.vocab.token_dt}}},
        {"num_modeled", cfg_.num_modeled},
        {"t_tokens", cfg_.t_tokens},
        {"with_route", cfg_.with_route},
        {"param_count", vals.size()},
        {"step", step},
        {"seed", seed},
    };
    write_text_file(stem + ".json", manifest.dump(2) + "\n");
  }

  void load(const std::string& stem) {
    const auto manifest = nlohmann::json::parse(read_text_file(stem + ".json"));
    if (manifest.at("version").get<int>() != 1) throw std::runtime_error("checkpoint version");
    const auto& js = manifest.at("shape");
    if (js.at("n").get<i64>() != cfg_.shape.n || js.at("m").get<i64>() != cfg_.shape.m ||
        js.at("d").get<i64>() != cfg_.shape.d || js.at("E").get<i64>() != cfg_.shape.E ||
        js.at("D_q").get<i64>() != cfg_.shape.D_q) {
      throw std::runtime_error("checkpoint shape mismatch");
    }
    if (manifest.at("param_count").get<size_t>() != ps_.size()) {
      throw std::runtime_error("checkpoint parameter count mismatch");
    }
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot read checkpoint: " + stem + ".bin");
    bin.read(reinterpret_cast<char*>(ps_.values().data()),
             static_cast<std::streamsize>(ps_.size() * sizeof(double)));
    if (static_cast<size_t>(bin.gcount()) != ps_.size() * sizeof(double)) {
      throw std::runtime_error("checkpoint truncated");
    }
  }

 private:
  struct Prep {
    SceneEncoding enc;
    std::vector<std::vector<int>> teacher;       // decoder inputs, length T-1 per agent
    std::vector<const AgentTarget*> targets;
  };

  Prep prepare(const Example& ex) {
    const SceneContext& ctx = ex.context;
    const int M = static_cast<int>(ctx.modeled.size());
    if (M != cfg_.num_modeled) throw std::invalid_argument("loss: modeled count mismatch");
    const int T = cfg_.t_tokens;
    Prep p;
    p.enc = encode_scene(ctx);
    p.teacher.resize(M);
    p.targets.resize(M);
    for (int a = 0; a < M; ++a) {
      p.targets[a] = &ex.target_for(ctx.modeled[a]);
      if (static_cast<int>(p.targets[a]->tokens.size()) != T) {
        throw std::invalid_argument("loss: target length mismatch");
      }
      p.teacher[a].assign(p.targets[a]->tokens.begin(), p.targets[a]->tokens.end() - 1);
    }
    return p;
  }

  void build() {
    const int d = static_cast<int>(cfg_.shape.d);
    const int h = cfg_.heads();
    const int mult = static_cast<int>(cfg_.shape.ffn_mult);
    const double emb_std = 1.0 / std::sqrt(double(d));
    null_token_ = ps_.add("embed.null", 1, d, ParamKind::kEmbedding, emb_std);
    agent_proj_.build(ps_, "embed.agent", kAgentFeatureDim, d, ParamKind::kEmbedding);
    map_proj_.build(ps_, "embed.map", kMapFeatureDim, d, ParamKind::kEmbedding);
    light_proj_.build(ps_, "embed.light", kLightFeatureDim, d, ParamKind::kEmbedding);
    if (cfg_.with_route) {
      route_proj_.build(ps_, "embed.route", kMapFeatureDim, d, ParamKind::kEmbedding);
    }
    token_embed_ = ps_.add("embed.token", cfg_.vocab.vocab_size(), d, ParamKind::kEmbedding, emb_std);
    bos_embed_ = ps_.add("embed.bos", 1, d, ParamKind::kEmbedding, emb_std);
    time_embed_ = ps_.add("embed.time", cfg_.t_tokens, d, ParamKind::kEmbedding, emb_std);
    unembed_ = ps_.add("embed.readout", d, cfg_.vocab.vocab_size(), ParamKind::kEmbedding, emb_std);

    enc_layers_.resize(cfg_.shape.n);
    for (size_t l = 0; l < enc_layers_.size(); ++l) {
      enc_layers_[l].build(ps_, "enc." + std::to_string(l), d, h, mult);
    }
    dec_layers_.resize(cfg_.shape.m);
    for (size_t l = 0; l < dec_layers_.size(); ++l) {
      dec_layers_[l].build(ps_, "dec." + std::to_string(l), d, h, mult);
    }
  }

  // Raw scene features -> embedded tokens. Row layout: null, agents, map,
  // lights, [route]. Invalid slots embed to zero rows and are masked as keys.
  Mat scene_tokens(const SceneContext& ctx, std::vector<uint8_t>* key_valid) {
    const int d = static_cast<int>(cfg_.shape.d);
    const int E = static_cast<int>(cfg_.shape.E);
    key_valid->assign(E, 0);
    (*key_valid)[0] = 1;

    agent_feat_ = Mat::Zero(kMaxAgents, kAgentFeatureDim);
    map_feat_ = Mat::Zero(kMaxMapSegments, kMapFeatureDim);
    light_feat_ = Mat::Zero(kMaxLights, kLightFeatureDim);
    for (int i = 0; i < ctx.num_agents(); ++i) {
      bool any_valid = false;
      for (const AgentSnapshot& s : ctx.agent_history[i]) any_valid = any_valid || s.valid;
      if (!any_valid) continue;
      const auto f = agent_features(ctx, i);
      for (int j = 0; j < kAgentFeatureDim; ++j) agent_feat_(i, j) = f[j];
      (*key_valid)[1 + i] = 1;
    }
    for (size_t i = 0; i < ctx.roadgraph.size(); ++i) {
      const auto f = map_features(ctx.roadgraph[i]);
      for (int j = 0; j < kMapFeatureDim; ++j) map_feat_(static_cast<int>(i), j) = f[j];
      (*key_valid)[1 + kMaxAgents + i] = 1;
    }
    for (size_t i = 0; i < ctx.traffic_lights.size(); ++i) {
      const auto f = light_features(ctx.traffic_lights[i]);
      for (int j = 0; j < kLightFeatureDim; ++j) light_feat_(static_cast<int>(i), j) = f[j];
      (*key_valid)[1 + kMaxAgents + kMaxMapSegments + i] = 1;
    }

    Mat x = Mat::Zero(E, d);
    x.row(0) = ps_.mat(null_token_);
    x.middleRows(1, kMaxAgents) = agent_proj_.forward(ps_, agent_feat_);
    x.middleRows(1 + kMaxAgents, kMaxMapSegments) = map_proj_.forward(ps_, map_feat_);
    x.middleRows(1 + kMaxAgents + kMaxMapSegments, kMaxLights) =
        light_proj_.forward(ps_, light_feat_);
    if (cfg_.with_route) {
      route_feat_ = Mat::Zero(kMaxRouteSegments, kMapFeatureDim);
      for (size_t i = 0; i < ctx.route.size(); ++i) {
        const auto f = map_features(ctx.route[i]);
        for (int j = 0; j < kMapFeatureDim; ++j) route_feat_(static_cast<int>(i), j) = f[j];
        (*key_valid)[kSceneTokens + i] = 1;
      }
      x.middleRows(kSceneTokens, kMaxRouteSegments) = route_proj_.forward(ps_, route_feat_);
    }
    return x;
  }

  void scene_tokens_backward(const SceneContext& ctx, const Mat& dx) {
    (void)ctx;
    ps_.grad(null_token_) += dx.row(0);
    agent_proj_.backward(ps_, dx.middleRows(1, kMaxAgents));
    map_proj_.backward(ps_, dx.middleRows(1 + kMaxAgents, kMaxMapSegments));
    light_proj_.backward(ps_, dx.middleRows(1 + kMaxAgents + kMaxMapSegments, kMaxLights));
    if (cfg_.with_route) {
      route_proj_.backward(ps_, dx.middleRows(kSceneTokens, kMaxRouteSegments));
    }
  }

  static Mat key_mask(int rows, const std::vector<uint8_t>& key_valid) {
    Mat mask = Mat::Zero(rows, static_cast<int>(key_valid.size()));
    for (size_t k = 0; k < key_valid.size(); ++k) {
      if (!key_valid[k]) mask.col(static_cast<int>(k)).setConstant(nn::kNegInf);
    }
    return mask;
  }

  // Decoder forward over per-agent prefixes of common length t_len. Inputs at
  // position (a, t): previous token embedding (or begin marker), time
  // embedding, and the bound agent's scene row. Saves activations for one
  // subsequent backward.
  Mat decode(const SceneEncoding& enc, const std::vector<std::vector<int>>& prev_tokens, int t_len,
             const std::vector<int>& binding) {
    const int M = cfg_.num_modeled;
    const int d = static_cast<int>(cfg_.shape.d);
    const int rows = M * t_len;
    dec_t_len_ = t_len;
    Mat x(rows, d);
    for (int a = 0; a < M; ++a) {
      for (int t = 0; t < t_len; ++t) {
        const int row = a * t_len + t;
        Eigen::RowVectorXd e = t == 0 ? Eigen::RowVectorXd(ps_.mat(bos_embed_).row(0))
                                      : Eigen::RowVectorXd(ps_.mat(token_embed_).row(prev_tokens[a][t - 1]));
        e += ps_.mat(time_embed_).row(t);
        e += enc.memory.row(binding[a]);
        x.row(row) = e;
      }
    }
    dec_prev_tokens_ = prev_tokens;

    Mat causal = Mat::Zero(rows, rows);
    for (int aq = 0; aq < M; ++aq) {
      for (int tq = 0; tq < t_len; ++tq) {
        for (int ak = 0; ak < M; ++ak) {
          for (int tk = tq + 1; tk < t_len; ++tk) {
            causal(aq * t_len + tq, ak * t_len + tk) = nn::kNegInf;
          }
        }
      }
    }
    const Mat mem_mask = key_mask(rows, enc.key_valid);
    for (auto& layer : dec_layers_) x = layer.forward(ps_, x, causal, enc.memory, mem_mask);
    return dec_final_.forward(x);
  }

  void decode_backward(const Mat& dout, Mat* dmemory, const std::vector<int>& binding) {
    Mat dx = dec_final_.backward(dout);
    for (int l = static_cast<int>(dec_layers_.size()) - 1; l >= 0; --l) {
      dx = dec_layers_[l].backward(ps_, dx, dmemory);
    }
    const int M = cfg_.num_modeled;
    const int t_len = dec_t_len_;
    for (int a = 0; a < M; ++a) {
      for (int t = 0; t < t_len; ++t) {
        const int row = a * t_len + t;
        if (t == 0) {
          ps_.grad(bos_embed_) += dx.row(row);
        } else {
          ps_.grad(token_embed_).row(dec_prev_tokens_[a][t - 1]) += dx.row(row);
        }
        ps_.grad(time_embed_).row(t) += dx.row(row);
        dmemory->row(binding[a]) += dx.row(row);
      }
    }
  }

  static void pick_token(const Eigen::RowVectorXd& logits, double temperature, Rng& rng,
                         int* choice, double* logp) {
    const int n = static_cast<int>(logits.size());
    const double mx = logits.maxCoeff();
    Eigen::ArrayXd logsoft = logits.array().transpose() - mx;
    logsoft -= std::log(logsoft.exp().sum());
    if (temperature <= 1e-9) {
      int best = 0;
      for (int i = 1; i < n; ++i) {
        if (logits(i) > logits(best)) best = i;
      }
      *choice = best;
      *logp = logsoft(best);
      return;
    }
    Eigen::ArrayXd scaled = (logits.array().transpose() - mx) / temperature;
    Eigen::ArrayXd p = scaled.exp();
    p /= p.sum();
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      acc += p(i);
      if (u < acc) {
        pick = i;
        break;
      }
    }
    *choice = pick;
    *logp = logsoft(pick);
  }

  ModelConfig cfg_;
  ParamStore ps_;
  int null_token_ = -1, token_embed_ = -1, bos_embed_ = -1, time_embed_ = -1, unembed_ = -1;
  nn::Linear agent_proj_, map_proj_, light_proj_, route_proj_;
  std::vector<nn::EncoderLayer> enc_layers_;
  std::vector<nn::DecoderLayer> dec_layers_;
  nn::LayerNorm enc_final_, dec_final_;

  // Forward caches (single-threaded reuse between forward and backward).
  Mat agent_feat_, map_feat_, light_feat_, route_feat_;
  std::vector<std::vector<int>> dec_prev_tokens_;
  int dec_t_len_ = 0;
};

}  // namespace msl

#endif  // MSL_MODEL_HPP_
