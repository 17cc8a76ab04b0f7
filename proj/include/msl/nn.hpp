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

// Minimal dense neural-net toolkit: a flat tagged parameter store, bias-free
// linear maps, parameter-free layer normalization, erf GELU, and multi-head
// attention with explicit backward passes. Forward multiply-adds of the
// transformer layers are metered so measured compute can be reconciled
// against the closed-form ledger exactly; embedding and readout projections
// are deliberately left out of the meter, matching the ledger's convention.

#ifndef MSL_NN_HPP_
#define MSL_NN_HPP_

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msl/common.hpp"
#include "msl/random.hpp"

namespace msl {

using Mat = Eigen::MatrixXd;

// Thread-local forward multiply-add meter.
class FlopMeter {
 public:
  static u64& count() {
    thread_local u64 c = 0;
    return c;
  }
  static void reset() { count() = 0; }
  static u64 read() { return count(); }
};

enum class ParamKind {
  kLayer,      // attention and feed-forward weights, counted in N
  kEmbedding,  // input projections, token/positional tables, readout
};

class ParamStore {
 public:
  struct Entry {
    std::string name;
    size_t offset = 0;
    int rows = 0, cols = 0;
    ParamKind kind = ParamKind::kLayer;
    double init_std = 0.0;
  };

  int add(const std::string& name, int rows, int cols, ParamKind kind, double init_std) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("ParamStore: bad shape for " + name);
    Entry e{name, values_.size(), rows, cols, kind, init_std};
    entries_.push_back(e);
    values_.resize(values_.size() + size_t(rows) * cols, 0.0);
    grads_.resize(values_.size(), 0.0);
    return static_cast<int>(entries_.size()) - 1;
  }

  void init(Rng& rng) {
    for (const Entry& e : entries_) {
      double* p = values_.data() + e.offset;
      for (size_t i = 0; i < size_t(e.rows) * e.cols; ++i) p[i] = e.init_std * rng.normal();
    }
  }

  Eigen::Map<Mat> mat(int handle) {
    const Entry& e = entries_.at(handle);
    return Eigen::Map<Mat>(values_.data() + e.offset, e.rows, e.cols);
  }
  Eigen::Map<const Mat> mat(int handle) const {
    const Entry& e = entries_.at(handle);
    return Eigen::Map<const Mat>(values_.data() + e.offset, e.rows, e.cols);
  }
  Eigen::Map<Mat> grad(int handle) {
    const Entry& e = entries_.at(handle);
    return Eigen::Map<Mat>(grads_.data() + e.offset, e.rows, e.cols);
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grads() { return grads_; }
  size_t size() const { return values_.size(); }
  void zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  u64 count_of_kind(ParamKind kind) const {
    u64 n = 0;
    for (const Entry& e : entries_) {
      if (e.kind == kind) n += u64(e.rows) * e.cols;
    }
    return n;
  }

  bool kind_of(int handle, ParamKind kind) const { return entries_.at(handle).kind == kind; }

 private:
  std::vector<Entry> entries_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

namespace nn {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// y = x * W, with the forward multiply-adds metered for layer weights.
struct Linear {
  int w = -1;
  bool metered = true;
  Mat x_cache;

  void build(ParamStore& ps, const std::string& name, int in, int out, ParamKind kind,
             double init_std = -1.0) {
    metered = kind == ParamKind::kLayer;
    w = ps.add(name, in, out, kind, init_std > 0.0 ? init_std : 1.0 / std::sqrt(double(in)));
  }

  Mat forward(ParamStore& ps, const Mat& x) {
    x_cache = x;
    if (metered) FlopMeter::count() += u64(x.rows()) * x.cols() * ps.mat(w).cols();
    return x * ps.mat(w);
  }

  Mat backward(ParamStore& ps, const Mat& dy) {
    ps.grad(w) += x_cache.transpose() * dy;
    return dy * ps.mat(w).transpose();
  }
};

// Parameter-free pre-norm: zero mean, unit variance per row. Keeping it
// parameter-free makes the trainable layer count match the ledger formula
// with no normalization remainder.
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Mat xhat;
  Eigen::VectorXd inv_std;

  Mat forward(const Mat& x) {
    Eigen::VectorXd mean = x.rowwise().mean();
    Mat centered = x.colwise() - mean;
    Eigen::VectorXd var = centered.array().square().rowwise().mean().matrix();
    inv_std = (var.array() + kEps).rsqrt().matrix();
    xhat = (centered.array().colwise() * inv_std.array()).matrix();
    return xhat;
  }

  Mat backward(const Mat& dy) const {
    Eigen::VectorXd mean_dy = dy.rowwise().mean();
    Eigen::VectorXd mean_dy_xhat = (dy.array() * xhat.array()).rowwise().mean().matrix();
    Mat dx = dy;
    dx.colwise() -= mean_dy;
    dx.array() -= xhat.array().colwise() * mean_dy_xhat.array();
    dx.array().colwise() *= inv_std.array();
    return dx;
  }
};

inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

struct Gelu {
  Mat x_cache;
  Mat forward(const Mat& x) {
    x_cache = x;
    return x.unaryExpr([](double v) { return gelu_scalar(v); });
  }
  Mat backward(const Mat& dy) const {
    return (dy.array() * x_cache.unaryExpr([](double v) { return gelu_grad_scalar(v); }).array())
        .matrix();
  }
};

// Row softmax over scores with an additive mask (0 or -inf). Masked keys get
// exactly zero probability; a fully masked row is a caller bug.
inline Mat masked_softmax(const Mat& scores, const Mat& mask) {
  Mat z = scores + mask;
  Mat p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    if (!std::isfinite(m)) {
      if (m == kNegInf) throw std::logic_error("masked_softmax: fully masked row");
      throw std::runtime_error("masked_softmax: non-finite attention scores");
    }
    Eigen::Array<double, 1, Eigen::Dynamic> e = (z.row(r).array() - m).exp();
    p.row(r) = (e / e.sum()).matrix();
  }
  return p;
}

// Multi-head softmax attention, usable for self- (xq == xkv) and
// cross-attention. The additive mask has shape [Tq, Tk].
struct Attention {
  Linear wq, wk, wv, wo;
  int heads = 1, dh = 1, d = 1;
  Mat q_cache, k_cache, v_cache;
  std::vector<Mat> p_cache;  // per-head post-softmax probabilities

  void build(ParamStore& ps, const std::string& name, int width, int num_heads) {
    if (num_heads < 1 || width % num_heads != 0) {
      throw std::invalid_argument("Attention: heads must divide width");
    }
    d = width;
    heads = num_heads;
    dh = width / num_heads;
    wq.build(ps, name + ".wq", width, width, ParamKind::kLayer);
    wk.build(ps, name + ".wk", width, width, ParamKind::kLayer);
    wv.build(ps, name + ".wv", width, width, ParamKind::kLayer);
    wo.build(ps, name + ".wo", width, width, ParamKind::kLayer);
  }

  Mat forward(ParamStore& ps, const Mat& xq, const Mat& xkv, const Mat& mask) {
    q_cache = wq.forward(ps, xq);
    k_cache = wk.forward(ps, xkv);
    v_cache = wv.forward(ps, xkv);
    const double scale = 1.0 / std::sqrt(double(dh));
    const Eigen::Index tq = xq.rows(), tk = xkv.rows();
    Mat concat(tq, d);
    p_cache.assign(heads, Mat());
    for (int h = 0; h < heads; ++h) {
      auto qh = q_cache.middleCols(h * dh, dh);
      auto kh = k_cache.middleCols(h * dh, dh);
      auto vh = v_cache.middleCols(h * dh, dh);
      FlopMeter::count() += 2 * u64(tq) * dh * tk;  // scores and value mix
      Mat scores = (qh * kh.transpose()) * scale;
      p_cache[h] = masked_softmax(scores, mask);
      concat.middleCols(h * dh, dh) = p_cache[h] * vh;
    }
    return wo.forward(ps, concat);
  }

  // Returns the gradient w.r.t. xq; the gradient w.r.t. xkv is accumulated
  // into dxkv (pass the same buffer as dxq's target for self-attention).
  Mat backward(ParamStore& ps, const Mat& dy, Mat* dxkv) {
    Mat dconcat = wo.backward(ps, dy);
    const double scale = 1.0 / std::sqrt(double(dh));
    Mat dq(q_cache.rows(), d), dk(k_cache.rows(), d), dv(v_cache.rows(), d);
    for (int h = 0; h < heads; ++h) {
      auto vh = v_cache.middleCols(h * dh, dh);
      auto qh = q_cache.middleCols(h * dh, dh);
      auto kh = k_cache.middleCols(h * dh, dh);
      const Mat& p = p_cache[h];
      Mat dav = dconcat.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh) = p.transpose() * dav;
      Mat dp = dav * vh.transpose();
      Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum().matrix();
      Mat ds = (p.array() * (dp.colwise() - row_dot).array()).matrix();
      dq.middleCols(h * dh, dh) = (ds * kh) * scale;
      dk.middleCols(h * dh, dh) = (ds.transpose() * qh) * scale;
    }
    Mat dxq = wq.backward(ps, dq);
    *dxkv += wk.backward(ps, dk);
    *dxkv += wv.backward(ps, dv);
    return dxq;
  }
};

struct FeedForward {
  Linear up, down;
  Gelu act;

  void build(ParamStore& ps, const std::string& name, int width, int mult) {
    up.build(ps, name + ".up", width, width * mult, ParamKind::kLayer);
    down.build(ps, name + ".down", width * mult, width, ParamKind::kLayer);
  }

  Mat forward(ParamStore& ps, const Mat& x) {
    return down.forward(ps, act.forward(up.forward(ps, x)));
  }

  Mat backward(ParamStore& ps, const Mat& dy) {
    return up.backward(ps, act.backward(down.backward(ps, dy)));
  }
};

struct EncoderLayer {
  LayerNorm ln1, ln2;
  Attention attn;
  FeedForward ffn;

  void build(ParamStore& ps, const std::string& name, int width, int heads, int mult) {
    attn.build(ps, name + ".attn", width, heads);
    ffn.build(ps, name + ".ffn", width, mult);
  }

  Mat forward(ParamStore& ps, const Mat& x, const Mat& mask) {
    Mat h1 = ln1.forward(x);
    Mat x2 = x + attn.forward(ps, h1, h1, mask);
    return x2 + ffn.forward(ps, ln2.forward(x2));
  }

  Mat backward(ParamStore& ps, const Mat& dy) {
    Mat dx2 = dy + ln2.backward(ffn.backward(ps, dy));
    Mat dh1 = Mat::Zero(dx2.rows(), dx2.cols());
    Mat dq = attn.backward(ps, dx2, &dh1);
    dh1 += dq;
    return dx2 + ln1.backward(dh1);
  }
};

struct DecoderLayer {
  LayerNorm ln1, ln2, ln3;
  Attention self_attn, cross_attn;
  FeedForward ffn;

  void build(ParamStore& ps, const std::string& name, int width, int heads, int mult) {
    self_attn.build(ps, name + ".self", width, heads);
    cross_attn.build(ps, name + ".cross", width, heads);
    ffn.build(ps, name + ".ffn", width, mult);
  }

  Mat forward(ParamStore& ps, const Mat& x, const Mat& causal_mask, const Mat& memory,
              const Mat& memory_mask) {
    Mat h1 = ln1.forward(x);
    Mat x2 = x + self_attn.forward(ps, h1, h1, causal_mask);
    Mat x3 = x2 + cross_attn.forward(ps, ln2.forward(x2), memory, memory_mask);
    return x3 + ffn.forward(ps, ln3.forward(x3));
  }

  // dmemory accumulates the gradient flowing into the encoder output.
  Mat backward(ParamStore& ps, const Mat& dy, Mat* dmemory) {
    Mat dx3 = dy + ln3.backward(ffn.backward(ps, dy));
    Mat dq2 = cross_attn.backward(ps, dx3, dmemory);
    Mat dx2 = dx3 + ln2.backward(dq2);
    Mat dh1 = Mat::Zero(dx2.rows(), dx2.cols());
    Mat dq1 = self_attn.backward(ps, dx2, &dh1);
    dh1 += dq1;
    return dx2 + ln1.backward(dh1);
  }
};

}  // namespace nn
}  // namespace msl

#endif  // MSL_NN_HPP_
