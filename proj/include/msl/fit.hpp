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

// Scaling analysis: iso-FLOP banding, parabola fits in log x, power-law fits
// with and without an additive constant, first-order error propagation with
// +-3 sigma bands, compute-optimal exponent extraction, the L(N, D) surface
// fit, budget allocation, and iso-loss data-equivalence curves.
//
// All fitters sort their inputs, so results are invariant to the order in
// which runs are supplied.

#ifndef MSL_FIT_HPP_
#define MSL_FIT_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msl/common.hpp"
#include "msl/compute.hpp"
#include "msl/io.hpp"

namespace msl {

// ---------------------------------------------------------------------------
// Run records: one row per training run, the unit of scaling analysis.

struct RunRecord {
  std::string run_id;
  ModelShape shape;
  u64 seed = 0;
  u64 N = 0;        // non-embedding parameter count
  u64 D = 0;        // training examples consumed
  u64 C = 0;        // training FLOPs, = forward_flops_per_example(shape) * D
  double eval_loss = 0.0;
  std::array<double, kNumAgentTypes> per_type_losses{};
  std::map<std::string, double> metrics;  // minADE, wADE, minFDE, miss_rate, mean_ap, ...
  double miles = 0.0;                     // synthetic distance traveled in the training data
  i64 budget_index = -1;                  // sweep budget slot, -1 when standalone

  void validate() const {
    shape.validate();
    if (param_count(shape) != N) throw std::invalid_argument("RunRecord: N != param_count(shape)");
    if (train_flops(shape, D) != C) throw std::invalid_argument("RunRecord: C != per_example * D");
    auto check_loss = [](double v) {
      if (!std::isfinite(v) || v <= 0.0) {
        throw std::invalid_argument("RunRecord: losses must be finite and > 0");
      }
    };
    check_loss(eval_loss);
    // Zero marks an agent type absent from the eval set.
    for (double v : per_type_losses) {
      if (v != 0.0) check_loss(v);
    }
  }

  Json to_json() const {
    Json j;
    j["run_id"] = run_id;
    j["shape"] = {{"n", shape.n}, {"m", shape.m},   {"d", shape.d},
                  {"E", shape.E}, {"D_q", shape.D_q}};
    j["seed"] = seed;
    j["N"] = N;
    j["D"] = D;
    j["C"] = C;
    j["eval_loss"] = round6(eval_loss);
    Json per;
    for (int t = 0; t < kNumAgentTypes; ++t) {
      per[agent_type_name(static_cast<AgentType>(t))] = round6(per_type_losses[t]);
    }
    j["per_type_losses"] = per;
    Json met;
    for (const auto& [k, v] : metrics) met[k] = round6(v);
    j["metrics"] = met;
    j["miles"] = round6(miles);
    j["budget_index"] = budget_index;
    return j;
  }

  static RunRecord from_json(const Json& j) {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    const Json& s = j.at("shape");
    r.shape.n = s.at("n").get<i64>();
    r.shape.m = s.at("m").get<i64>();
    r.shape.d = s.at("d").get<i64>();
    r.shape.E = s.at("E").get<i64>();
    r.shape.D_q = s.at("D_q").get<i64>();
    r.seed = j.at("seed").get<u64>();
    r.N = j.at("N").get<u64>();
    r.D = j.at("D").get<u64>();
    r.C = j.at("C").get<u64>();
    r.eval_loss = j.at("eval_loss").get<double>();
    for (int t = 0; t < kNumAgentTypes; ++t) {
      r.per_type_losses[t] =
          j.at("per_type_losses").at(agent_type_name(static_cast<AgentType>(t))).get<double>();
    }
    if (j.contains("metrics")) {
      for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
    }
    r.miles = j.at("miles").get<double>();
    r.budget_index = j.value("budget_index", i64(-1));
    return r;
  }
};

// ---------------------------------------------------------------------------
// Fit results

enum class FitForm { kParabolaLogX, kPower, kPowerConst, kSurface };

inline const char* fit_form_name(FitForm f) {
  switch (f) {
    case FitForm::kParabolaLogX: return "parabola-logx";
    case FitForm::kPower: return "power";
    case FitForm::kPowerConst: return "power+const";
    case FitForm::kSurface: return "chinchilla-surface";
  }
  throw std::invalid_argument("unknown fit form");
}

struct FitResult {
  FitForm form = FitForm::kPower;
  // parabola-logx: {a, b = log x_opt, c = L_opt} for f(z) = a (z - b)^2 + c, z = ln x
  // power:         {a, b}               for f(x) = a x^b
  // power+const:   {a, b, c}            for f(x) = a x^b + c
  // surface:       {E, A, alpha, B, beta} for L(N, D) = E + A/N^alpha + B/D^beta
  std::vector<double> params;
  Eigen::MatrixXd covariance;
  double residual_variance = 0.0;  // SSR / (n - p), 0 on exact interpolation
  double ssr = 0.0;
  int sample_count = 0;
  bool converged = true;
  bool degenerate = false;    // parabola with a <= 0: no interior minimum
  bool apex_interior = true;  // parabola apex inside the fitted x range
  std::string note;

  double eval(double x) const {
    switch (form) {
      case FitForm::kParabolaLogX: {
        const double z = std::log(x);
        return params[0] * (z - params[1]) * (z - params[1]) + params[2];
      }
      case FitForm::kPower:
        return params[0] * std::pow(x, params[1]);
      case FitForm::kPowerConst:
        return params[0] * std::pow(x, params[1]) + params[2];
      case FitForm::kSurface:
        throw std::invalid_argument("surface form needs eval_surface(N, D)");
    }
    throw std::invalid_argument("unknown fit form");
  }

  double eval_surface(double N, double D) const {
    if (form != FitForm::kSurface) throw std::invalid_argument("not a surface fit");
    return params[0] + params[1] * std::pow(N, -params[2]) + params[3] * std::pow(D, -params[4]);
  }

  Json to_json() const {
    Json j;
    j["form"] = fit_form_name(form);
    Json p = Json::array();
    for (double v : params) p.push_back(round6(v));
    j["params"] = p;
    Json cov = Json::array();
    for (int r = 0; r < covariance.rows(); ++r) {
      Json row = Json::array();
      for (int q = 0; q < covariance.cols(); ++q) row.push_back(covariance(r, q));
      cov.push_back(row);
    }
    j["covariance"] = cov;
    j["residual_variance"] = residual_variance;
    j["ssr"] = ssr;
    j["sample_count"] = sample_count;
    j["converged"] = converged;
    j["degenerate"] = degenerate;
    j["apex_interior"] = apex_interior;
    if (!note.empty()) j["note"] = note;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Iso-FLOP banding

struct IsoFlopBand {
  u64 budget = 0;
  std::vector<RunRecord> runs;
};

struct BandingResult {
  std::vector<IsoFlopBand> bands;  // one per requested budget, input order
  std::vector<RunRecord> unassigned;
  std::vector<u64> empty_budgets;
};

// Assign each run to the budget minimizing |log C - log budget|, provided the
// gap is at most log(1 + rel_tol); everything else lands in `unassigned`.
inline BandingResult band_runs(std::span<const RunRecord> records, std::span<const u64> budgets,
                               double rel_tol) {
  if (records.empty()) throw std::invalid_argument("band_runs: no records");
  if (budgets.empty()) throw std::invalid_argument("band_runs: no budgets");
  if (!(rel_tol >= 0.0)) throw std::invalid_argument("band_runs: rel_tol must be >= 0");
  BandingResult out;
  out.bands.resize(budgets.size());
  for (size_t b = 0; b < budgets.size(); ++b) out.bands[b].budget = budgets[b];
  const double max_gap = std::log1p(rel_tol);
  for (const RunRecord& rec : records) {
    if (rec.C == 0) {
      out.unassigned.push_back(rec);
      continue;
    }
    const double logc = std::log(static_cast<double>(rec.C));
    size_t best = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (size_t b = 0; b < budgets.size(); ++b) {
      const double gap = std::abs(logc - std::log(static_cast<double>(budgets[b])));
      if (gap < best_gap) {
        best_gap = gap;
        best = b;
      }
    }
    if (best_gap <= max_gap + 1e-12) {
      out.bands[best].runs.push_back(rec);
    } else {
      out.unassigned.push_back(rec);
    }
  }
  for (size_t b = 0; b < budgets.size(); ++b) {
    if (out.bands[b].runs.empty()) out.empty_budgets.push_back(budgets[b]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Damped Gauss-Newton core

namespace detail {

// eval(theta, r, J) fills residuals and the Jacobian at theta; returning
// false marks theta infeasible (non-finite model values).
using NlsEval =
    std::function<bool(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)>;

struct NlsOutcome {
  Eigen::VectorXd theta;
  double ssr = std::numeric_limits<double>::infinity();
  bool converged = false;
  Eigen::MatrixXd jtj;
};

inline NlsOutcome damped_gauss_newton(const NlsEval& eval, Eigen::VectorXd theta0,
                                      int num_residuals, int max_iters = 200,
                                      double rel_tol = 1e-10) {
  const int p = static_cast<int>(theta0.size());
  Eigen::VectorXd r(num_residuals);
  Eigen::MatrixXd J(num_residuals, p);
  NlsOutcome out;
  out.theta = theta0;
  out.jtj = Eigen::MatrixXd::Zero(p, p);
  if (!eval(theta0, r, J) || !r.allFinite()) return out;
  double ssr = r.squaredNorm();
  out.ssr = ssr;
  out.jtj = J.transpose() * J;
  double lambda = 1e-3;
  Eigen::VectorXd theta = theta0;
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd jtr = J.transpose() * r;
    bool stepped = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      for (int i = 0; i < p; ++i) {
        damped(i, i) += lambda * std::max(jtj(i, i), 1e-12);
      }
      const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
      const Eigen::VectorXd cand = theta + delta;
      Eigen::VectorXd rc(num_residuals);
      Eigen::MatrixXd Jc(num_residuals, p);
      if (eval(cand, rc, Jc) && rc.allFinite()) {
        const double cssr = rc.squaredNorm();
        if (cssr < ssr) {
          const double rel = (ssr - cssr) / std::max(ssr, 1e-300);
          theta = cand;
          r = rc;
          J = Jc;
          ssr = cssr;
          out.theta = theta;
          out.ssr = ssr;
          out.jtj = J.transpose() * J;
          lambda = std::max(lambda / 10.0, 1e-12);
          stepped = true;
          if (rel < rel_tol) out.converged = true;
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!stepped) {
      // No descent direction survives the damping ladder: local optimum.
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  return out;
}

inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& m) {
  return m.completeOrthogonalDecomposition().pseudoInverse();
}

struct Point {
  double x, y, sigma;
};

inline std::vector<Point> sorted_points(std::span<const double> xs, std::span<const double> ys,
                                        std::span<const double> sigmas) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit: x/y size mismatch");
  if (!sigmas.empty() && sigmas.size() != xs.size()) {
    throw std::invalid_argument("fit: sigma size mismatch");
  }
  std::vector<Point> pts(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    pts[i] = {xs[i], ys[i], sigmas.empty() ? 1.0 : sigmas[i]};
    if (!std::isfinite(pts[i].x) || !std::isfinite(pts[i].y)) {
      throw std::invalid_argument("fit: non-finite point");
    }
  }
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  return pts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parabola fit in z = log x

// Least-squares quadratic in z = ln x, reported as (a, b, c) for
// f(z) = a (z - b)^2 + c, with the covariance of the linear solve pushed
// through the reparameterization Jacobian.
inline FitResult fit_parabola(std::span<const double> xs, std::span<const double> ys) {
  auto pts = detail::sorted_points(xs, ys, {});
  if (pts.size() < 3) throw std::invalid_argument("fit_parabola: need >= 3 points");
  std::vector<double> zs(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].x > 0.0)) throw std::invalid_argument("fit_parabola: x must be > 0");
    zs[i] = std::log(pts[i].x);
  }
  {
    std::vector<double> unique_z = zs;
    unique_z.erase(std::unique(unique_z.begin(), unique_z.end(),
                               [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                   unique_z.end());
    if (unique_z.size() < 3) throw std::invalid_argument("fit_parabola: need >= 3 distinct x");
  }
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = zs[i] * zs[i];
    X(i, 1) = zs[i];
    X(i, 2) = 1.0;
    y(i) = pts[i].y;
  }
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  const double ssr = (X * beta - y).squaredNorm();
  const double s2 = n > 3 ? ssr / (n - 3) : 0.0;
  const Eigen::MatrixXd cov_lin = s2 * detail::pinv(X.transpose() * X);

  const double p = beta(0), q = beta(1), r = beta(2);
  FitResult out;
  out.form = FitForm::kParabolaLogX;
  out.sample_count = n;
  out.ssr = ssr;
  out.residual_variance = s2;
  if (std::abs(p) < 1e-300) {
    out.degenerate = true;
    out.params = {p, 0.0, r};
    out.covariance = Eigen::MatrixXd::Zero(3, 3);
    out.note = "flat quadratic term";
    return out;
  }
  const double a = p;
  const double b = -q / (2.0 * p);
  const double c = r - q * q / (4.0 * p);
  Eigen::Matrix3d Jrep;
  // Rows: d(a, b, c) / d(p, q, r).
  Jrep << 1.0, 0.0, 0.0,
      q / (2.0 * p * p), -1.0 / (2.0 * p), 0.0,
      q * q / (4.0 * p * p), -q / (2.0 * p), 1.0;
  out.params = {a, b, c};
  out.covariance = Jrep * cov_lin * Jrep.transpose();
  out.degenerate = !(a > 0.0);
  out.apex_interior = b >= zs.front() - 1e-12 && b <= zs.back() + 1e-12;
  if (out.degenerate) out.note = "no interior minimum (a <= 0)";
  return out;
}

// ---------------------------------------------------------------------------
// Power-law fit, optionally with an additive constant

// f(x) = a x^b (+ c). Initialized by log-log linear regression, refined by
// damped Gauss-Newton. Optional per-point sigmas give 1/sigma^2 weights.
inline FitResult fit_power(std::span<const double> xs, std::span<const double> ys,
                           bool with_constant, std::span<const double> sigmas = {}) {
  auto pts = detail::sorted_points(xs, ys, sigmas);
  const size_t min_pts = with_constant ? 4 : 3;
  if (pts.size() < min_pts) throw std::invalid_argument("fit_power: too few points");
  for (const auto& pt : pts) {
    if (!(pt.x > 0.0)) throw std::invalid_argument("fit_power: x must be > 0");
    if (!(pt.sigma > 0.0)) throw std::invalid_argument("fit_power: sigma must be > 0");
  }
  const int n = static_cast<int>(pts.size());
  const int p = with_constant ? 3 : 2;
  std::vector<double> w(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) w[i] = 1.0 / (pts[i].sigma * pts[i].sigma);

  // Log-log initialization against y - c0 (sign-aware so decreasing-below-zero
  // data still initializes).
  double miny = std::numeric_limits<double>::infinity();
  for (const auto& pt : pts) miny = std::min(miny, pt.y);
  const double c0 = with_constant ? 0.9 * miny : 0.0;
  double sign = 0.0;
  int usable = 0;
  for (const auto& pt : pts) {
    if (pt.y - c0 > 0) ++usable;
  }
  sign = (usable * 2 >= n) ? 1.0 : -1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& pt : pts) {
    const double v = sign * (pt.y - c0);
    if (v <= 0) continue;
    const double lx = std::log(pt.x), ly = std::log(v);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++cnt;
  }
  double b0 = 0.0, loga0 = 0.0;
  if (cnt >= 2 && std::abs(cnt * sxx - sx * sx) > 1e-12) {
    b0 = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    loga0 = (sy - b0 * sx) / cnt;
  }
  Eigen::VectorXd theta0(p);
  theta0(0) = sign * std::exp(loga0);
  theta0(1) = b0;
  if (with_constant) theta0(2) = c0;

  auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const double a = th(0), b = th(1);
    const double c = with_constant ? th(2) : 0.0;
    for (int i = 0; i < n; ++i) {
      const double xb = std::pow(pts[i].x, b);
      if (!std::isfinite(xb)) return false;
      const double f = a * xb + c;
      const double sw = std::sqrt(w[i]);
      r(i) = sw * (f - pts[i].y);
      J(i, 0) = sw * xb;
      J(i, 1) = sw * a * xb * std::log(pts[i].x);
      if (with_constant) J(i, 2) = sw;
    }
    return true;
  };
  const auto opt = detail::damped_gauss_newton(eval, theta0, n);

  FitResult out;
  out.form = with_constant ? FitForm::kPowerConst : FitForm::kPower;
  out.params.assign(opt.theta.data(), opt.theta.data() + p);
  out.sample_count = n;
  out.ssr = opt.ssr;
  out.converged = opt.converged;
  out.residual_variance = n > p ? opt.ssr / (n - p) : 0.0;
  out.covariance = out.residual_variance * detail::pinv(opt.jtj);
  if (!opt.converged) out.note = "gauss-newton did not converge; best-so-far parameters";
  return out;
}

// ---------------------------------------------------------------------------
// Error propagation

namespace detail {

inline void require_psd(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument("covariance not square");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("covariance not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double floor = -1e-9 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < floor) {
    throw std::invalid_argument("covariance not positive semidefinite");
  }
}

}  // namespace detail

// First-order propagated standard deviation of the fitted curve at each x:
// sigma_f^2 = grad(f)^T Cov grad(f) with the closed-form partials of each
// fit family. Callers plot f(x) +- 3 sigma_f.
inline std::vector<double> propagate_band(const FitResult& fit, std::span<const double> xs) {
  detail::require_psd(fit.covariance);
  std::vector<double> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i];
    Eigen::VectorXd g;
    switch (fit.form) {
      case FitForm::kParabolaLogX: {
        const double z = std::log(x);
        const double a = fit.params[0], b = fit.params[1];
        g.resize(3);
        g << (z - b) * (z - b), -2.0 * a * (z - b), 1.0;
        break;
      }
      case FitForm::kPower: {
        const double a = fit.params[0], b = fit.params[1];
        const double xb = std::pow(x, b);
        g.resize(2);
        g << xb, a * xb * std::log(x);
        break;
      }
      case FitForm::kPowerConst: {
        const double a = fit.params[0], b = fit.params[1];
        const double xb = std::pow(x, b);
        g.resize(3);
        g << xb, a * xb * std::log(x), 1.0;
        break;
      }
      case FitForm::kSurface:
        throw std::invalid_argument("propagate_band: use surface-specific tooling");
    }
    if (g.size() != fit.covariance.rows()) {
      throw std::invalid_argument("propagate_band: covariance size mismatch");
    }
    const double var = g.dot(fit.covariance * g);
    out[i] = std::sqrt(std::max(var, 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compute-optimal exponents from banded parabola fits

struct BandExtraction {
  u64 budget = 0;
  FitResult n_parabola;
  FitResult d_parabola;
  double n_opt = 0, n_opt_sigma = 0;
  double d_opt = 0, d_opt_sigma = 0;
  double l_opt = 0, l_opt_sigma = 0;
  bool usable = false;  // both parabolas have an interior minimum
};

struct ScalingSummary {
  std::vector<BandExtraction> bands;
  FitResult n_opt_fit;              // N_opt(C) = a C^b
  FitResult d_opt_fit;              // D_opt(C) = a C^b
  FitResult l_opt_fit_power;        // L_opt(C) = a C^b
  FitResult l_opt_fit_power_const;  // L_opt(C) = a C^b + L_inf
  int usable_bands = 0;
};

namespace detail {

// Sigma floor keeps exact synthetic bands (sigma == 0) usable as weights.
inline std::vector<double> floored_sigmas(const std::vector<double>& sigmas,
                                          const std::vector<double>& values) {
  std::vector<double> out(sigmas.size());
  for (size_t i = 0; i < sigmas.size(); ++i) {
    out[i] = std::max(sigmas[i], 1e-9 * std::max(std::abs(values[i]), 1e-12));
  }
  return out;
}

}  // namespace detail

// Per band: parabola fits of loss against N and against D in log space give
// (x_opt, L_opt) with uncertainties; the band minima are then fitted with
// weighted power laws against the band budgets.
inline ScalingSummary optimal_scaling(const BandingResult& banding) {
  ScalingSummary out;
  std::vector<double> cs, ns, n_sig, ds, d_sig, ls, l_sig;
  for (const IsoFlopBand& band : banding.bands) {
    if (band.runs.empty()) continue;
    BandExtraction ex;
    ex.budget = band.budget;
    std::vector<double> n_x, d_x, loss;
    for (const RunRecord& r : band.runs) {
      n_x.push_back(static_cast<double>(r.N));
      d_x.push_back(static_cast<double>(r.D));
      loss.push_back(r.eval_loss);
    }
    ex.n_parabola = fit_parabola(n_x, loss);
    ex.d_parabola = fit_parabola(d_x, loss);
    ex.usable = !ex.n_parabola.degenerate && !ex.d_parabola.degenerate &&
                ex.n_parabola.apex_interior && ex.d_parabola.apex_interior;
    if (ex.usable) {
      // x_opt = e^b, so sigma_x = e^b sigma_b to first order.
      ex.n_opt = std::exp(ex.n_parabola.params[1]);
      ex.n_opt_sigma = ex.n_opt * std::sqrt(std::max(ex.n_parabola.covariance(1, 1), 0.0));
      ex.d_opt = std::exp(ex.d_parabola.params[1]);
      ex.d_opt_sigma = ex.d_opt * std::sqrt(std::max(ex.d_parabola.covariance(1, 1), 0.0));
      ex.l_opt = ex.n_parabola.params[2];
      ex.l_opt_sigma = std::sqrt(std::max(ex.n_parabola.covariance(2, 2), 0.0));
      cs.push_back(static_cast<double>(band.budget));
      ns.push_back(ex.n_opt);
      n_sig.push_back(ex.n_opt_sigma);
      ds.push_back(ex.d_opt);
      d_sig.push_back(ex.d_opt_sigma);
      ls.push_back(ex.l_opt);
      l_sig.push_back(ex.l_opt_sigma);
      ++out.usable_bands;
    }
    out.bands.push_back(std::move(ex));
  }
  if (out.usable_bands < 3) {
    throw std::invalid_argument("optimal_scaling: need >= 3 usable bands, have " +
                                std::to_string(out.usable_bands));
  }
  out.n_opt_fit = fit_power(cs, ns, false, detail::floored_sigmas(n_sig, ns));
  out.d_opt_fit = fit_power(cs, ds, false, detail::floored_sigmas(d_sig, ds));
  out.l_opt_fit_power = fit_power(cs, ls, false, detail::floored_sigmas(l_sig, ls));
  if (cs.size() >= 4) {
    out.l_opt_fit_power_const = fit_power(cs, ls, true, detail::floored_sigmas(l_sig, ls));
  } else {
    out.l_opt_fit_power_const = out.l_opt_fit_power;
    out.l_opt_fit_power_const.note = "too few bands for the +const form; pure power reported";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss surface L(N, D) = E + A/N^alpha + B/D^beta

inline FitResult fit_surface(std::span<const RunRecord> records) {
  if (records.size() < 8) throw std::invalid_argument("fit_surface: need >= 8 records");
  struct Row {
    double n, d, loss;
  };
  std::vector<Row> rows;
  rows.reserve(records.size());
  for (const RunRecord& r : records) {
    rows.push_back({static_cast<double>(r.N), static_cast<double>(r.D), r.eval_loss});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.n != b.n) return a.n < b.n;
    if (a.d != b.d) return a.d < b.d;
    return a.loss < b.loss;
  });
  auto distinct = [&rows](auto proj) {
    std::vector<double> v;
    for (const Row& r : rows) v.push_back(proj(r));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v.size();
  };
  if (distinct([](const Row& r) { return r.n; }) < 3 ||
      distinct([](const Row& r) { return r.d; }) < 3) {
    throw std::invalid_argument("fit_surface: need >= 3 distinct N and D values");
  }
  const int n = static_cast<int>(rows.size());
  double min_loss = std::numeric_limits<double>::infinity();
  for (const Row& r : rows) min_loss = std::min(min_loss, r.loss);

  auto eval = [&rows, n](const Eigen::VectorXd& th, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const double E = th(0), A = th(1), alpha = th(2), B = th(3), beta = th(4);
    for (int i = 0; i < n; ++i) {
      const double na = std::pow(rows[i].n, -alpha);
      const double db = std::pow(rows[i].d, -beta);
      if (!std::isfinite(na) || !std::isfinite(db)) return false;
      r(i) = E + A * na + B * db - rows[i].loss;
      J(i, 0) = 1.0;
      J(i, 1) = na;
      J(i, 2) = -A * na * std::log(rows[i].n);
      J(i, 3) = db;
      J(i, 4) = -B * db * std::log(rows[i].d);
    }
    return true;
  };

  detail::NlsOutcome best;
  for (double e0 : {0.0, 0.5 * min_loss}) {
    for (double a0 : {0.2, 0.5, 1.0}) {
      for (double b0 : {0.2, 0.5, 1.0}) {
        // Linear least squares for (A, B) given (E, alpha, beta).
        Eigen::MatrixXd X(n, 2);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
          X(i, 0) = std::pow(rows[i].n, -a0);
          X(i, 1) = std::pow(rows[i].d, -b0);
          y(i) = rows[i].loss - e0;
        }
        const Eigen::VectorXd ab = X.colPivHouseholderQr().solve(y);
        Eigen::VectorXd theta0(5);
        theta0 << e0, ab(0), a0, ab(1), b0;
        const auto run = detail::damped_gauss_newton(eval, theta0, n);
        if (run.ssr < best.ssr) best = run;
      }
    }
  }
  FitResult out;
  out.form = FitForm::kSurface;
  out.params.assign(best.theta.data(), best.theta.data() + 5);
  out.sample_count = n;
  out.ssr = best.ssr;
  out.converged = best.converged;
  out.residual_variance = n > 5 ? best.ssr / (n - 5) : 0.0;
  out.covariance = out.residual_variance * detail::pinv(best.jtj);
  if (!best.converged) out.note = "gauss-newton did not converge; best-so-far parameters";
  return out;
}

// ---------------------------------------------------------------------------
// Budget allocation under the fitted surface

struct Allocation {
  double N_opt = 0;
  double D_opt = 0;
  double loss = 0;
};

// Continuous relaxation of the architecture ladder: layer and token counts
// fixed, width d varied smoothly, so both N and the per-example cost are
// functions of d alone.
struct ShapeFamily {
  i64 n = 2;
  i64 m = 2;
  i64 E = 64;
  i64 D_q = 176;

  double params_of_width(double d) const { return (12.0 * n + 16.0 * m) * d * d; }
  double width_of_params(double N) const { return std::sqrt(N / (12.0 * n + 16.0 * m)); }

  double flops_per_example_of_params(double N) const {
    const double d = width_of_params(N);
    const double Ed = static_cast<double>(E), Dq = static_cast<double>(D_q);
    const double enc = n * (24.0 * Ed * d * d + 4.0 * d * Ed * Ed);
    const double dec = m * (28.0 * Dq * d * d + 4.0 * d * Dq * Dq + 4.0 * Ed * d * d +
                            4.0 * d * Dq * Ed);
    return enc + dec;
  }
};

// Minimize L(N, C / flops_per_example(N)) over log N by golden-section search.
inline Allocation optimal_allocation(const FitResult& surface, double budget_flops,
                                     const std::function<double(double)>& flops_per_example_of_N,
                                     double n_lo, double n_hi) {
  if (surface.form != FitForm::kSurface) throw std::invalid_argument("not a surface fit");
  if (!(budget_flops > 0)) throw std::invalid_argument("budget must be > 0");
  if (!(n_lo > 0 && n_hi > n_lo)) throw std::invalid_argument("bad N range");
  if (budget_flops / flops_per_example_of_N(n_lo) < 1.0) {
    throw std::invalid_argument("budget below minimal feasible model");
  }
  // Shrink the upper edge until at least one example is affordable.
  double hi = n_hi;
  if (budget_flops / flops_per_example_of_N(hi) < 1.0) {
    double lo = n_lo;
    for (int i = 0; i < 200; ++i) {
      const double mid = std::sqrt(lo * hi);  // bisection in log space
      if (budget_flops / flops_per_example_of_N(mid) >= 1.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    hi = lo;
  }
  auto objective = [&](double logn) {
    const double N = std::exp(logn);
    const double D = budget_flops / flops_per_example_of_N(N);
    return surface.eval_surface(N, D);
  };
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(n_lo), b = std::log(hi);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = objective(x1), f2 = objective(x2);
  for (int i = 0; i < 300 && (b - a) > 1e-12; ++i) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = objective(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = objective(x2);
    }
  }
  Allocation out;
  const double logn = 0.5 * (a + b);
  out.N_opt = std::exp(logn);
  out.D_opt = budget_flops / flops_per_example_of_N(out.N_opt);
  out.loss = surface.eval_surface(out.N_opt, out.D_opt);
  return out;
}

// ---------------------------------------------------------------------------
// Iso-loss data equivalence between two loss-vs-miles fits

struct IsoLossPoint {
  double loss = 0;
  double miles_a = 0;  // first fit (observed-only training data)
  double miles_b = 0;  // second fit (demonstrated training data)
  double ratio = 0;    // miles_a / miles_b
  double sigma = 0;    // propagated standard deviation of the ratio
};

namespace detail {

// Invert f(x) = a x^b + c at loss level L and propagate the fit covariance
// into var(ln x).
inline std::pair<double, double> invert_power(const FitResult& fit, double loss) {
  const double a = fit.params[0], b = fit.params[1];
  const double c = fit.form == FitForm::kPowerConst ? fit.params[2] : 0.0;
  const double u = (loss - c) / a;
  if (!(u > 0.0) || b == 0.0) throw std::invalid_argument("iso_loss: level not invertible");
  const double lnx = std::log(u) / b;
  Eigen::VectorXd g(fit.params.size());
  g(0) = -1.0 / (a * b);
  g(1) = -lnx / b;
  if (fit.form == FitForm::kPowerConst) g(2) = -1.0 / (b * (loss - c));
  const double var = g.dot(fit.covariance * g);
  return {std::exp(lnx), std::max(var, 0.0)};
}

}  // namespace detail

// Evaluate miles_a(L) / miles_b(L) over a loss grid spanning [loss_lo, loss_hi],
// the common loss range of the two curves. Fits must be power or power+const.
inline std::vector<IsoLossPoint> iso_loss_equivalence(const FitResult& fit_a,
                                                      const FitResult& fit_b, double loss_lo,
                                                      double loss_hi, int num_points = 25) {
  for (const FitResult* f : {&fit_a, &fit_b}) {
    if (f->form != FitForm::kPower && f->form != FitForm::kPowerConst) {
      throw std::invalid_argument("iso_loss_equivalence: fits must be power-law form");
    }
  }
  // Levels must sit strictly above both asymptotes to be invertible.
  double floor_level = -std::numeric_limits<double>::infinity();
  for (const FitResult* f : {&fit_a, &fit_b}) {
    if (f->form == FitForm::kPowerConst) floor_level = std::max(floor_level, f->params[2]);
  }
  const double lo = std::max(loss_lo, floor_level + 1e-9);
  if (!(lo < loss_hi)) throw std::invalid_argument("iso_loss_equivalence: empty common range");
  if (num_points < 2) throw std::invalid_argument("iso_loss_equivalence: need >= 2 points");
  std::vector<IsoLossPoint> out;
  out.reserve(num_points);
  for (int i = 0; i < num_points; ++i) {
    const double L = lo + (loss_hi - lo) * i / (num_points - 1);
    const auto [xa, var_lnx_a] = detail::invert_power(fit_a, L);
    const auto [xb, var_lnx_b] = detail::invert_power(fit_b, L);
    IsoLossPoint pt;
    pt.loss = L;
    pt.miles_a = xa;
    pt.miles_b = xb;
    pt.ratio = xa / xb;
    pt.sigma = pt.ratio * std::sqrt(var_lnx_a + var_lnx_b);
    out.push_back(pt);
  }
  return out;
}

}  // namespace msl

#endif  // MSL_FIT_HPP_
