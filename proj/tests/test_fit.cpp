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

#include "msl/fit.hpp"
#include "msl/random.hpp"

namespace msl {
namespace {

RunRecord make_record(double N, double D, double loss, u64 C) {
  RunRecord r;
  r.N = static_cast<u64>(N);
  r.D = static_cast<u64>(D);
  r.C = C;
  r.eval_loss = loss;
  r.per_type_losses = {loss, loss, loss, loss};
  return r;
}

TEST_CASE("band_runs assigns by nearest log budget within tolerance", "[fit]") {
  std::vector<u64> budgets = {1000, 10000, 100000};
  std::vector<RunRecord> recs;
  for (u64 b : budgets) recs.push_back(make_record(10, 10, 1.0, b));
  auto exact = band_runs(recs, budgets, 0.05);
  REQUIRE(exact.bands.size() == 3);
  for (const auto& band : exact.bands) CHECK(band.runs.size() == 1);
  CHECK(exact.unassigned.empty());
  CHECK(exact.empty_budgets.empty());

  // A run 10% off budget with 5% tolerance stays unassigned.
  std::vector<RunRecord> off = {make_record(10, 10, 1.0, 1100)};
  auto loose = band_runs(off, std::vector<u64>{1000}, 0.05);
  CHECK(loose.bands[0].runs.empty());
  CHECK(loose.unassigned.size() == 1);
  CHECK(loose.empty_budgets == std::vector<u64>{1000});
  // The same run is captured once the tolerance covers 10%.
  auto tight = band_runs(off, std::vector<u64>{1000}, 0.11);
  CHECK(tight.bands[0].runs.size() == 1);
}

TEST_CASE("band_runs handles a full sweep grid", "[fit]") {
  // 84 runs over 7 budgets, 12 models each, with +-2% FLOP jitter.
  std::vector<u64> budgets;
  for (int b = 0; b < 7; ++b) budgets.push_back(u64(1) << (20 + 2 * b));
  std::vector<RunRecord> recs;
  Rng rng(5);
  for (u64 budget : budgets) {
    for (int k = 0; k < 12; ++k) {
      const double jitter = 1.0 + rng.uniform(-0.02, 0.02);
      recs.push_back(make_record(100 + k, 50, 1.0, u64(budget * jitter)));
    }
  }
  auto banding = band_runs(recs, budgets, 0.05);
  REQUIRE(banding.bands.size() == 7);
  for (const auto& band : banding.bands) CHECK(band.runs.size() == 12);
  CHECK(banding.unassigned.empty());
}

TEST_CASE("parabola interpolates three points exactly", "[fit]") {
  std::vector<double> xs = {std::exp(1.0), std::exp(2.0), std::exp(3.0)};
  std::vector<double> ys = {7.0, 5.0, 7.0};
  const auto fit = fit_parabola(xs, ys);
  REQUIRE(fit.form == FitForm::kParabolaLogX);
  CHECK(fit.params[0] == Catch::Approx(2.0).margin(1e-9));
  CHECK(fit.params[1] == Catch::Approx(2.0).margin(1e-9));
  CHECK(fit.params[2] == Catch::Approx(5.0).margin(1e-9));
  CHECK(fit.ssr == Catch::Approx(0.0).margin(1e-14));
  CHECK(!fit.degenerate);
  CHECK(fit.apex_interior);
}

TEST_CASE("parabola x_opt is invariant to vertical shifts and x scaling", "[fit]") {
  std::vector<double> xs, ys;
  for (int i = 0; i < 9; ++i) {
    const double z = 0.25 * i;
    xs.push_back(std::exp(z));
    ys.push_back(1.7 * (z - 1.1) * (z - 1.1) + 3.0);
  }
  const auto base = fit_parabola(xs, ys);
  std::vector<double> shifted = ys;
  for (double& v : shifted) v += 10.0;
  const auto up = fit_parabola(xs, shifted);
  CHECK(up.params[1] == Catch::Approx(base.params[1]).margin(1e-9));
  CHECK(up.params[0] == Catch::Approx(base.params[0]).margin(1e-9));
  CHECK(up.params[2] == Catch::Approx(base.params[2] + 10.0).margin(1e-9));

  // Multiplying x by k shifts log x_opt by ln k and nothing else.
  const double k = 37.5;
  std::vector<double> scaled = xs;
  for (double& v : scaled) v *= k;
  const auto sc = fit_parabola(scaled, ys);
  CHECK(sc.params[1] == Catch::Approx(base.params[1] + std::log(k)).margin(1e-9));
  CHECK(sc.params[0] == Catch::Approx(base.params[0]).margin(1e-9));
  CHECK(sc.params[2] == Catch::Approx(base.params[2]).margin(1e-9));
}

TEST_CASE("parabola flags degenerate and edge-apex fits", "[fit]") {
  std::vector<double> xs = {std::exp(1.0), std::exp(2.0), std::exp(3.0)};
  const auto frown = fit_parabola(xs, std::vector<double>{5.0, 7.0, 5.0});
  CHECK(frown.degenerate);
  // Monotone data puts the apex outside the sampled range.
  std::vector<double> mono_x, mono_y;
  for (double z : {1.0, 2.0, 3.0, 4.0}) {
    mono_x.push_back(std::exp(z));
    mono_y.push_back((z - 6.0) * (z - 6.0));
  }
  const auto slope = fit_parabola(mono_x, mono_y);
  CHECK(!slope.degenerate);
  CHECK(!slope.apex_interior);
  CHECK_THROWS_AS(fit_parabola(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_parabola(std::vector<double>{1.0, 1.0, 1.0},
                               std::vector<double>{1.0, 2.0, 3.0}),
                  std::invalid_argument);
}

TEST_CASE("parabola Monte-Carlo coverage of x_opt", "[fit]") {
  // 12 noisy points per trial from a known parabola with known noise sigma.
  // Rescaling the fit covariance to the true noise level makes the apex
  // estimate exactly Gaussian, so 3 sigma should cover >= 99% of trials.
  const double a = 1.5, b_true = 2.0, c = 4.0, noise = 0.01;
  Rng rng(101);
  int covered = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> xs, ys;
    for (int i = 0; i < 12; ++i) {
      const double z = 0.8 + (2.4 / 11.0) * i;  // symmetric grid around b_true
      xs.push_back(std::exp(z));
      ys.push_back(a * (z - b_true) * (z - b_true) + c + noise * rng.normal());
    }
    const auto fit = fit_parabola(xs, ys);
    REQUIRE(fit.residual_variance > 0.0);
    const double var_known =
        fit.covariance(1, 1) / fit.residual_variance * noise * noise;
    if (std::abs(fit.params[1] - b_true) <= 3.0 * std::sqrt(var_known)) ++covered;
  }
  CHECK(covered >= 990);
}

TEST_CASE("pure power law fits exactly", "[fit]") {
  std::vector<double> xs = {1.0, 4.0, 16.0};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * std::pow(x, -0.5));
  const auto fit = fit_power(xs, ys, false);
  CHECK(fit.params[0] == Catch::Approx(3.0).margin(1e-9));
  CHECK(fit.params[1] == Catch::Approx(-0.5).margin(1e-9));
  CHECK(fit.ssr == Catch::Approx(0.0).margin(1e-16));
  CHECK(fit.converged);
}

TEST_CASE("power plus constant fits exactly", "[fit]") {
  std::vector<double> xs = {1.0, 2.0, 4.0, 8.0};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(2.0 / x + 1.0);
  const auto fit = fit_power(xs, ys, true);
  REQUIRE(fit.params.size() == 3);
  CHECK(fit.params[0] == Catch::Approx(2.0).margin(1e-7));
  CHECK(fit.params[1] == Catch::Approx(-1.0).margin(1e-7));
  CHECK(fit.params[2] == Catch::Approx(1.0).margin(1e-7));
  CHECK(fit.ssr == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("constant-added fit never loses to the nested pure fit", "[fit]") {
  Rng rng(77);
  std::vector<double> xs, ys;
  for (int i = 0; i < 16; ++i) {
    const double x = std::pow(2.0, i * 0.5);
    xs.push_back(x);
    ys.push_back(1.8 * std::pow(x, -0.7) + 0.9 + 0.01 * rng.normal());
  }
  const auto pure = fit_power(xs, ys, false);
  const auto with_c = fit_power(xs, ys, true);
  CHECK(with_c.ssr <= pure.ssr + 1e-12);
  // With real curvature in the data the improvement is strict and large.
  CHECK(with_c.ssr < 0.5 * pure.ssr);
}

TEST_CASE("error band for power form at x=1 kills the exponent term", "[fit]") {
  FitResult fit;
  fit.form = FitForm::kPowerConst;
  fit.params = {2.0, -1.0, 1.0};
  fit.covariance = Eigen::Vector3d(0.01, 0.04, 0.0).asDiagonal();
  const auto band = propagate_band(fit, std::vector<double>{1.0});
  CHECK(band[0] == Catch::Approx(0.1).margin(1e-12));
}

TEST_CASE("zero covariance gives a zero band", "[fit]") {
  FitResult fit;
  fit.form = FitForm::kParabolaLogX;
  fit.params = {2.0, 1.0, 5.0};
  fit.covariance = Eigen::MatrixXd::Zero(3, 3);
  for (double s : propagate_band(fit, std::vector<double>{0.5, 1.0, 7.0})) CHECK(s == 0.0);
}

TEST_CASE("propagated band equals the expanded six-term sum", "[fit]") {
  FitResult fit;
  fit.form = FitForm::kPowerConst;
  fit.params = {1.7, -0.6, 0.4};
  Eigen::Matrix3d cov;
  cov << 0.020, 0.004, -0.001, 0.004, 0.030, 0.002, -0.001, 0.002, 0.010;
  fit.covariance = cov;
  const double x = 3.7;
  const auto band = propagate_band(fit, std::vector<double>{x});
  // Hand-expanded first-order sum with the closed-form partials.
  const double a = 1.7, b = -0.6, c = 0.4;
  (void)c;
  const double fa = std::pow(x, b);
  const double fb = a * std::pow(x, b) * std::log(x);
  const double fc = 1.0;
  const double var = fa * fa * cov(0, 0) + fb * fb * cov(1, 1) + fc * fc * cov(2, 2) +
                     2 * fa * fb * cov(0, 1) + 2 * fa * fc * cov(0, 2) + 2 * fb * fc * cov(1, 2);
  CHECK(band[0] == Catch::Approx(std::sqrt(var)).margin(1e-12));
}

TEST_CASE("non-PSD covariance is rejected", "[fit]") {
  FitResult fit;
  fit.form = FitForm::kPower;
  fit.params = {1.0, -0.5};
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  fit.covariance = bad;
  CHECK_THROWS_AS(propagate_band(fit, std::vector<double>{1.0}), std::invalid_argument);
  Eigen::Matrix2d asym;
  asym << 1.0, 0.5, -0.5, 1.0;
  fit.covariance = asym;
  CHECK_THROWS_AS(propagate_band(fit, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("Monte-Carlo band matches the analytic propagation", "[fit]") {
  FitResult fit;
  fit.form = FitForm::kPowerConst;
  fit.params = {2.0, -0.5, 1.0};
  Eigen::Matrix3d cov;
  cov << 4e-4, 1e-5, 0.0, 1e-5, 9e-4, 2e-5, 0.0, 2e-5, 1e-4;
  fit.covariance = cov;
  const Eigen::Matrix3d chol = cov.llt().matrixL();
  Rng rng(303);
  for (double x : {0.5, 2.0, 9.0}) {
    const double analytic = propagate_band(fit, std::vector<double>{x})[0];
    double sum = 0, sum2 = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
      Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
      const Eigen::Vector3d th = Eigen::Vector3d(2.0, -0.5, 1.0) + chol * z;
      const double f = th(0) * std::pow(x, th(1)) + th(2);
      sum += f;
      sum2 += f * f;
    }
    const double mean = sum / draws;
    const double empirical = std::sqrt(std::max(sum2 / draws - mean * mean, 0.0));
    CHECK(std::abs(empirical - analytic) <= 0.15 * analytic);
  }
}

// Bands built directly from the surface L = 1 + 2/sqrt(N) + 3/sqrt(D) with
// C = N * D. Symmetric exponents force N_opt and D_opt ~ C^0.5 exactly.
BandingResult synthetic_banding() {
  BandingResult banding;
  const double E = 1.0, A = 2.0, B = 3.0;
  for (int bi = 0; bi < 5; ++bi) {
    IsoFlopBand band;
    const double C = std::pow(10.0, 6 + bi);
    band.budget = static_cast<u64>(C);
    const double n_opt = (A / B) * std::sqrt(C);
    for (double delta : {-0.6, -0.3, 0.0, 0.3, 0.6}) {
      const double N = n_opt * std::exp(delta);
      const double D = C / N;
      band.runs.push_back(
          make_record(N, D, E + A / std::sqrt(N) + B / std::sqrt(D), band.budget));
    }
    banding.bands.push_back(band);
  }
  return banding;
}

TEST_CASE("optimal_scaling recovers symmetric exponents", "[fit]") {
  const auto summary = optimal_scaling(synthetic_banding());
  CHECK(summary.usable_bands == 5);
  CHECK(summary.n_opt_fit.params[1] == Catch::Approx(0.5).margin(1e-3));
  CHECK(summary.d_opt_fit.params[1] == Catch::Approx(0.5).margin(1e-3));
  // Within the propagated 3 sigma as well.
  const double sig_n = std::sqrt(std::max(summary.n_opt_fit.covariance(1, 1), 0.0));
  CHECK(std::abs(summary.n_opt_fit.params[1] - 0.5) <= 3.0 * sig_n + 1e-3);
  // Band minima decrease with budget under the constructed surface.
  for (size_t i = 1; i < summary.bands.size(); ++i) {
    CHECK(summary.bands[i].l_opt < summary.bands[i - 1].l_opt);
  }
}

TEST_CASE("identical band minima give a flat exponent", "[fit]") {
  BandingResult banding;
  for (int bi = 0; bi < 4; ++bi) {
    IsoFlopBand band;
    band.budget = u64(1) << (30 + bi);
    for (double delta : {-0.4, 0.0, 0.4}) {
      const double N = 5000.0 * std::exp(delta);
      const double D = 100.0 * std::exp(-delta);
      band.runs.push_back(make_record(N, D, 2.0 + delta * delta, band.budget));
    }
    banding.bands.push_back(band);
  }
  const auto summary = optimal_scaling(banding);
  CHECK(summary.n_opt_fit.params[1] == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("optimal_scaling needs three usable bands", "[fit]") {
  auto banding = synthetic_banding();
  banding.bands.resize(2);
  CHECK_THROWS_AS(optimal_scaling(banding), std::invalid_argument);
}

TEST_CASE("surface fit recovers exact synthetic data", "[fit]") {
  std::vector<RunRecord> recs;
  for (double N : {1e3, 1e4, 1e5, 1e6}) {
    for (double D : {1e3, 3e4, 1e6}) {
      recs.push_back(make_record(N, D, 0.8 + 5.0 * std::pow(N, -0.4) + 9.0 * std::pow(D, -0.7),
                                 u64(N * D)));
    }
  }
  const auto fit = fit_surface(recs);
  REQUIRE(fit.params.size() == 5);
  CHECK(fit.params[0] == Catch::Approx(0.8).margin(1e-5));
  CHECK(fit.params[1] == Catch::Approx(5.0).margin(1e-3));
  CHECK(fit.params[2] == Catch::Approx(0.4).margin(1e-5));
  CHECK(fit.params[3] == Catch::Approx(9.0).margin(1e-3));
  CHECK(fit.params[4] == Catch::Approx(0.7).margin(1e-5));
  CHECK(fit.ssr == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("surface fit tolerates noise within its own covariance", "[fit]") {
  Rng rng(555);
  std::vector<RunRecord> recs;
  for (double N : {1e3, 1e4, 1e5, 1e6}) {
    for (double D : {1e3, 1e4, 1e5, 1e6}) {
      const double loss =
          0.8 + 5.0 * std::pow(N, -0.4) + 9.0 * std::pow(D, -0.7) + 0.01 * rng.normal();
      recs.push_back(make_record(N, D, loss, u64(1)));
    }
  }
  const auto fit = fit_surface(recs);
  const double sig_alpha = std::sqrt(std::max(fit.covariance(2, 2), 0.0));
  const double sig_beta = std::sqrt(std::max(fit.covariance(4, 4), 0.0));
  CHECK(std::abs(fit.params[2] - 0.4) <= 3.0 * sig_alpha + 1e-6);
  CHECK(std::abs(fit.params[4] - 0.7) <= 3.0 * sig_beta + 1e-6);
}

TEST_CASE("surface fit recovers the asymptote from near-floor data", "[fit]") {
  // Loss spans values within 2x of E so the constant is identifiable.
  Rng rng(556);
  std::vector<RunRecord> recs;
  const double E = 1.0;
  for (double N : {1e4, 1e5, 1e6, 1e7}) {
    for (double D : {1e4, 1e5, 1e6, 1e7}) {
      const double loss =
          E + 3.0 * std::pow(N, -0.5) + 4.0 * std::pow(D, -0.5) + 0.003 * rng.normal();
      recs.push_back(make_record(N, D, loss, u64(1)));
    }
  }
  const auto fit = fit_surface(recs);
  const double sig_e = std::sqrt(std::max(fit.covariance(0, 0), 0.0));
  CHECK(std::abs(fit.params[0] - E) <= 3.0 * sig_e + 1e-6);
}

TEST_CASE("surface fit rejects rank-deficient designs", "[fit]") {
  std::vector<RunRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(make_record(1e4, 1e3 * (i + 1), 1.0 + 0.01 * i, 1));
  CHECK_THROWS_AS(fit_surface(recs), std::invalid_argument);
  std::vector<RunRecord> few = {make_record(1e3, 1e3, 1.0, 1)};
  CHECK_THROWS_AS(fit_surface(few), std::invalid_argument);
}

TEST_CASE("optimal_allocation matches closed forms for proportional FLOPs", "[fit]") {
  // FLOPs per example proportional to N: C = k N D.
  const double k = 6.0;
  auto fpe = [k](double N) { return k * N; };

  FitResult sym;
  sym.form = FitForm::kSurface;
  sym.params = {1.0, 2.0, 0.5, 3.0, 0.5};
  const auto a1 = optimal_allocation(sym, 1e10, fpe, 1e2, 1e8);
  const auto a2 = optimal_allocation(sym, 4e10, fpe, 1e2, 1e8);
  // alpha = beta with FLOPs ~ N D gives N_opt ~ C^(1/2): 4x budget, 2x N.
  CHECK(a2.N_opt / a1.N_opt == Catch::Approx(2.0).margin(1e-3));
  // Closed form N_opt = (alpha A / (beta B))^(1/(alpha+beta)) (C/k)^(1/2),
  // here (2/3) sqrt(C/k).
  const double expect = (2.0 / 3.0) * std::sqrt(1e10 / k);
  CHECK(a1.N_opt == Catch::Approx(expect).epsilon(1e-4));
  CHECK(a1.D_opt == Catch::Approx(1e10 / (k * a1.N_opt)).epsilon(1e-9));

  FitResult skew;
  skew.form = FitForm::kSurface;
  skew.params = {0.5, 2.0, 0.5, 3.0, 1.0};
  const auto b1 = optimal_allocation(skew, 1e10, fpe, 1e2, 1e8);
  const auto b2 = optimal_allocation(skew, 1e12, fpe, 1e2, 1e8);
  // Exponent beta / (alpha + beta) = 2/3 across a 100x budget span.
  const double slope = std::log(b2.N_opt / b1.N_opt) / std::log(100.0);
  CHECK(slope == Catch::Approx(2.0 / 3.0).margin(1e-4));

  // Golden-section minimum agrees with a dense grid search within 1%.
  double best_loss = std::numeric_limits<double>::infinity();
  double best_n = 0;
  for (int i = 0; i <= 4000; ++i) {
    const double N = std::pow(10.0, 2.0 + 6.0 * i / 4000.0);
    const double D = 1e10 / (k * N);
    if (D < 1) continue;
    const double loss = skew.eval_surface(N, D);
    if (loss < best_loss) {
      best_loss = loss;
      best_n = N;
    }
  }
  CHECK(std::abs(b1.N_opt - best_n) <= 0.01 * best_n);
}

TEST_CASE("optimal_allocation rejects starvation budgets", "[fit]") {
  FitResult sym;
  sym.form = FitForm::kSurface;
  sym.params = {1.0, 2.0, 0.5, 3.0, 0.5};
  auto fpe = [](double N) { return 6.0 * N; };
  CHECK_THROWS_AS(optimal_allocation(sym, 10.0, fpe, 1e2, 1e8), std::invalid_argument);
}

TEST_CASE("iso-loss ratio of identical fits is one", "[fit]") {
  FitResult f;
  f.form = FitForm::kPowerConst;
  f.params = {4.0, -0.5, 1.0};
  f.covariance = Eigen::MatrixXd::Zero(3, 3);
  const auto curve = iso_loss_equivalence(f, f, 1.2, 3.0, 11);
  REQUIRE(curve.size() == 11);
  for (const auto& pt : curve) {
    CHECK(pt.ratio == Catch::Approx(1.0).margin(1e-12));
    CHECK(pt.sigma == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("iso-loss recovers a constructed uniform ratio", "[fit]") {
  // Curve A needs 4x the miles of curve B at every loss level:
  // L_B(x) = a x^b + c and L_A(x) = a (x/4)^b + c.
  const double a = 4.0, b = -0.5, c = 1.0;
  FitResult fb;
  fb.form = FitForm::kPowerConst;
  fb.params = {a, b, c};
  fb.covariance = Eigen::MatrixXd::Zero(3, 3);
  FitResult fa = fb;
  fa.params[0] = a * std::pow(4.0, -b);
  const auto curve = iso_loss_equivalence(fa, fb, 1.3, 2.5, 9);
  for (const auto& pt : curve) {
    CHECK(pt.ratio == Catch::Approx(4.0).epsilon(0.10));
    CHECK(pt.miles_a == Catch::Approx(4.0 * pt.miles_b).epsilon(1e-9));
  }
  // Levels at or below the shared asymptote are rejected.
  CHECK_THROWS_AS(iso_loss_equivalence(fa, fb, 0.2, 0.9, 5), std::invalid_argument);
}

TEST_CASE("fitters are invariant to input permutation", "[fit]") {
  Rng rng(31);
  std::vector<double> xs, ys;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(std::pow(2.0, i));
    ys.push_back(3.0 * std::pow(xs.back(), -0.4) + 0.5 + 0.01 * rng.normal());
  }
  std::vector<size_t> order = {7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
  std::vector<double> xs2, ys2;
  for (size_t i : order) {
    xs2.push_back(xs[i]);
    ys2.push_back(ys[i]);
  }
  const auto f1 = fit_power(xs, ys, true);
  const auto f2 = fit_power(xs2, ys2, true);
  CHECK(f1.params == f2.params);
  const auto p1 = fit_parabola(xs, ys);
  const auto p2 = fit_parabola(xs2, ys2);
  CHECK(p1.params == p2.params);
}

TEST_CASE("run records round-trip through json", "[fit]") {
  RunRecord r;
  r.run_id = "sweep0/b2/m3";
  r.shape = ModelShape{2, 2, 32, 64, 176};
  r.seed = 17;
  r.N = param_count(r.shape);
  r.D = 1000;
  r.C = train_flops(r.shape, r.D);
  r.eval_loss = 2.345678;
  r.per_type_losses = {2.0, 2.1, 2.2, 2.3};
  r.metrics["min_ade"] = 0.75;
  r.metrics["w_ade"] = 1.25;
  r.miles = 123.5;
  r.budget_index = 2;
  r.validate();
  const RunRecord back = RunRecord::from_json(r.to_json());
  CHECK(back.run_id == r.run_id);
  CHECK(back.N == r.N);
  CHECK(back.D == r.D);
  CHECK(back.C == r.C);
  CHECK(back.eval_loss == r.eval_loss);
  CHECK(back.per_type_losses == r.per_type_losses);
  CHECK(back.metrics.at("w_ade") == 1.25);
  CHECK(back.miles == r.miles);
  CHECK(back.budget_index == 2);
  back.validate();

  RunRecord bad = r;
  bad.C += 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  RunRecord neg = r;
  neg.eval_loss = -1.0;
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace msl
