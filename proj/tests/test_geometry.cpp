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
#include <numbers>
#include <vector>

#include "msl/geometry.hpp"

namespace msl {
namespace {

constexpr double kPi = std::numbers::pi;

TEST_CASE("wrap_angle maps into (-pi, pi]", "[geometry]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(-kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(3 * kPi / 2) == Catch::Approx(-kPi / 2));
  CHECK(wrap_angle(5 * kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(-7 * kPi / 2) == Catch::Approx(kPi / 2));
}

TEST_CASE("total_heading_change tracks full turns", "[geometry]") {
  // Quarter circle left: +pi/2 up to one chord step of discretization.
  std::vector<Vec2> quarter;
  for (int i = 0; i <= 20; ++i) {
    const double a = (kPi / 2) * i / 20.0;
    quarter.push_back({std::sin(a), 1.0 - std::cos(a)});
  }
  CHECK(total_heading_change(quarter) == Catch::Approx(kPi / 2).margin(kPi / 2 / 20 + 1e-9));

  // Three-quarter circle right (u-turn-like): about -3pi/2, no sign aliasing.
  std::vector<Vec2> uturn;
  for (int i = 0; i <= 60; ++i) {
    const double a = (1.5 * kPi) * i / 60.0;
    uturn.push_back({std::sin(a), std::cos(a) - 1.0});
  }
  CHECK(total_heading_change(uturn) == Catch::Approx(-1.5 * kPi).margin(1.5 * kPi / 60 + 1e-9));

  // A stationary track (jitter below min_step) has no heading change.
  std::vector<Vec2> still(10, Vec2{3.0, 4.0});
  CHECK(total_heading_change(still) == 0.0);
}

TEST_CASE("initial_heading skips sub-resolution jitter", "[geometry]") {
  std::vector<Vec2> pts = {{0, 0}, {1e-5, 0}, {0, 1.0}};
  CHECK(initial_heading(pts) == Catch::Approx(kPi / 2));
  std::vector<Vec2> still(4, Vec2{1, 1});
  CHECK(initial_heading(still) == 0.0);
}

TEST_CASE("polyline arc length, interpolation, projection", "[geometry]") {
  Polyline line(std::vector<Vec2>{{0, 0}, {3, 0}, {3, 4}});
  CHECK(line.length() == Catch::Approx(7.0));
  CHECK(line.point_at(0.0).x == Catch::Approx(0.0));
  CHECK(line.point_at(3.0).x == Catch::Approx(3.0));
  CHECK(line.point_at(5.0).y == Catch::Approx(2.0));
  CHECK(line.point_at(100.0).y == Catch::Approx(4.0));  // clamped to end

  CHECK(line.project({1.0, -2.0}) == Catch::Approx(1.0));
  CHECK(line.project({10.0, 2.0}) == Catch::Approx(5.0));
  CHECK(line.project({-5.0, -5.0}) == Catch::Approx(0.0));
  // Projection then evaluation is a fixed point for on-line points.
  const Vec2 q = line.point_at(4.5);
  CHECK(line.project(q) == Catch::Approx(4.5));
}

TEST_CASE("obb overlap via separating axes", "[geometry]") {
  Obb a{{0, 0}, 0.0, 4.0, 2.0};
  Obb b{{3, 0}, 0.0, 4.0, 2.0};
  CHECK(obb_overlap(a, b));  // 1 m of x-overlap
  Obb c{{5, 0}, 0.0, 4.0, 2.0};
  CHECK(!obb_overlap(a, c));  // 1 m gap
  Obb d{{4, 0}, 0.0, 4.0, 2.0};
  CHECK(obb_overlap(a, d));  // exactly touching counts
  // Rotated box slipping through the diagonal gap.
  Obb e{{2.4, 2.4}, kPi / 4, 2.0, 0.5};
  CHECK(!obb_overlap(a, e));
  Obb f{{1.4, 1.4}, kPi / 4, 2.0, 0.5};
  CHECK(obb_overlap(a, f));
  // Symmetry.
  CHECK(obb_overlap(b, a) == obb_overlap(a, b));
  CHECK(obb_overlap(e, a) == obb_overlap(a, e));
}

TEST_CASE("catmull_rom interpolates samples and stays clamped", "[geometry]") {
  std::vector<Vec2> pts = {{0, 0}, {1, 1}, {2, 0}, {3, 1}};
  const double dt = 0.5;
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec2 v = catmull_rom(pts, dt, dt * double(i));
    CHECK(v.x == Catch::Approx(pts[i].x).margin(1e-12));
    CHECK(v.y == Catch::Approx(pts[i].y).margin(1e-12));
  }
  // Linear data stays linear under interpolation.
  std::vector<Vec2> line = {{0, 0}, {1, 2}, {2, 4}, {3, 6}};
  const Vec2 mid = catmull_rom(line, 1.0, 1.5);
  CHECK(mid.x == Catch::Approx(1.5));
  CHECK(mid.y == Catch::Approx(3.0));
  // Clamped beyond both ends.
  const Vec2 lo = catmull_rom(pts, dt, -1.0);
  const Vec2 hi = catmull_rom(pts, dt, 99.0);
  CHECK(lo.x == Catch::Approx(0.0));
  CHECK(hi.x == Catch::Approx(3.0));
}

TEST_CASE("arc_length sums segment norms", "[geometry]") {
  std::vector<Vec2> pts = {{0, 0}, {3, 4}, {3, 4}, {6, 0}};
  CHECK(arc_length(pts) == Catch::Approx(10.0));
  CHECK(arc_length(std::span<const Vec2>{}) == 0.0);
}

}  // namespace
}  // namespace msl
