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

#ifndef MSL_GEOMETRY_HPP_
#define MSL_GEOMETRY_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "msl/common.hpp"

namespace msl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double px, double py) : x(px), y(py) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

inline double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Cumulative heading change along a point sequence: per-step tangent angle
// deltas wrapped to (-pi, pi] and summed, so turns beyond a half circle keep
// their sign instead of aliasing.
inline double total_heading_change(std::span<const Vec2> pts, double min_step = 1e-3) {
  double total = 0.0;
  bool have_prev = false;
  double prev = 0.0;
  Vec2 anchor;
  bool have_anchor = false;
  for (const Vec2& p : pts) {
    if (!have_anchor) {
      anchor = p;
      have_anchor = true;
      continue;
    }
    const Vec2 d = p - anchor;
    if (d.norm() < min_step) continue;
    const double h = std::atan2(d.y, d.x);
    if (have_prev) total += wrap_angle(h - prev);
    prev = h;
    have_prev = true;
    anchor = p;
  }
  return total;
}

// Heading of the first resolvable motion along the sequence; 0 when the
// track never moves more than min_step.
inline double initial_heading(std::span<const Vec2> pts, double min_step = 1e-3) {
  for (size_t i = 1; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - pts[0];
    if (d.norm() >= min_step) return std::atan2(d.y, d.x);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Polylines

class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    cum_.resize(pts_.size(), 0.0);
    for (size_t i = 1; i < pts_.size(); ++i) {
      cum_[i] = cum_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
    }
  }

  const std::vector<Vec2>& points() const { return pts_; }
  bool empty() const { return pts_.size() < 2; }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  Vec2 point_at(double s) const {
    if (pts_.empty()) throw std::invalid_argument("point_at on empty polyline");
    if (s <= 0.0) return pts_.front();
    if (s >= length()) return pts_.back();
    size_t i = 1;
    while (i < cum_.size() && cum_[i] < s) ++i;
    const double seg = cum_[i] - cum_[i - 1];
    const double f = seg > 0.0 ? (s - cum_[i - 1]) / seg : 0.0;
    return pts_[i - 1] + (pts_[i] - pts_[i - 1]) * f;
  }

  // Arc-length coordinate of the closest point on the polyline to p.
  // Ties resolve to the smaller arc length.
  double project(const Vec2& p) const {
    if (empty()) throw std::invalid_argument("project on degenerate polyline");
    double best_d2 = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (size_t i = 1; i < pts_.size(); ++i) {
      const Vec2 a = pts_[i - 1];
      const Vec2 b = pts_[i];
      const Vec2 ab = b - a;
      const double len2 = ab.squared_norm();
      double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const Vec2 q = a + ab * t;
      const double d2 = (p - q).squared_norm();
      if (d2 < best_d2 - 1e-12) {
        best_d2 = d2;
        best_s = cum_[i - 1] + std::sqrt(len2) * t;
      }
    }
    return best_s;
  }

 private:
  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

// ---------------------------------------------------------------------------
// Oriented bounding boxes

struct Obb {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;  // extent along heading
  double width = 0.0;   // extent across heading

  std::array<Vec2, 4> corners() const {
    const Vec2 ax = Vec2{std::cos(heading), std::sin(heading)};
    const Vec2 ay = Vec2{-ax.y, ax.x};
    const Vec2 dl = ax * (0.5 * length);
    const Vec2 dw = ay * (0.5 * width);
    return {center + dl + dw, center + dl - dw, center - dl - dw, center - dl + dw};
  }
};

namespace detail {
inline bool separated_on_axis(const Obb& a, const Obb& b, const Vec2& axis) {
  auto project = [&axis](const Obb& box, double& lo, double& hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -std::numeric_limits<double>::infinity();
    for (const Vec2& c : box.corners()) {
      const double v = c.dot(axis);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  };
  double alo, ahi, blo, bhi;
  project(a, alo, ahi);
  project(b, blo, bhi);
  return ahi < blo || bhi < alo;
}
}  // namespace detail

// Separating-axis test for two oriented rectangles. Touching boxes count as
// overlapping.
inline bool obb_overlap(const Obb& a, const Obb& b) {
  const Vec2 axes[4] = {
      {std::cos(a.heading), std::sin(a.heading)},
      {-std::sin(a.heading), std::cos(a.heading)},
      {std::cos(b.heading), std::sin(b.heading)},
      {-std::sin(b.heading), std::cos(b.heading)},
  };
  for (const Vec2& axis : axes) {
    if (detail::separated_on_axis(a, b, axis)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Interpolation

// Catmull-Rom spline through samples at uniform spacing dt_in, evaluated at
// time t (clamped to the sample range). Endpoints use one-sided tangents.
inline Vec2 catmull_rom(std::span<const Vec2> pts, double dt_in, double t) {
  if (pts.empty()) throw std::invalid_argument("catmull_rom on empty samples");
  if (pts.size() == 1) return pts[0];
  const double tmax = dt_in * static_cast<double>(pts.size() - 1);
  t = std::clamp(t, 0.0, tmax);
  size_t i = std::min(static_cast<size_t>(t / dt_in), pts.size() - 2);
  const double u = (t - dt_in * static_cast<double>(i)) / dt_in;
  const Vec2 p1 = pts[i];
  const Vec2 p2 = pts[i + 1];
  const Vec2 p0 = i > 0 ? pts[i - 1] : p1 + (p1 - p2);
  const Vec2 p3 = i + 2 < pts.size() ? pts[i + 2] : p2 + (p2 - p1);
  const double u2 = u * u;
  const double u3 = u2 * u;
  auto comp = [&](double a, double b, double c, double d) {
    return 0.5 * ((2.0 * b) + (-a + c) * u + (2.0 * a - 5.0 * b + 4.0 * c - d) * u2 +
                  (-a + 3.0 * b - 3.0 * c + d) * u3);
  };
  return {comp(p0.x, p1.x, p2.x, p3.x), comp(p0.y, p1.y, p2.y, p3.y)};
}

inline double arc_length(std::span<const Vec2> pts) {
  double total = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) total += (pts[i] - pts[i - 1]).norm();
  return total;
}

}  // namespace msl

#endif  // MSL_GEOMETRY_HPP_
