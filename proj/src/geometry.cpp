// Copyright 2026 The Detumble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "detumble/geometry.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace detumble {

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double reduce_quarter_turn(double angle) {
  const double quarter = 0.5 * kPi;
  double a = std::remainder(angle, quarter);
  if (a <= -0.25 * kPi) a += quarter;
  return a;
}

Polygon square_corners(const Vec2& center, double angle, double side) {
  const double h = 0.5 * side;
  return box_corners(center, angle, Vec2(-h, -h), Vec2(h, h));
}

Polygon box_corners(const Vec2& origin, double angle, const Vec2& lo, const Vec2& hi) {
  const Mat2 r = rotation(angle);
  return {origin + r * Vec2(lo.x(), lo.y()), origin + r * Vec2(hi.x(), lo.y()),
          origin + r * Vec2(hi.x(), hi.y()), origin + r * Vec2(lo.x(), hi.y())};
}

namespace {

bool separated_along_edges(const Polygon& a, const Polygon& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 edge = a[(i + 1) % a.size()] - a[i];
    const Vec2 axis = perp(edge);
    double a_min = std::numeric_limits<double>::infinity();
    double a_max = -a_min;
    double b_min = a_min;
    double b_max = -a_min;
    for (const Vec2& p : a) {
      a_min = std::min(a_min, axis.dot(p));
      a_max = std::max(a_max, axis.dot(p));
    }
    for (const Vec2& p : b) {
      b_min = std::min(b_min, axis.dot(p));
      b_max = std::max(b_max, axis.dot(p));
    }
    if (a_max < b_min || b_max < a_min) return true;
  }
  return false;
}

}  // namespace

bool polygons_intersect(const Polygon& a, const Polygon& b) {
  return !separated_along_edges(a, b) && !separated_along_edges(b, a);
}

ClosestFeature closest_on_square(const Vec2& center, double angle, double side, const Vec2& query) {
  const Mat2 r = rotation(angle);
  const Vec2 local = r.transpose() * (query - center);
  const double h = 0.5 * side;
  const double dx = std::abs(local.x()) - h;
  const double dy = std::abs(local.y()) - h;

  Vec2 point_local;
  Vec2 normal_local;
  double distance = 0.0;
  if (dx > 0.0 && dy > 0.0) {
    // Vertex region.
    const Vec2 corner(std::copysign(h, local.x()), std::copysign(h, local.y()));
    const Vec2 diff = local - corner;
    point_local = corner;
    distance = diff.norm();
    normal_local = diff / distance;
  } else if (dx >= dy) {
    // Closest to an x face (outside or inside).
    point_local = Vec2(std::copysign(h, local.x()), std::clamp(local.y(), -h, h));
    normal_local = Vec2(sign_nonzero(local.x()), 0.0);
    distance = dx;
  } else {
    point_local = Vec2(std::clamp(local.x(), -h, h), std::copysign(h, local.y()));
    normal_local = Vec2(0.0, sign_nonzero(local.y()));
    distance = dy;
  }
  return {center + r * point_local, r * normal_local, distance};
}

double distance_to_convex(std::span<const Vec2> hull, const Vec2& query) {
  bool inside = true;
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % n];
    const Vec2 ab = b - a;
    if (cross(ab, query - a) < 0.0) inside = false;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((query - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (a + t * ab - query).norm());
  }
  return inside ? 0.0 : best;
}

}  // namespace detumble
