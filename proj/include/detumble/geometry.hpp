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

// Planar geometry primitives shared by the kinematics, contact and caging code.

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/Core>

namespace detumble {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

inline constexpr double kPi = std::numbers::pi;

inline Mat2 rotation(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

/// z-component of the planar cross product a x b.
inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// z-hat x v, i.e. v rotated by +90 degrees.
inline Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// sign() with sign(0) = +1.
inline double sign_nonzero(double x) { return x < 0.0 ? -1.0 : 1.0; }

/// Reduces an angle modulo pi/2 into (-pi/4, pi/4]; a square is invariant
/// under quarter turns, so any of its four body frames is equally valid.
double reduce_quarter_turn(double angle);

using Polygon = std::array<Vec2, 4>;

/// Corners (counter-clockwise) of a square of the given side centred at `center`.
Polygon square_corners(const Vec2& center, double angle, double side);

/// Corners (counter-clockwise) of an axis-aligned box [lo, hi] placed by a rigid pose.
Polygon box_corners(const Vec2& origin, double angle, const Vec2& lo, const Vec2& hi);

/// Separating-axis overlap test for two convex quadrilaterals.
bool polygons_intersect(const Polygon& a, const Polygon& b);

struct ClosestFeature {
  Vec2 point;        // closest point on the square boundary
  Vec2 normal;       // outward unit normal at that point
  double distance;   // signed; negative when the query point is inside
};

/// Closest boundary point of a square to `query`, with the outward normal of the
/// closest feature (face normal, or vertex direction at corners).
ClosestFeature closest_on_square(const Vec2& center, double angle, double side, const Vec2& query);

/// Euclidean distance from a point to a convex polygon (zero inside).
double distance_to_convex(std::span<const Vec2> hull, const Vec2& query);

}  // namespace detumble
