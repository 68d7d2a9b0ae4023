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

#include <random>

#include <gtest/gtest.h>

#include "detumble/geometry.hpp"

namespace detumble {
namespace {

TEST(Geometry, WrapAngleRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi + 0.1), -kPi + 0.1, 1e-12);
  EXPECT_NEAR(wrap_angle(-0.3), -0.3, 1e-15);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double w = wrap_angle(a);
    EXPECT_GT(w, -kPi);
    EXPECT_LE(w, kPi);
    EXPECT_NEAR(std::remainder(a - w, 2 * kPi), 0.0, 1e-9);
  }
}

TEST(Geometry, QuarterTurnReduction) {
  EXPECT_NEAR(reduce_quarter_turn(kPi / 2 + 0.2), 0.2, 1e-12);
  EXPECT_NEAR(reduce_quarter_turn(-kPi + 0.1), 0.1, 1e-12);
  EXPECT_NEAR(reduce_quarter_turn(kPi / 4), kPi / 4, 1e-12);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double r = reduce_quarter_turn(a);
    EXPECT_GT(r, -kPi / 4 - 1e-12);
    EXPECT_LE(r, kPi / 4 + 1e-12);
    EXPECT_NEAR(std::remainder(a - r, kPi / 2), 0.0, 1e-9);
  }
}

TEST(Geometry, RotationAndCross) {
  const Vec2 v = rotation(kPi / 2) * Vec2(1.0, 0.0);
  EXPECT_NEAR(v.x(), 0.0, 1e-15);
  EXPECT_NEAR(v.y(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(cross(Vec2(1, 0), Vec2(0, 1)), 1.0);
  EXPECT_TRUE(perp(Vec2(2, 3)).isApprox(Vec2(-3, 2)));
  EXPECT_EQ(sign_nonzero(0.0), 1.0);
  EXPECT_EQ(sign_nonzero(-1e-300), -1.0);
}

TEST(Geometry, SquareCornersCounterClockwise) {
  const Polygon c = square_corners(Vec2(1.0, 2.0), 0.3, 0.15);
  for (int i = 0; i < 4; ++i) {
    const Vec2 e1 = c[(i + 1) % 4] - c[i];
    const Vec2 e2 = c[(i + 2) % 4] - c[(i + 1) % 4];
    EXPECT_NEAR(e1.norm(), 0.15, 1e-12);
    EXPECT_GT(cross(e1, e2), 0.0);
    EXPECT_NEAR((c[i] - Vec2(1.0, 2.0)).norm(), 0.15 / std::sqrt(2.0), 1e-12);
  }
}

TEST(Geometry, ClosestOnSquareFaceAndCorner) {
  // Face: query straight out from the +x face.
  ClosestFeature f = closest_on_square(Vec2::Zero(), 0.0, 0.2, Vec2(0.3, 0.05));
  EXPECT_TRUE(f.point.isApprox(Vec2(0.1, 0.05)));
  EXPECT_TRUE(f.normal.isApprox(Vec2(1.0, 0.0)));
  EXPECT_NEAR(f.distance, 0.2, 1e-12);
  // Corner region.
  f = closest_on_square(Vec2::Zero(), 0.0, 0.2, Vec2(0.2, 0.2));
  EXPECT_TRUE(f.point.isApprox(Vec2(0.1, 0.1)));
  EXPECT_TRUE(f.normal.isApprox(Vec2(1.0, 1.0).normalized()));
  EXPECT_NEAR(f.distance, std::sqrt(0.02), 1e-12);
  // Inside: negative, nearest face.
  f = closest_on_square(Vec2::Zero(), 0.0, 0.2, Vec2(0.0, -0.08));
  EXPECT_NEAR(f.distance, -0.02, 1e-12);
  EXPECT_TRUE(f.normal.isApprox(Vec2(0.0, -1.0)));
}

TEST(Geometry, ClosestOnSquareMatchesBruteForce) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 300; ++i) {
    const Vec2 center(u(rng), u(rng));
    const double a = ang(rng);
    const Vec2 q(u(rng) * 2, u(rng) * 2);
    const ClosestFeature f = closest_on_square(center, a, 0.15, q);
    // Dense boundary sampling.
    const Polygon c = square_corners(center, a, 0.15);
    double best = 1e9;
    for (int e = 0; e < 4; ++e) {
      for (int k = 0; k <= 2000; ++k) {
        const Vec2 p = c[e] + (c[(e + 1) % 4] - c[e]) * (k / 2000.0);
        best = std::min(best, (p - q).norm());
      }
    }
    EXPECT_NEAR(std::abs(f.distance), best, 1e-4);
    EXPECT_NEAR(f.normal.norm(), 1.0, 1e-12);
  }
}

TEST(Geometry, PolygonOverlap) {
  const Polygon a = square_corners(Vec2::Zero(), 0.0, 1.0);
  EXPECT_TRUE(polygons_intersect(a, square_corners(Vec2(0.9, 0.0), 0.0, 1.0)));
  EXPECT_FALSE(polygons_intersect(a, square_corners(Vec2(1.1, 0.0), 0.0, 1.0)));
  // Rotated 45 deg: corner reaches sqrt(2)/2 along x.
  EXPECT_TRUE(polygons_intersect(a, square_corners(Vec2(1.2, 0.0), kPi / 4, 1.0)));
  EXPECT_FALSE(polygons_intersect(a, square_corners(Vec2(1.25, 0.0), kPi / 4, 1.0)));
  const Polygon box = box_corners(Vec2(2.0, 0.0), 0.0, Vec2(-0.1, -2.0), Vec2(0.1, 2.0));
  EXPECT_FALSE(polygons_intersect(a, box));
}

TEST(Geometry, DistanceToConvex) {
  const Polygon a = square_corners(Vec2::Zero(), 0.0, 2.0);
  EXPECT_DOUBLE_EQ(distance_to_convex(a, Vec2(0.2, 0.3)), 0.0);
  EXPECT_NEAR(distance_to_convex(a, Vec2(3.0, 0.0)), 2.0, 1e-12);
  EXPECT_NEAR(distance_to_convex(a, Vec2(4.0, 5.0)), 5.0, 1e-12);
}

}  // namespace
}  // namespace detumble
