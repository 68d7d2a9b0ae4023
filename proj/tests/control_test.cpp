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

#include "detumble/control.hpp"

namespace detumble {
namespace {

TEST(TimeScaling, EndpointsAndMidpoint) {
  for (double T : {0.3, 1.0, 2.7}) {
    EXPECT_NEAR(cubic_time_scaling(0.0, T).s, 0.0, 1e-12);
    EXPECT_NEAR(cubic_time_scaling(T, T).s, 1.0, 1e-12);
    EXPECT_NEAR(cubic_time_scaling(0.0, T).s_dot, 0.0, 1e-12);
    EXPECT_NEAR(cubic_time_scaling(T, T).s_dot, 0.0, 1e-12);
    EXPECT_NEAR(cubic_time_scaling(0.5 * T, T).s, 0.5, 1e-12);
    EXPECT_NEAR(cubic_time_scaling(0.5 * T, T).s_dot, 1.5 / T, 1e-12);
    EXPECT_EQ(cubic_time_scaling(-1.0, T).s, 0.0);
    EXPECT_EQ(cubic_time_scaling(T + 1.0, T).s, 1.0);
  }
}

TEST(TimeScaling, RateIsDerivative) {
  const double T = 1.7, h = 1e-6;
  for (double t = 0.05; t < T; t += 0.1) {
    const double fd = (cubic_time_scaling(t + h, T).s - cubic_time_scaling(t - h, T).s) / (2 * h);
    EXPECT_NEAR(cubic_time_scaling(t, T).s_dot, fd, 1e-8);
    EXPECT_GE(cubic_time_scaling(t, T).s_dot, 0.0);
  }
}

TEST(Trajectory, PlanAndSamples) {
  const TrajectoryPlan p = make_plan(Vec3(0, 0, 3.0), Vec3(1, 2, -3.0), 2.0, 5.0);
  // Goal angle unwrapped the short way round.
  EXPECT_NEAR(p.goal.z(), 3.0 + (2 * kPi - 6.0), 1e-12);
  EXPECT_DOUBLE_EQ(p.end_time(), 7.0);
  const TrajectorySample mid = eval_trajectory(p, 1.0);
  EXPECT_TRUE(mid.pose.head<2>().isApprox(Vec2(0.5, 1.0)));
  EXPECT_TRUE(mid.velocity.head<2>().isApprox(Vec2(0.75, 1.5)));
  EXPECT_THROW(make_plan(Vec3::Zero(), Vec3::Zero(), 0.0, 0.0), ValidationError);
}

TEST(Trajectory, DurationPolicy) {
  DurationPolicy p;  // 0.1 m/s, 1 s
  EXPECT_DOUBLE_EQ(trajectory_duration(0.05, p), 1.0);
  EXPECT_DOUBLE_EQ(trajectory_duration(0.25, p), 2.5);
}

TEST(Tracker, FeedforwardOnlyWithZeroGains) {
  TrackerState st;
  TrajectorySample d;
  d.pose = Vec3(1, 1, 1);
  d.velocity = Vec3(0.1, -0.2, 0.3);
  EXPECT_TRUE(track(d, Vec3::Zero(), TrackerGains{}, st, 1e-3).isApprox(d.velocity));
}

TEST(Tracker, ProportionalIntegralDerivative) {
  TrackerGains g;
  g.kp = Vec3::Constant(2.0);
  g.ki = Vec3::Constant(10.0);
  g.kd = Vec3::Constant(0.5);
  g.integral_limit = 0.01;
  TrackerState st;
  TrajectorySample d;
  d.pose = Vec3(0.1, 0.0, 0.0);
  Vec3 v = track(d, Vec3::Zero(), g, st, 0.01);
  // Error 0.1, integral 1e-3, no derivative on the first call.
  EXPECT_NEAR(v.x(), 2.0 * 0.1 + 10.0 * 1e-3, 1e-12);
  d.pose.x() = 0.2;
  v = track(d, Vec3::Zero(), g, st, 0.01);
  EXPECT_NEAR(v.x(), 2.0 * 0.2 + 10.0 * 3e-3 + 0.5 * 10.0, 1e-12);
  for (int i = 0; i < 100; ++i) track(d, Vec3::Zero(), g, st, 0.01);
  EXPECT_NEAR(st.integral.x(), 0.01, 1e-15);  // clamped
  // Angle errors wrap.
  TrackerState sa;
  d.pose = Vec3(0, 0, kPi - 0.1);
  EXPECT_NEAR(track(d, Vec3(0, 0, -kPi + 0.1), g, sa, 0.01).z(), 2.0 * -0.2 + 10.0 * -0.002, 1e-12);
}

TEST(Impedance, DamperSteadyVelocity) {
  // K = 0: the internal model creeps at F / d.
  const ImpedanceParams p{0.1, 1.5, 0.0};
  ImpedanceState s = start_impedance(Vec3::Zero());
  const Vec3 f(0.6, -0.3, 0.0);
  Vec3 v;
  for (int i = 0; i < 5000; ++i) v = impedance_velocity(p, s, f, 1e-3);
  EXPECT_NEAR(v.x(), 0.6 / 1.5, 0.01 * 0.4);
  EXPECT_NEAR(v.y(), -0.3 / 1.5, 0.01 * 0.2);
}

TEST(Impedance, SpringSteadyDisplacement) {
  const ImpedanceParams p{0.1, 1.5, 10.0};
  ImpedanceState s = start_impedance(Vec3::Zero());
  const Vec3 f(0.6, 0.0, 0.05);
  for (int i = 0; i < 10000; ++i) impedance_velocity(p, s, f, 1e-3);
  EXPECT_NEAR(s.displacement.x(), 0.06, 0.01 * 0.06);
  EXPECT_NEAR(s.displacement.z(), 0.005, 0.01 * 0.005);
  EXPECT_NEAR(s.velocity.x(), 0.0, 1e-9);
}

TEST(Impedance, MatchesAnalyticStepResponse) {
  // Underdamped: m = 0.1, d = 0.2, k = 10.
  const double m = 0.1, d = 0.2, k = 10.0, F = 1.0;
  const ImpedanceParams p{m, d, k};
  ImpedanceState s = start_impedance(Vec3::Zero());
  const double zeta = d / (2 * std::sqrt(k * m));
  const double wn = std::sqrt(k / m);
  const double wd = wn * std::sqrt(1 - zeta * zeta);
  const double dt = 1e-4;
  for (int i = 1; i <= 10000; ++i) {
    impedance_velocity(p, s, Vec3(F, 0, 0), dt);
    if (i % 1000 == 0) {
      const double t = i * dt;
      const double x = F / k * (1 - std::exp(-zeta * wn * t) *
                                        (std::cos(wd * t) + zeta / std::sqrt(1 - zeta * zeta) * std::sin(wd * t)));
      EXPECT_NEAR(s.displacement.x(), x, 1e-4);
    }
  }
}

TEST(Impedance, PassiveWithoutForce) {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ImpedanceParams p{u(rng), u(rng) * 5, u(rng) * 50};
    ImpedanceState s = start_impedance(Vec3::Zero());
    s.displacement = Vec3(0.02, -0.01, 0.1);
    s.velocity = Vec3(-0.3, 0.2, 0.0);
    auto energy = [&] {
      return 0.5 * p.mass * s.velocity.squaredNorm() + 0.5 * p.stiffness * s.displacement.squaredNorm();
    };
    double e = energy();
    for (int i = 0; i < 2000; ++i) {
      impedance_velocity(p, s, Vec3::Zero(), 1e-3);
      const double next = energy();
      EXPECT_LE(next, e * (1 + 1e-12) + 1e-18);
      e = next;
    }
  }
}

TEST(Impedance, Validation) {
  EXPECT_THROW((ImpedanceParams{0.0, 1.0, 1.0}.validate()), ValidationError);
  EXPECT_THROW((ImpedanceParams{0.1, -1.0, 1.0}.validate()), ValidationError);
  EXPECT_THROW((ImpedanceParams{0.1, 1.0, -1.0}.validate()), ValidationError);
  EXPECT_NO_THROW((ImpedanceParams{0.01, 0.0, 0.0}.validate()));
}

TEST(ContactPlanning, ContactPointRule) {
  const double lt = 0.15, a = 0.8;
  EXPECT_TRUE(select_contact_point(0.2, 1.0, a, lt).isApprox(Vec2(0.075, -0.06)));
  EXPECT_TRUE(select_contact_point(-0.2, 1.0, a, lt).isApprox(Vec2(-0.075, 0.06)));
  EXPECT_TRUE(select_contact_point(-0.2, -1.0, a, lt).isApprox(Vec2(-0.075, -0.06)));
  EXPECT_TRUE(select_contact_point(0.0, 1.0, a, lt).isApprox(Vec2(0.075, -0.06)));
}

TEST(ContactPlanning, GoalPosition) {
  const Vec3 pose(0.1, 0.4, 0.2);
  const Vec3 vel(0.01, -0.02, 1.0);
  const Vec2 r_tc(0.075, -0.06), r_ch(0.01, 0.02);
  const Vec2 p = goal_position(pose, vel, 1.5, r_tc, r_ch);
  const double th = 0.2 + 1.5;
  const Vec2 expected(0.1 + 0.015 + std::cos(th) * 0.075 + std::sin(th) * 0.06 + 0.01,
                      0.4 - 0.03 + std::sin(th) * 0.075 - std::cos(th) * 0.06 + 0.02);
  EXPECT_NEAR((p - expected).norm(), 0.0, 1e-14);
}

TEST(ContactPlanning, GoalGeometry) {
  const RobotModel m = default_model();
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const ApproachParams ap;
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 pose(0.1 * u(rng), 0.4 + 0.1 * u(rng), 3 * u(rng));
    const Vec3 vel(0.03 * u(rng), 0.03 * u(rng), u(rng));
    const double T = 1.0 + std::abs(u(rng));
    const ContactGoal g = plan_contact_goal(m, pose, vel, T, ap);
    // Contact point lies on the predicted square's boundary, on the chosen face.
    const Vec2 c = pose.head<2>() + T * vel.head<2>();
    const ClosestFeature f = closest_on_square(c, pose.z() + vel.z() * T, m.target.side_m, g.contact_point);
    EXPECT_NEAR(f.distance, 0.0, 1e-12);
    EXPECT_NEAR(g.face_normal.norm(), 1.0, 1e-12);
    EXPECT_NEAR(g.face_normal.dot(g.contact_point - c), 0.5 * m.target.side_m, 1e-12);
    EXPECT_LE(std::abs(g.target_angle), kPi / 4 + 1e-12);
    // The striking tip sphere touches the contact point, outside the face.
    const Vec2 tip = g.effector_goal.head<2>() + rotation(g.effector_goal.z()) * m.tip_offsets()[g.tip];
    EXPECT_NEAR((tip - g.contact_point).norm(), m.effector.tip_radius_m, 1e-12);
    EXPECT_GT((tip - g.contact_point).dot(g.face_normal), 0.0);
    // The +x face of the reduced frame faces the side picked by u_t.
    EXPECT_GT(g.face_normal.x() * sign_nonzero(vel.x()), 0.0);
  }
}

TEST(ApproachParams, Validation) {
  EXPECT_NO_THROW(ApproachParams{}.validate());
  EXPECT_THROW((ApproachParams{1.2, 0.1, 0.1}.validate()), ValidationError);
}

}  // namespace
}  // namespace detumble
