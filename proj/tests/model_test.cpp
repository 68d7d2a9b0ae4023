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

#include "detumble/model.hpp"

namespace detumble {
namespace {

SystemState random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SystemState s;
  for (int i = 0; i < kChaserDofs; ++i) {
    s.q(i) = u(rng);
    s.qd(i) = u(rng);
  }
  return s;
}

TEST(Model, ReferenceValues) {
  const RobotModel m = default_model();
  EXPECT_DOUBLE_EQ(m.base.mass_kg, 8.31);
  EXPECT_DOUBLE_EQ(m.base.inertia_kgm2, 0.135);
  EXPECT_DOUBLE_EQ(m.links[0].length_m, 0.250);
  EXPECT_DOUBLE_EQ(m.links[1].cog_offset_m, 0.162);
  EXPECT_DOUBLE_EQ(m.links[2].inertia_kgm2, 5.52e-4);
  EXPECT_DOUBLE_EQ(m.effector.width_m, 0.137);
  EXPECT_DOUBLE_EQ(m.target.inertia_kgm2, 9.33e-3);
  // 8.31 + 2 (0.633 + 0.647 + 0.207)
  EXPECT_NEAR(m.chaser_mass(), 11.284, 1e-12);
  EXPECT_NO_THROW(m.validate());
}

TEST(Model, ZeroPoseKinematics) {
  const RobotModel m = default_model();
  const SystemState s;
  // All links point along +y from the mounts.
  const EffectorPose l = forward_kinematics(m, s, Arm::Left);
  EXPECT_NEAR(l.position.x(), -0.160, 1e-15);
  EXPECT_NEAR(l.position.y(), 0.0761 + 0.250 + 0.175, 1e-15);
  EXPECT_NEAR(l.tips[0].x(), -0.160 - 0.0685, 1e-15);
  EXPECT_NEAR(l.tips[1].y(), 0.5011 + 0.110, 1e-15);
  const EffectorPose r = forward_kinematics(m, s, Arm::Right);
  EXPECT_NEAR(r.position.x(), 0.160, 1e-15);
  // Stretched arm: joint 2 straight, zero manipulability.
  EXPECT_NEAR(manipulability(m, s, Arm::Right), 0.0, 1e-15);
}

TEST(Model, RotatedBaseKinematics) {
  const RobotModel m = default_model();
  SystemState s;
  s.q << 0.1, -0.2, kPi / 2, 0.0, 0.0, 0.0, 0.3, -0.4, 0.2;
  // Left arm straight out along base +y, which is world -x.
  const EffectorPose l = forward_kinematics(m, s, Arm::Left);
  const Vec2 mount = Vec2(0.1, -0.2) + Vec2(-0.0761, -0.160);
  EXPECT_NEAR(l.position.x(), mount.x() - 0.425, 1e-14);
  EXPECT_NEAR(l.position.y(), mount.y(), 1e-14);
  EXPECT_NEAR(l.angle, kPi / 2, 1e-15);
  // Right arm by hand.
  const Vec2 rm = Vec2(0.1, -0.2) + rotation(kPi / 2) * Vec2(0.160, 0.0761);
  const double a1 = kPi / 2 + 0.3;
  const double a2 = a1 - 0.4;
  const Vec2 j3 = rm + 0.25 * Vec2(-std::sin(a1), std::cos(a1)) + 0.175 * Vec2(-std::sin(a2), std::cos(a2));
  const EffectorPose r = forward_kinematics(m, s, Arm::Right);
  EXPECT_NEAR((r.position - j3).norm(), 0.0, 1e-14);
  EXPECT_NEAR(r.angle, a2 + 0.2, 1e-15);
}

TEST(Model, ManipulabilityClosedForm) {
  const RobotModel m = default_model();
  std::mt19937 rng(5);
  for (int i = 0; i < 100; ++i) {
    const SystemState s = random_state(rng);
    for (Arm arm : kArms) {
      const double phi2 = s.joint_angles(arm)(1);
      EXPECT_NEAR(manipulability(m, s, arm), 0.25 * 0.175 * std::abs(std::sin(phi2)), 1e-14);
    }
  }
}

TEST(Model, JacobiansMatchFiniteDifferences) {
  const RobotModel m = default_model();
  std::mt19937 rng(9);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const SystemState s = random_state(rng);
    for (Arm arm : kArms) {
      SystemState plus = s, minus = s;
      plus.q += h * s.qd;
      minus.q -= h * s.qd;
      const Vec3 fd = (forward_kinematics(m, plus, arm).pose() - forward_kinematics(m, minus, arm).pose()) / (2 * h);
      const Vec3 v = effector_velocity(m, s, arm);
      EXPECT_NEAR((fd - v).norm(), 0.0, 1e-8);
      // Tip velocity through the rigid-body transfer.
      const Vec2 tip = forward_kinematics(m, s, arm).tips[1];
      const Vec2 tip_fd = (forward_kinematics(m, plus, arm).tips[1] - forward_kinematics(m, minus, arm).tips[1]) / (2 * h);
      EXPECT_NEAR((effector_point_velocity(m, s, arm, tip) - tip_fd).norm(), 0.0, 1e-8);
    }
  }
}

TEST(Model, InverseKinematicsRoundTrip) {
  const RobotModel m = default_model();
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> bend(0.2, 2.5);
  for (int trial = 0; trial < 200; ++trial) {
    SystemState s = random_state(rng);
    const Arm arm = trial % 2 ? Arm::Left : Arm::Right;
    const double elbow = trial % 3 ? 1.0 : -1.0;
    Vec3 joints(u(rng), elbow * bend(rng), u(rng));
    s.set_joint_angles(arm, joints);
    const Vec3 pose = forward_kinematics(m, s, arm).pose();
    const Vec3 solved = solve_arm_ik(m, s.base_pose(), arm, pose, elbow);
    EXPECT_NEAR(wrap_angle(solved(0) - joints(0)), 0.0, 1e-9);
    EXPECT_NEAR(wrap_angle(solved(1) - joints(1)), 0.0, 1e-9);
    EXPECT_NEAR(wrap_angle(solved(2) - joints(2)), 0.0, 1e-9);
  }
  EXPECT_THROW(solve_arm_ik(m, Vec3::Zero(), Arm::Left, Vec3(0.0, 2.0, 0.0), 1.0), ValidationError);
}

TEST(Model, BaseOutline) {
  const RobotModel m = default_model();
  const Polygon p = m.base_outline(Vec3::Zero());
  double ymax = -1, ymin = 1, xmax = -1;
  for (const Vec2& c : p) {
    ymax = std::max(ymax, c.y());
    ymin = std::min(ymin, c.y());
    xmax = std::max(xmax, c.x());
  }
  EXPECT_NEAR(ymax, 0.0761, 1e-15);
  EXPECT_NEAR(ymin, 0.0761 - 0.160, 1e-15);
  EXPECT_NEAR(xmax, 0.160, 1e-15);
}

TEST(Model, JsonRoundTrip) {
  RobotModel m = default_model();
  m.target.mass_kg = 3.1;
  m.mounts[0] = Vec2(-0.2, 0.05);
  const RobotModel back = load_model(dump_model(m));
  EXPECT_EQ(back, m);
}

TEST(Model, JsonRejectsBadInput) {
  EXPECT_THROW(load_model("{"), ValidationError);
  EXPECT_THROW(load_model("[]"), ValidationError);
  EXPECT_THROW(load_model(R"({"schema_version": 2})"), ValidationError);
  std::string text = dump_model(default_model());
  const auto at = text.find("\"mass_kg\": 8.31");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 15, "\"mass_kg\": -1.0");
  EXPECT_THROW(load_model(text), ValidationError);
  std::string missing = dump_model(default_model());
  missing.replace(missing.find("\"side_m\""), 8, "\"sid_m\"");
  EXPECT_THROW(load_model(missing), ValidationError);
  EXPECT_THROW(load_model_file("/nonexistent/model.json"), ValidationError);
}

TEST(Model, StateHelpers) {
  SystemState s;
  s.q(2) = 3 * kPi;
  s.target_pose.z() = -5.0;
  s.normalize_angles();
  EXPECT_NEAR(s.q(2), kPi, 1e-12);
  EXPECT_NEAR(s.target_pose.z(), -5.0 + 2 * kPi, 1e-12);
  EXPECT_TRUE(s.finite());
  s.qd(4) = std::nan("");
  EXPECT_FALSE(s.finite());
}

}  // namespace
}  // namespace detumble
