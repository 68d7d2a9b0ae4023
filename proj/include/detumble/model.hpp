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

// Robot and target description, system state, and planar kinematics of the
// dual-arm free-floating chaser.

#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

#include "detumble/geometry.hpp"

namespace detumble {

enum class Arm { Left = 0, Right = 1 };

inline constexpr std::array<Arm, 2> kArms{Arm::Left, Arm::Right};
inline constexpr int index(Arm arm) { return static_cast<int>(arm); }
inline constexpr Arm other(Arm arm) { return arm == Arm::Left ? Arm::Right : Arm::Left; }
const char* to_string(Arm arm);

/// Raised for malformed or physically invalid model / config input.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BaseParams {
  double mass_kg = 8.31;
  double inertia_kgm2 = 0.135;
  double width_m = 0.320;        // l_a, across the arm mounts
  double depth_m = 0.160;        // l_b
  double cog_offset_m = 0.0761;  // COG distance behind the mount edge

  friend bool operator==(const BaseParams&, const BaseParams&) = default;
};

struct LinkParams {
  double mass_kg = 0.0;
  double inertia_kgm2 = 0.0;
  double length_m = 0.0;      // joint-to-joint length (link 3: U depth)
  double cog_offset_m = 0.0;  // along the link's local y axis

  friend bool operator==(const LinkParams&, const LinkParams&) = default;
};

/// U-shaped end effector: two tip spheres at (+-width/2, depth) in the link-3 frame.
struct EffectorParams {
  double width_m = 0.137;       // l_c
  double depth_m = 0.110;       // l_d
  double tip_radius_m = 0.030;  // d

  friend bool operator==(const EffectorParams&, const EffectorParams&) = default;
};

struct TargetParams {
  double mass_kg = 2.35;
  double inertia_kgm2 = 9.33e-3;
  double side_m = 0.150;  // l_t

  friend bool operator==(const TargetParams&, const TargetParams&) = default;
};

struct RobotModel {
  BaseParams base;
  std::array<LinkParams, 3> links{{
      {0.633, 2.55e-3, 0.250, 0.229},
      {0.647, 1.19e-3, 0.175, 0.162},
      {0.207, 5.52e-4, 0.110, 0.0631},
  }};
  EffectorParams effector;
  TargetParams target;
  /// Joint-1 positions in the base COG frame.
  std::array<Vec2, 2> mounts{Vec2(-0.160, 0.0761), Vec2(0.160, 0.0761)};

  void validate() const;
  double chaser_mass() const;
  /// Tip-sphere centre offsets in the link-3 frame.
  std::array<Vec2, 2> tip_offsets() const;
  /// Base outline in the world for the given base pose.
  Polygon base_outline(const Vec3& base_pose) const;

  friend bool operator==(const RobotModel&, const RobotModel&) = default;
};

/// Reference robot and target.
RobotModel default_model();

/// Parses a versioned JSON model description. Every field is required.
RobotModel load_model(std::string_view config_text);
RobotModel load_model_file(const std::string& path);
std::string dump_model(const RobotModel& model);

// Generalized coordinate layout: base (x, y, theta), left joints, right joints.
inline constexpr int kBaseDofs = 3;
inline constexpr int kArmDofs = 3;
inline constexpr int kChaserDofs = kBaseDofs + 2 * kArmDofs;
inline constexpr int arm_offset(Arm arm) { return kBaseDofs + kArmDofs * index(arm); }

struct SystemState {
  Vec9 q = Vec9::Zero();   // base pose then joint angles
  Vec9 qd = Vec9::Zero();  // base velocity then joint rates
  Vec3 target_pose = Vec3::Zero();  // x, y, theta
  Vec3 target_vel = Vec3::Zero();   // vx, vy, omega
  double time = 0.0;

  Vec3 base_pose() const { return q.head<3>(); }
  Vec3 base_vel() const { return qd.head<3>(); }
  Vec3 joint_angles(Arm arm) const { return q.segment<3>(arm_offset(arm)); }
  Vec3 joint_rates(Arm arm) const { return qd.segment<3>(arm_offset(arm)); }
  void set_joint_angles(Arm arm, const Vec3& a) { q.segment<3>(arm_offset(arm)) = a; }
  void set_joint_rates(Arm arm, const Vec3& r) { qd.segment<3>(arm_offset(arm)) = r; }

  bool finite() const;
  /// Wraps all angles into (-pi, pi].
  void normalize_angles();
};

struct EffectorPose {
  Vec2 position;  // link-3 frame origin (joint 3)
  double angle = 0.0;
  std::array<Vec2, 2> tips;
  Vec3 pose() const { return {position.x(), position.y(), angle}; }
};

/// Per-arm chain positions in the world frame.
struct ArmChain {
  std::array<Vec2, 3> joints;     // joint i position
  std::array<double, 3> angles;   // absolute link angles
  std::array<Vec2, 3> link_coms;  // link COM positions
  Vec2 effector;                  // joint-3 position (effector frame origin)
};

/// Direction of a link's local +y axis for absolute angle `a`.
inline Vec2 link_axis(double a) { return {-std::sin(a), std::cos(a)}; }

ArmChain arm_chain(const RobotModel& model, const Vec9& q, Arm arm);

EffectorPose forward_kinematics(const RobotModel& model, const SystemState& state, Arm arm);

/// Fixed-base Jacobian of the effector frame (vx, vy, omega) w.r.t. the arm's joint rates.
Mat3 arm_jacobian(const RobotModel& model, const SystemState& state, Arm arm);

/// Effector-frame Jacobian w.r.t. the base velocity (vx, vy, omega).
Mat3 base_jacobian(const RobotModel& model, const SystemState& state, Arm arm);

/// Velocity of a world point rigidly attached to link 3 of `arm`.
Vec2 effector_point_velocity(const RobotModel& model, const SystemState& state, Arm arm,
                             const Vec2& point);

/// Effector velocity (vx, vy, omega) of the arm's link-3 frame.
Vec3 effector_velocity(const RobotModel& model, const SystemState& state, Arm arm);

/// sqrt(det(J J^T)) of the fixed-base 2x3 translational Jacobian.
double manipulability(const RobotModel& model, const SystemState& state, Arm arm);

/// Planar inverse kinematics placing the effector frame at `pose` (world), for the
/// current base pose. `elbow` selects the sign of joint 2. Throws ValidationError if
/// unreachable.
Vec3 solve_arm_ik(const RobotModel& model, const Vec3& base_pose, Arm arm, const Vec3& pose,
                  double elbow);

}  // namespace detumble
