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

// Planar free-floating dual-arm equation of motion, momentum and the
// generalized Jacobian, plus the target's rigid-body motion.

#pragma once

#include <functional>
#include <stdexcept>

#include "detumble/model.hpp"

namespace detumble {

/// Joint-space inertia of the chaser, ordered base (3), left arm (3), right arm (3).
struct GeneralizedInertia {
  Mat9 matrix = Mat9::Zero();

  Mat3 base() const { return matrix.block<3, 3>(0, 0); }
  Mat3 arm(Arm a) const { return matrix.block<3, 3>(arm_offset(a), arm_offset(a)); }
  Mat3 coupling(Arm a) const { return matrix.block<3, 3>(0, arm_offset(a)); }
  Eigen::Matrix<double, 3, 6> coupling() const { return matrix.block<3, 6>(0, kBaseDofs); }
};

/// Applied loads. Effector wrenches act at the link-3 frame origin; the target
/// wrench acts at the target COG. All in world coordinates (Fx, Fy, Mz).
struct DynamicsInput {
  std::array<Vec3, 2> joint_torques{Vec3::Zero(), Vec3::Zero()};
  Vec3 base_wrench = Vec3::Zero();
  std::array<Vec3, 2> effector_wrenches{Vec3::Zero(), Vec3::Zero()};
  Vec3 target_wrench = Vec3::Zero();

  bool finite() const;
};

struct Momentum {
  Vec2 linear = Vec2::Zero();
  double angular = 0.0;  // about the world origin
};

inline Momentum operator+(const Momentum& a, const Momentum& b) {
  return {a.linear + b.linear, a.angular + b.angular};
}

enum class Integrator { RungeKutta4, SemiImplicitEuler };

/// Raised when a force or state handed to the integrator is not finite.
class DynamicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

GeneralizedInertia assemble_inertia(const RobotModel& model, const SystemState& state);

/// Velocity-product (Coriolis/centrifugal) generalized forces; no gravity.
Vec9 nonlinear_terms(const RobotModel& model, const SystemState& state);

/// Generalized force produced by an effector wrench, J_h^T F_h.
Vec9 effector_generalized_force(const RobotModel& model, const SystemState& state, Arm arm,
                                const Vec3& wrench);

/// Chaser generalized accelerations from H qdd + c = Q.
Vec9 chaser_acceleration(const RobotModel& model, const SystemState& state,
                         const DynamicsInput& input);

Momentum system_momentum(const RobotModel& model, const SystemState& state);
Momentum target_momentum(const RobotModel& model, const SystemState& state);

/// The base rows of H qd: linear momentum and angular momentum about the base COG.
Vec3 base_momentum_rows(const RobotModel& model, const SystemState& state);

double chaser_kinetic_energy(const RobotModel& model, const SystemState& state);
double target_kinetic_energy(const RobotModel& model, const SystemState& state);

/// Stacked (left, right) generalized Jacobian mapping the six joint rates to the
/// two effector velocities at fixed system momentum.
Mat6 generalized_jacobian(const RobotModel& model, const SystemState& state);

/// Stacked J_b H_b^-1 P: effector velocity carried by the current momentum.
Vec6 momentum_velocity(const RobotModel& model, const SystemState& state);

/// Extra loads evaluated at every integrator stage (e.g. contact forces).
using StageForces = std::function<void(const SystemState&, DynamicsInput&)>;

inline constexpr double kMaxStep = 2e-3;

/// Advances chaser and target by one fixed step. `dt` must lie in (0, kMaxStep].
SystemState step(const RobotModel& model, const SystemState& state, const DynamicsInput& input,
                 double dt, Integrator integrator = Integrator::RungeKutta4,
                 const StageForces& stage_forces = {});

/// Unchecked RK4 step; accepts negative dt (used for reversibility checks).
SystemState integrate_rk4(const RobotModel& model, const SystemState& state,
                          const DynamicsInput& input, double dt,
                          const StageForces& stage_forces = {});

}  // namespace detumble
