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

// Effector-level control: contact-point selection, goal planning, cubic time
// scaling, feedforward + PID trajectory tracking, the admittance (virtual
// internal model) filter, and joint-rate resolution through the generalized
// Jacobian.

#pragma once

#include <stdexcept>

#include "detumble/dynamics.hpp"
#include "detumble/model.hpp"

namespace detumble {

struct ImpedanceParams {
  double mass = 0.1;        // m_im [kg]
  double damping = 1.5;     // d_im [N s/m]
  double stiffness = 10.0;  // k_im [N/m]

  void validate() const;
};

/// Straight-line effector path from `start` to `goal` (x, y, theta) over `duration`.
struct TrajectoryPlan {
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  double duration = 1.0;
  double start_time = 0.0;

  double end_time() const { return start_time + duration; }
};

/// Builds a plan whose goal angle is unwrapped to the nearest turn of the start angle.
TrajectoryPlan make_plan(const Vec3& start, const Vec3& goal, double duration, double start_time);

struct TimeScaling {
  double s = 0.0;
  double s_dot = 0.0;
};

/// s(t) = 3 t^2 / T^2 - 2 t^3 / T^3, clamped to the endpoints outside [0, T].
TimeScaling cubic_time_scaling(double t, double duration);

struct TrajectorySample {
  Vec3 pose = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double s = 0.0;
  double s_dot = 0.0;
};

/// Desired pose and velocity `elapsed` seconds into the plan.
TrajectorySample eval_trajectory(const TrajectoryPlan& plan, double elapsed);

struct TrackerGains {
  Vec3 kp = Vec3::Zero();
  Vec3 ki = Vec3::Zero();
  Vec3 kd = Vec3::Zero();
  double integral_limit = 0.05;  // anti-windup bound on each integral component

  void validate() const;
};

struct TrackerState {
  Vec3 integral = Vec3::Zero();
  Vec3 previous_error = Vec3::Zero();
  bool primed = false;
};

/// Feedforward plus PID on the pose error; returns the commanded effector velocity.
Vec3 track(const TrajectorySample& desired, const Vec3& measured, const TrackerGains& gains,
           TrackerState& state, double dt);

struct ImpedanceState {
  Vec3 equilibrium = Vec3::Zero();   // effector pose at first contact
  Vec3 displacement = Vec3::Zero();  // internal-model displacement from equilibrium
  Vec3 velocity = Vec3::Zero();      // internal-model velocity (the command)
};

ImpedanceState start_impedance(const Vec3& equilibrium);

/// Advances M dd(x) + D d(x) + K x = F by one step (implicit trapezoidal rule,
/// per axis) and returns the new internal-model velocity as the command.
Vec3 impedance_velocity(const ImpedanceParams& params, ImpedanceState& state, const Vec3& wrench,
                        double dt);

/// Contact point in the target frame for the target's x-velocity `u_t` and spin.
Vec2 select_contact_point(double u_t, double omega_t, double alpha, double side);

/// Predicted hitting position p_t + v_t T + R(theta_t + omega_t T) r_tc + r_ch.
Vec2 goal_position(const Vec3& target_pose, const Vec3& target_vel, double duration,
                   const Vec2& r_tc, const Vec2& r_ch);

struct ApproachParams {
  double alpha = 0.8;    // contact position along the edge, 0 = centre, 1 = apex
  double beta = 0.175;   // effector tilt away from the face [rad]
  double gamma = 0.175;  // approach-direction offset of the tip from the face normal [rad]

  void validate() const;
};

struct ContactGoal {
  Vec3 effector_goal = Vec3::Zero();  // link-3 frame pose (x, y, theta)
  Vec2 contact_point = Vec2::Zero();  // predicted, world
  Vec2 face_normal = Vec2::UnitX();   // predicted outward normal, world
  Vec2 r_tc = Vec2::Zero();           // contact point in the (reduced) target frame
  Vec2 r_ch = Vec2::Zero();           // effector origin relative to the contact point
  double target_angle = 0.0;          // predicted angle, reduced modulo a quarter turn
  int tip = 0;                        // tip expected to touch
};

/// Effector goal for a detumbling hit `duration` seconds ahead. The target frame
/// at arrival is the quarter-turn-equivalent frame closest to the world axes, so
/// the +x face always faces world +x.
ContactGoal plan_contact_goal(const RobotModel& model, const Vec3& target_pose,
                              const Vec3& target_vel, double duration,
                              const ApproachParams& params);

struct DurationPolicy {
  double max_speed = 0.1;     // [m/s]
  double min_duration = 1.0;  // [s]
};

double trajectory_duration(double distance, const DurationPolicy& policy);

class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Joint rates (left then right) realizing the stacked effector velocities
/// `desired` at the current system momentum. Throws SingularityError when the
/// smallest singular value of J* drops below `sigma_threshold`.
Vec6 resolve_joint_rates(const RobotModel& model, const SystemState& state, const Vec6& desired,
                         double sigma_threshold = 1e-4);

/// Stiff inner joint loop tracking commanded joint rates.
struct ServoGains {
  double bandwidth = 60.0;  // [rad/s]
  double damping_ratio = 1.0;
  double max_rate = 3.0;    // joint-rate command saturation [rad/s]
};

struct ServoState {
  Vec6 reference = Vec6::Zero();  // integrated joint-angle reference
  bool primed = false;
};

/// Joint torques (left, right) for commanded rates, scaled by the arm inertia diagonal.
std::array<Vec3, 2> servo_torques(const RobotModel& model, const SystemState& state,
                                  const Vec6& rate_command, const ServoGains& gains,
                                  ServoState& servo, double dt);

}  // namespace detumble
