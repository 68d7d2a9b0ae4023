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

#include "detumble/control.hpp"

#include <algorithm>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace detumble {

void ImpedanceParams::validate() const {
  if (!(mass > 0.0)) throw ValidationError("impedance: virtual mass must be positive");
  if (!(damping >= 0.0)) throw ValidationError("impedance: damping must be non-negative");
  if (!(stiffness >= 0.0)) throw ValidationError("impedance: stiffness must be non-negative");
}

void TrackerGains::validate() const {
  if ((kp.array() < 0.0).any() || (ki.array() < 0.0).any() || (kd.array() < 0.0).any()) {
    throw ValidationError("tracker: gains must be non-negative");
  }
  if (!(integral_limit >= 0.0)) throw ValidationError("tracker: integral limit must be non-negative");
}

void ApproachParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("approach: alpha must lie in [0, 1]");
  if (!std::isfinite(beta) || !std::isfinite(gamma)) {
    throw ValidationError("approach: beta and gamma must be finite");
  }
}

TrajectoryPlan make_plan(const Vec3& start, const Vec3& goal, double duration, double start_time) {
  if (!(duration > 0.0)) throw ValidationError("trajectory: duration must be positive");
  TrajectoryPlan plan;
  plan.start = start;
  plan.goal = goal;
  plan.goal.z() = start.z() + wrap_angle(goal.z() - start.z());
  plan.duration = duration;
  plan.start_time = start_time;
  return plan;
}

TimeScaling cubic_time_scaling(double t, double duration) {
  if (t <= 0.0) return {0.0, 0.0};
  if (t >= duration) return {1.0, 0.0};
  const double tau = t / duration;
  return {tau * tau * (3.0 - 2.0 * tau), 6.0 * tau * (1.0 - tau) / duration};
}

TrajectorySample eval_trajectory(const TrajectoryPlan& plan, double elapsed) {
  const TimeScaling ts = cubic_time_scaling(elapsed, plan.duration);
  const Vec3 delta = plan.goal - plan.start;
  return {plan.start + ts.s * delta, ts.s_dot * delta, ts.s, ts.s_dot};
}

Vec3 track(const TrajectorySample& desired, const Vec3& measured, const TrackerGains& gains,
           TrackerState& state, double dt) {
  Vec3 error = desired.pose - measured;
  error.z() = wrap_angle(error.z());
  state.integral = (state.integral + dt * error)
                       .cwiseMax(-gains.integral_limit)
                       .cwiseMin(gains.integral_limit);
  const Vec3 rate = state.primed && dt > 0.0 ? Vec3((error - state.previous_error) / dt)
                                             : Vec3::Zero();
  state.previous_error = error;
  state.primed = true;
  return desired.velocity + gains.kp.cwiseProduct(error) + gains.ki.cwiseProduct(state.integral) +
         gains.kd.cwiseProduct(rate);
}

ImpedanceState start_impedance(const Vec3& equilibrium) {
  ImpedanceState s;
  s.equilibrium = equilibrium;
  return s;
}

Vec3 impedance_velocity(const ImpedanceParams& params, ImpedanceState& state, const Vec3& wrench,
                        double dt) {
  const double m = params.mass;
  const double d = params.damping;
  const double k = params.stiffness;
  const double h = 0.5 * dt;
  // (I - h A) z+ = (I + h A) z + dt b F, with A = [0 1; -k/m -d/m], b = [0; 1/m].
  const double a11 = 1.0, a12 = -h, a21 = h * k / m, a22 = 1.0 + h * d / m;
  const double det = a11 * a22 - a12 * a21;
  for (int i = 0; i < 3; ++i) {
    const double x = state.displacement(i);
    const double v = state.velocity(i);
    const double r1 = x + h * v;
    const double r2 = v - h * (k * x + d * v) / m + dt * wrench(i) / m;
    state.displacement(i) = (a22 * r1 - a12 * r2) / det;
    state.velocity(i) = (a11 * r2 - a21 * r1) / det;
  }
  return state.velocity;
}

Vec2 select_contact_point(double u_t, double omega_t, double alpha, double side) {
  return {0.5 * side * sign_nonzero(u_t), -0.5 * side * alpha * sign_nonzero(u_t * omega_t)};
}

Vec2 goal_position(const Vec3& target_pose, const Vec3& target_vel, double duration,
                   const Vec2& r_tc, const Vec2& r_ch) {
  const double angle = target_pose.z() + target_vel.z() * duration;
  return target_pose.head<2>() + target_vel.head<2>() * duration + rotation(angle) * r_tc + r_ch;
}

ContactGoal plan_contact_goal(const RobotModel& model, const Vec3& target_pose,
                              const Vec3& target_vel, double duration,
                              const ApproachParams& params) {
  ContactGoal goal;
  const double predicted = target_pose.z() + target_vel.z() * duration;
  goal.target_angle = reduce_quarter_turn(predicted);
  goal.r_tc = select_contact_point(target_vel.x(), target_vel.z(), params.alpha, model.target.side_m);

  // Hitting position in the reduced frame; the start angle moves by whole quarter turns.
  const Vec3 shifted_pose(target_pose.x(), target_pose.y(),
                          target_pose.z() + (goal.target_angle - predicted));
  goal.contact_point = goal_position(shifted_pose, target_vel, duration, goal.r_tc, Vec2::Zero());

  const Mat2 r_target = rotation(goal.target_angle);
  const Vec2 n = r_target * Vec2(sign_nonzero(goal.r_tc.x()), 0.0);
  goal.face_normal = n;

  // Coordinate of the contact point along perp(n); the idle tip sits beyond the
  // nearer corner so only one tip strikes the face.
  const double along_face = goal.r_tc.y() * sign_nonzero(goal.r_tc.x());
  const double side = sign_nonzero(along_face);
  goal.tip = side > 0.0 ? 0 : 1;

  const double facing = std::atan2(n.x(), -n.y());  // U axis pointing into the face
  const double tilt = -side * params.beta;
  const double heading = facing + tilt;
  const Vec2 approach = rotation(-side * params.gamma) * n;
  const Vec2 tip_center = goal.contact_point + model.effector.tip_radius_m * approach;
  const Vec2 origin = tip_center - rotation(heading) * model.tip_offsets()[goal.tip];

  goal.r_ch = origin - goal.contact_point;
  goal.effector_goal = Vec3(origin.x(), origin.y(), wrap_angle(heading));
  return goal;
}

double trajectory_duration(double distance, const DurationPolicy& policy) {
  return std::max(distance / policy.max_speed, policy.min_duration);
}

Vec6 resolve_joint_rates(const RobotModel& model, const SystemState& state, const Vec6& desired,
                         double sigma_threshold) {
  const Mat6 j = generalized_jacobian(model, state);
  const Eigen::JacobiSVD<Mat6> svd(j, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sigma_min = svd.singularValues()(5);
  if (!(sigma_min >= sigma_threshold)) {
    throw SingularityError("control: generalized Jacobian near singular (sigma_min = " +
                           std::to_string(sigma_min) + ")");
  }
  return svd.solve(desired - momentum_velocity(model, state));
}

std::array<Vec3, 2> servo_torques(const RobotModel& model, const SystemState& state,
                                  const Vec6& rate_command, const ServoGains& gains,
                                  ServoState& servo, double dt) {
  constexpr double kMaxLag = 0.1;  // rad
  const Vec6 angles = state.q.tail<6>();
  const Vec6 rates = state.qd.tail<6>();
  if (!servo.primed) {
    servo.reference = angles;
    servo.primed = true;
  }
  const Vec6 command = rate_command.cwiseMax(-gains.max_rate).cwiseMin(gains.max_rate);
  const GeneralizedInertia h = assemble_inertia(model, state);
  const double kp = gains.bandwidth * gains.bandwidth;
  const double kv = 2.0 * gains.damping_ratio * gains.bandwidth;

  std::array<Vec3, 2> torques;
  for (int i = 0; i < 6; ++i) {
    double lag = wrap_angle(servo.reference(i) - angles(i));
    lag = std::clamp(lag, -kMaxLag, kMaxLag);
    servo.reference(i) = angles(i) + lag;
    const double scale = h.matrix(kBaseDofs + i, kBaseDofs + i);
    torques[i / 3](i % 3) = scale * (kp * lag + kv * (command(i) - rates(i)));
    servo.reference(i) += dt * command(i);
  }
  return torques;
}

}  // namespace detumble
