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

#include "detumble/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace detumble {

namespace {

constexpr int kBodies = 7;  // base + 3 links per arm

// COM kinematics of every chaser body for one configuration.
struct BodyKinematics {
  std::array<Vec2, kBodies> com;
  std::array<Eigen::Matrix<double, 2, 9>, kBodies> jv;
  std::array<Eigen::Matrix<double, 1, 9>, kBodies> jw;
  std::array<double, kBodies> mass;
  std::array<double, kBodies> inertia;
  std::array<ArmChain, 2> chains;
};

int body_index(Arm arm, int link) { return 1 + 3 * index(arm) + link; }

BodyKinematics body_kinematics(const RobotModel& model, const Vec9& q) {
  BodyKinematics k;
  const Vec2 base_pos = q.head<2>();
  k.com[0] = base_pos;
  k.jv[0].setZero();
  k.jv[0].block<2, 2>(0, 0).setIdentity();
  k.jw[0].setZero();
  k.jw[0](2) = 1.0;
  k.mass[0] = model.base.mass_kg;
  k.inertia[0] = model.base.inertia_kgm2;

  for (Arm arm : kArms) {
    const ArmChain chain = arm_chain(model, q, arm);
    k.chains[index(arm)] = chain;
    const int off = arm_offset(arm);
    for (int i = 0; i < 3; ++i) {
      const int b = body_index(arm, i);
      const Vec2 p = chain.link_coms[i];
      k.com[b] = p;
      auto& jv = k.jv[b];
      jv.setZero();
      jv.block<2, 2>(0, 0).setIdentity();
      jv.col(2) = perp(p - base_pos);
      auto& jw = k.jw[b];
      jw.setZero();
      jw(2) = 1.0;
      for (int j = 0; j <= i; ++j) {
        jv.col(off + j) = perp(p - chain.joints[j]);
        jw(off + j) = 1.0;
      }
      k.mass[b] = model.links[i].mass_kg;
      k.inertia[b] = model.links[i].inertia_kgm2;
    }
  }
  return k;
}

Mat9 inertia_from(const BodyKinematics& k) {
  Mat9 h = Mat9::Zero();
  for (int b = 0; b < kBodies; ++b) {
    h.noalias() += k.mass[b] * k.jv[b].transpose() * k.jv[b];
    h.noalias() += k.inertia[b] * k.jw[b].transpose() * k.jw[b];
  }
  // Exact symmetry regardless of summation order.
  return 0.5 * (h + h.transpose());
}

Vec9 velocity_terms_from(const RobotModel& model, const BodyKinematics& k, const Vec9& q,
                         const Vec9& qd) {
  // For planar chains J_w is constant, so c = sum_i m_i J_vi^T (Jdot_vi qd), where
  // Jdot_vi qd is the centripetal acceleration of each COM.
  Vec9 c = Vec9::Zero();
  const double base_rate = qd(2);
  for (Arm arm : kArms) {
    const ArmChain& chain = k.chains[index(arm)];
    const int off = arm_offset(arm);
    const Vec2 mount_world = rotation(q(2)) * model.mounts[index(arm)];
    Vec2 accum = -base_rate * base_rate * mount_world;
    double rate = base_rate;
    for (int i = 0; i < 3; ++i) {
      rate += qd(off + i);
      const Vec2 axis = link_axis(chain.angles[i]);
      const Vec2 a_com = accum - rate * rate * model.links[i].cog_offset_m * axis;
      const int b = body_index(arm, i);
      c.noalias() += k.mass[b] * k.jv[b].transpose() * a_com;
      accum -= rate * rate * model.links[i].length_m * axis;
    }
  }
  return c;
}

Eigen::Matrix<double, 3, 9> effector_jacobian_full(const RobotModel& model, const SystemState& state,
                                                   Arm arm) {
  Eigen::Matrix<double, 3, 9> j = Eigen::Matrix<double, 3, 9>::Zero();
  j.block<3, 3>(0, 0) = base_jacobian(model, state, arm);
  j.block<3, 3>(0, arm_offset(arm)) = arm_jacobian(model, state, arm);
  return j;
}

}  // namespace

bool DynamicsInput::finite() const {
  return joint_torques[0].allFinite() && joint_torques[1].allFinite() && base_wrench.allFinite() &&
         effector_wrenches[0].allFinite() && effector_wrenches[1].allFinite() &&
         target_wrench.allFinite();
}

GeneralizedInertia assemble_inertia(const RobotModel& model, const SystemState& state) {
  return {inertia_from(body_kinematics(model, state.q))};
}

Vec9 nonlinear_terms(const RobotModel& model, const SystemState& state) {
  const BodyKinematics k = body_kinematics(model, state.q);
  return velocity_terms_from(model, k, state.q, state.qd);
}

Vec9 effector_generalized_force(const RobotModel& model, const SystemState& state, Arm arm,
                                const Vec3& wrench) {
  return effector_jacobian_full(model, state, arm).transpose() * wrench;
}

namespace {

Vec9 generalized_forces(const RobotModel& model, const SystemState& state,
                        const DynamicsInput& input) {
  Vec9 q_applied = Vec9::Zero();
  q_applied.head<3>() = input.base_wrench;
  for (Arm arm : kArms) {
    q_applied.segment<3>(arm_offset(arm)) += input.joint_torques[index(arm)];
    if (!input.effector_wrenches[index(arm)].isZero(0.0)) {
      q_applied += effector_generalized_force(model, state, arm, input.effector_wrenches[index(arm)]);
    }
  }
  return q_applied;
}

}  // namespace

Vec9 chaser_acceleration(const RobotModel& model, const SystemState& state,
                         const DynamicsInput& input) {
  const BodyKinematics k = body_kinematics(model, state.q);
  const Mat9 h = inertia_from(k);
  const Vec9 c = velocity_terms_from(model, k, state.q, state.qd);
  const Eigen::LLT<Mat9> llt(h);
  if (llt.info() != Eigen::Success) {
    throw DynamicsError("dynamics: inertia matrix lost positive definiteness");
  }
  return llt.solve(generalized_forces(model, state, input) - c);
}

Momentum system_momentum(const RobotModel& model, const SystemState& state) {
  const BodyKinematics k = body_kinematics(model, state.q);
  Momentum p;
  for (int b = 0; b < kBodies; ++b) {
    const Vec2 v = k.jv[b] * state.qd;
    const double w = (k.jw[b] * state.qd)(0);
    p.linear += k.mass[b] * v;
    p.angular += k.mass[b] * cross(k.com[b], v) + k.inertia[b] * w;
  }
  return p;
}

Momentum target_momentum(const RobotModel& model, const SystemState& state) {
  const double m = model.target.mass_kg;
  const Vec2 v = state.target_vel.head<2>();
  return {m * v, m * cross(state.target_pose.head<2>(), v) +
                     model.target.inertia_kgm2 * state.target_vel.z()};
}

Vec3 base_momentum_rows(const RobotModel& model, const SystemState& state) {
  return assemble_inertia(model, state).matrix.topRows<3>() * state.qd;
}

double chaser_kinetic_energy(const RobotModel& model, const SystemState& state) {
  return 0.5 * state.qd.dot(assemble_inertia(model, state).matrix * state.qd);
}

double target_kinetic_energy(const RobotModel& model, const SystemState& state) {
  return 0.5 * model.target.mass_kg * state.target_vel.head<2>().squaredNorm() +
         0.5 * model.target.inertia_kgm2 * state.target_vel.z() * state.target_vel.z();
}

Mat6 generalized_jacobian(const RobotModel& model, const SystemState& state) {
  const GeneralizedInertia h = assemble_inertia(model, state);
  const Mat3 hb_inv = h.base().inverse();
  const Eigen::Matrix<double, 3, 6> hbm = h.coupling();
  Mat6 j = Mat6::Zero();
  for (Arm arm : kArms) {
    const int r = 3 * index(arm);
    const Mat3 jb = base_jacobian(model, state, arm);
    j.block<3, 6>(r, 0) = -jb * hb_inv * hbm;
    j.block<3, 3>(r, r) += arm_jacobian(model, state, arm);
  }
  return j;
}

Vec6 momentum_velocity(const RobotModel& model, const SystemState& state) {
  const GeneralizedInertia h = assemble_inertia(model, state);
  const Vec3 p = h.matrix.topRows<3>() * state.qd;
  const Vec3 base_part = h.base().ldlt().solve(p);
  Vec6 out;
  for (Arm arm : kArms) {
    out.segment<3>(3 * index(arm)) = base_jacobian(model, state, arm) * base_part;
  }
  return out;
}

namespace {

using Packed = Eigen::Matrix<double, 24, 1>;

Packed pack(const SystemState& s) {
  Packed y;
  y << s.q, s.qd, s.target_pose, s.target_vel;
  return y;
}

SystemState unpack(const Packed& y, double time) {
  SystemState s;
  s.q = y.segment<9>(0);
  s.qd = y.segment<9>(9);
  s.target_pose = y.segment<3>(18);
  s.target_vel = y.segment<3>(21);
  s.time = time;
  return s;
}

Packed derivative(const RobotModel& model, const SystemState& s, const DynamicsInput& input,
                  const StageForces& stage_forces) {
  DynamicsInput loads = input;
  if (stage_forces) stage_forces(s, loads);
  if (!loads.finite()) throw DynamicsError("dynamics: non-finite force input");
  Packed dy;
  dy.segment<9>(0) = s.qd;
  dy.segment<9>(9) = chaser_acceleration(model, s, loads);
  dy.segment<3>(18) = s.target_vel;
  dy.segment<2>(21) = loads.target_wrench.head<2>() / model.target.mass_kg;
  dy(23) = loads.target_wrench.z() / model.target.inertia_kgm2;
  return dy;
}

}  // namespace

SystemState integrate_rk4(const RobotModel& model, const SystemState& state,
                          const DynamicsInput& input, double dt,
                          const StageForces& stage_forces) {
  const Packed y0 = pack(state);
  const double t0 = state.time;
  const Packed k1 = derivative(model, state, input, stage_forces);
  const Packed k2 = derivative(model, unpack(y0 + 0.5 * dt * k1, t0 + 0.5 * dt), input, stage_forces);
  const Packed k3 = derivative(model, unpack(y0 + 0.5 * dt * k2, t0 + 0.5 * dt), input, stage_forces);
  const Packed k4 = derivative(model, unpack(y0 + dt * k3, t0 + dt), input, stage_forces);
  SystemState next = unpack(y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t0 + dt);
  next.normalize_angles();
  return next;
}

SystemState step(const RobotModel& model, const SystemState& state, const DynamicsInput& input,
                 double dt, Integrator integrator, const StageForces& stage_forces) {
  if (!(dt > 0.0 && dt <= kMaxStep)) {
    throw DynamicsError("dynamics: step size must lie in (0, 2e-3] s");
  }
  if (!input.finite()) throw DynamicsError("dynamics: non-finite force input");
  if (!state.finite()) throw DynamicsError("dynamics: non-finite state");

  if (integrator == Integrator::RungeKutta4) {
    return integrate_rk4(model, state, input, dt, stage_forces);
  }
  const Packed dy = derivative(model, state, input, stage_forces);
  SystemState next = state;
  next.qd += dt * dy.segment<9>(9);
  next.q += dt * next.qd;
  next.target_vel += dt * dy.segment<3>(21);
  next.target_pose += dt * next.target_vel;
  next.time += dt;
  next.normalize_angles();
  return next;
}

}  // namespace detumble
