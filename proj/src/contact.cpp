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

#include "detumble/contact.hpp"

#include <algorithm>

namespace detumble {

void ContactParams::validate() const {
  if (!(stiffness > 0.0)) throw ValidationError("contact: stiffness must be positive");
  if (!(damping >= 0.0)) throw ValidationError("contact: damping must be non-negative");
  if (!(friction >= 0.0)) throw ValidationError("contact: friction must be non-negative");
}

std::vector<ContactEvent> detect_contacts(const RobotModel& model, const SystemState& state) {
  std::vector<ContactEvent> events;
  const Vec2 target_pos = state.target_pose.head<2>();
  const double target_angle = state.target_pose.z();
  const double radius = model.effector.tip_radius_m;
  // Broad phase: circumscribed circle of the square plus the sphere.
  const double reach = std::sqrt(0.5) * model.target.side_m + radius;

  for (Arm arm : kArms) {
    const EffectorPose fk = forward_kinematics(model, state, arm);
    for (int tip = 0; tip < 2; ++tip) {
      const Vec2& center = fk.tips[tip];
      if ((center - target_pos).squaredNorm() > reach * reach) continue;
      const ClosestFeature f =
          closest_on_square(target_pos, target_angle, model.target.side_m, center);
      if (f.distance > radius) continue;

      ContactEvent e;
      e.point = f.point;
      e.normal = f.normal;
      e.depth = radius - f.distance;
      e.arm = arm;
      e.tip = tip;
      const Vec2 v_sphere = effector_point_velocity(model, state, arm, f.point);
      const Vec2 v_target =
          state.target_vel.head<2>() + state.target_vel.z() * perp(f.point - target_pos);
      const Vec2 rel = v_sphere - v_target;
      e.depth_rate = -rel.dot(f.normal);
      e.tangential_velocity = rel.dot(perp(f.normal));
      events.push_back(e);
    }
  }
  return events;
}

ContactForce contact_force(const ContactEvent& event, const ContactParams& params) {
  ContactForce out;
  out.point = event.point;
  // No adhesion: a separating damper may not pull the bodies together.
  out.normal = std::max(0.0, params.stiffness * event.depth + params.damping * event.depth_rate);
  out.tangential = -sign_nonzero(event.tangential_velocity) * params.friction * out.normal;
  out.on_tip = out.normal * event.normal + out.tangential * perp(event.normal);
  out.on_target = -out.on_tip;
  return out;
}

ContactLoads compute_contact_loads(const RobotModel& model, const SystemState& state,
                                   const ContactParams& params) {
  ContactLoads loads;
  loads.events = detect_contacts(model, state);
  if (loads.events.empty()) return loads;

  std::array<Vec2, 2> effector_origin;
  for (Arm arm : kArms) effector_origin[index(arm)] = arm_chain(model, state.q, arm).effector;
  const Vec2 target_pos = state.target_pose.head<2>();

  for (const ContactEvent& e : loads.events) {
    const ContactForce f = contact_force(e, params);
    loads.forces.push_back(f);
    const int a = index(e.arm);
    loads.effector_wrenches[a].head<2>() += f.on_tip;
    loads.effector_wrenches[a].z() += cross(f.point - effector_origin[a], f.on_tip);
    loads.target_wrench.head<2>() += f.on_target;
    loads.target_wrench.z() += cross(f.point - target_pos, f.on_target);
    loads.peak_tip_force[a] = std::max(loads.peak_tip_force[a], f.on_tip.norm());
  }
  return loads;
}

void accumulate(const ContactLoads& loads, DynamicsInput& input) {
  for (Arm arm : kArms) input.effector_wrenches[index(arm)] += loads.effector_wrenches[index(arm)];
  input.target_wrench += loads.target_wrench;
}

}  // namespace detumble
