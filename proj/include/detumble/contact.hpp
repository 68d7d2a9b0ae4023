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

// Tip-sphere versus square-target contact detection and the penalty
// (spring-damper) contact law.

#pragma once

#include <vector>

#include "detumble/dynamics.hpp"
#include "detumble/model.hpp"

namespace detumble {

struct ContactParams {
  double stiffness = 800.0;  // k_p [N/m]
  double damping = 2.0;      // c_p [N s/m]
  double friction = 0.1;     // mu [-]

  void validate() const;
};

struct ContactEvent {
  Vec2 point = Vec2::Zero();   // on the target boundary
  Vec2 normal = Vec2::UnitX(); // unit, from the target surface toward the sphere
  double depth = 0.0;          // penetration delta >= 0
  double depth_rate = 0.0;     // d(delta)/dt
  double tangential_velocity = 0.0;  // sphere relative to target along perp(normal)
  Arm arm = Arm::Left;
  int tip = 0;
};

struct ContactForce {
  Vec2 on_tip = Vec2::Zero();
  Vec2 on_target = Vec2::Zero();
  Vec2 point = Vec2::Zero();
  double normal = 0.0;
  double tangential = 0.0;
};

std::vector<ContactEvent> detect_contacts(const RobotModel& model, const SystemState& state);

ContactForce contact_force(const ContactEvent& event, const ContactParams& params);

/// Contact loads of one evaluation, already converted to effector/target wrenches.
struct ContactLoads {
  std::vector<ContactEvent> events;
  std::vector<ContactForce> forces;
  std::array<Vec3, 2> effector_wrenches{Vec3::Zero(), Vec3::Zero()};
  Vec3 target_wrench = Vec3::Zero();
  /// Largest single-tip force magnitude per arm.
  std::array<double, 2> peak_tip_force{0.0, 0.0};
};

ContactLoads compute_contact_loads(const RobotModel& model, const SystemState& state,
                                   const ContactParams& params);

/// Adds the contact wrenches of `loads` into `input`.
void accumulate(const ContactLoads& loads, DynamicsInput& input);

}  // namespace detumble
