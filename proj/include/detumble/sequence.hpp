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

// Detumbling and capturing sequence: repeated single-arm impedance-controlled
// hits until the target spin drops below a threshold, then caging by both
// arms and a joint lock. A direct-caging baseline skips the detumbling.

#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "detumble/contact.hpp"
#include "detumble/control.hpp"
#include "detumble/dynamics.hpp"
#include "detumble/model.hpp"

namespace detumble {

enum class SequenceMode { DetumbleThenCage, DirectCage };

enum class PhaseKind { Approach, ImpedanceReduce, Retract, CagingApproach, Caged, Failed };

enum class FailureReason { None, Singularity, Ejection, BaseCollision, Timeout };

const char* to_string(SequenceMode mode);
const char* to_string(PhaseKind kind);
const char* to_string(FailureReason reason);

/// Cage layout: each U straddles one side face and reaches past the adjacent
/// corner; the two U's are point-symmetric about the target centre.
struct CagingParams {
  double standoff = 0.04;  // pre-closure clearance [m]
  double gap = 0.005;      // clearance between tip spheres and target at closure [m]
  double overlap = 0.015;  // how far the outer tip reaches inside the face span [m]
  double closing_duration = 1.0;  // [s]
};

struct SequenceConfig {
  SequenceMode mode = SequenceMode::DetumbleThenCage;
  double omega_threshold = 0.5;   // [rad/s]
  double force_threshold = 0.1;   // [N]
  double impedance_hold = 1.0;    // [s]
  double retract_distance = 0.1;  // [m]
  double approach_grace = 1.0;    // wait after a plan ends without contact [s]
  double initial_omega = 1.0;     // [rad/s]
  double timeout = 120.0;         // [s]
  double post_cage_coast = 3.0;   // [s]
  double dt = 1e-3;               // [s]
  Integrator integrator = Integrator::RungeKutta4;

  Vec2 target_position{0.0, 0.32};  // world, base COG starts at the origin
  /// Start and fallback poses in the base frame (x, y, theta) and elbow signs.
  std::array<Vec3, 2> home_poses{Vec3(-0.30, 0.27, -1.2), Vec3(0.30, 0.27, 1.2)};
  std::array<double, 2> home_elbows{-1.0, 1.0};
  /// Idle arms wait beside the target: tip-line midpoint this far from its
  /// centre, on the arm's own side, tilted toward the base by guard_angle.
  double guard_distance = 0.17;  // [m]
  double guard_angle = 0.3;      // [rad]
  double min_elbow_angle = 0.15;  // reachability margin from the stretched singularity [rad]
  double ejection_range = 1.5;    // [m]

  ApproachParams approach;
  DurationPolicy duration;
  TrackerGains tracker;  // feedforward only by default
  CagingParams caging;
  ServoGains servo;
  ContactParams contact;
  double singularity_threshold = 1e-4;
  int record_every = 1;  // trace decimation

  void validate() const;
};

/// Loads a JSON sequence/control config; absent keys keep their defaults.
SequenceConfig load_sequence_config(std::string_view text, SequenceConfig base = {});
SequenceConfig load_sequence_config_file(const std::string& path, SequenceConfig base = {});
std::string dump_sequence_config(const SequenceConfig& cfg);

struct SequencePhase {
  PhaseKind kind = PhaseKind::Approach;
  Arm active = Arm::Right;
  double since = 0.0;  // entry time
  std::array<std::optional<TrajectoryPlan>, 2> plans;
  std::array<TrackerState, 2> trackers;
  ImpedanceState impedance;
  Vec2 contact_normal = Vec2::UnitX();
  int caging_stage = 0;  // 0: to standoff, 1: closing
  double cage_time = 0.0;  // planned closure time
  bool cage_mirrored = false;
  FailureReason reason = FailureReason::None;
  int contacts = 0;  // impedance hits so far
  double waiting_until = 0.0;  // no plan could be found; retry after this time
};

/// Per-arm wrench on the effector (Fx, Fy, Mz about the link-3 origin) and the
/// mean contact normal, as a wrist sensor would report them.
struct MeasuredWrenches {
  std::array<Vec3, 2> wrench{Vec3::Zero(), Vec3::Zero()};
  std::array<Vec2, 2> normal{Vec2::Zero(), Vec2::Zero()};

  double force(Arm arm) const { return wrench[index(arm)].head<2>().norm(); }
};

MeasuredWrenches measure(const ContactLoads& loads);

struct SequenceOutput {
  Vec6 effector_velocity = Vec6::Zero();  // stacked (left, right)
  Vec6 joint_rates = Vec6::Zero();
  SequencePhase next;
};

using PlanPair = std::array<std::optional<TrajectoryPlan>, 2>;

/// Kinematic preview of a plan pair: resolved-rate motion of the free-floating
/// chaser with its momentum held and no contact. False when the motion leaves
/// the elbow margin or loses rank on the way, or when a tip touches the coasting
/// target before `clear_until`. Advances `state` to `t_end`.
bool preview_plans(const RobotModel& model, SystemState& state, const PlanPair& plans, double t_end,
                   const SequenceConfig& cfg,
                   double clear_until = -std::numeric_limits<double>::infinity());

/// Initial phase for an episode starting at `state`.
SequencePhase initial_phase(const RobotModel& model, const SystemState& state,
                            const SequenceConfig& cfg);

/// One control tick: phase transitions plus the commands for this tick.
SequenceOutput step_sequence(const SequencePhase& phase, const RobotModel& model,
                             const SystemState& state, const SequenceConfig& cfg,
                             const ImpedanceParams& impedance, const MeasuredWrenches& measured);

/// Initial system state: base at rest at the origin, arms at their home poses,
/// target spinning at `cfg.initial_omega` without translation.
SystemState initial_state(const RobotModel& model, const SequenceConfig& cfg);

/// Tip-sphere centres (left U then right U) of the closed cage for a target at
/// `target_pose` (reduced frame), and the matching effector poses.
struct CagePlacement {
  std::array<Vec3, 2> effector_poses;
  std::array<Vec2, 4> tips;
};
/// Target pose with its angle moved by quarter turns into the frame whose +y
/// axis runs from `base_position` to the target centre.
Vec3 cage_frame(const Vec2& base_position, const Vec3& target_pose);

/// `mirrored` swaps which pair of opposite corners is capped.
CagePlacement cage_placement(const RobotModel& model, const Vec3& target_pose,
                             const CagingParams& params, double standoff, bool mirrored = false);

/// True when no straight-line translation lets the target square leave the tips.
bool target_confined(const RobotModel& model, const Vec3& target_pose, std::span<const Vec2> tips,
                     int directions = 72);

bool base_collision(const RobotModel& model, const SystemState& state);
bool target_ejected(const SystemState& state, double range);

struct TraceSample {
  double time = 0.0;
  PhaseKind phase = PhaseKind::Approach;
  Arm active = Arm::Right;
  std::array<double, 2> force{0.0, 0.0};  // per-arm effector force magnitude [N]
  double target_omega = 0.0;
  double base_angle = 0.0;
  double base_omega = 0.0;
  std::array<double, 2> manipulability{0.0, 0.0};
  Vec3 target_pose = Vec3::Zero();
  Vec3 base_pose = Vec3::Zero();
};

struct ContactRecord {
  double time = 0.0;
  Arm arm = Arm::Left;
  PhaseKind phase = PhaseKind::Approach;
  bool planned = true;
  double target_omega = 0.0;
};

struct EpisodeSummary {
  bool caged = false;
  FailureReason failure = FailureReason::None;
  bool unplanned_contact = false;
  bool base_collision = false;
  bool ejection = false;
  double max_tip_force = 0.0;
  double final_omega = 0.0;
  int contact_count = 0;
  double time_to_cage = -1.0;
  std::array<double, 2> min_manipulability{0.0, 0.0};
  double end_time = 0.0;
  /// Largest change of the combined chaser + target momentum over the episode,
  /// relative to the target's initial momentum scale (linear: m_t times its
  /// fastest surface speed; angular: its spin plus orbital momentum).
  double momentum_drift_linear = 0.0;
  double momentum_drift_angular = 0.0;
};

struct EpisodeTrace {
  SequenceMode mode = SequenceMode::DetumbleThenCage;
  ImpedanceParams impedance;
  std::vector<TraceSample> samples;
  std::vector<ContactRecord> contacts;
  /// |omega_t| at the end of each impedance hold.
  std::vector<double> omega_after_contact;
  EpisodeSummary summary;
};

EpisodeTrace run_episode(const RobotModel& model, const SequenceConfig& cfg,
                         const ImpedanceParams& impedance);

/// As run_episode, from an explicit initial state and phase.
EpisodeTrace run_episode_from(const RobotModel& model, const SequenceConfig& cfg,
                              const ImpedanceParams& impedance, SystemState state,
                              SequencePhase phase);

}  // namespace detumble
