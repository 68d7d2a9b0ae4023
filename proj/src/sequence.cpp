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

#include "detumble/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>

#include "json.hpp"

namespace detumble {

using nlohmann::json;

const char* to_string(SequenceMode mode) {
  return mode == SequenceMode::DirectCage ? "direct" : "detumble";
}

const char* to_string(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::Approach: return "Approach";
    case PhaseKind::ImpedanceReduce: return "ImpedanceReduce";
    case PhaseKind::Retract: return "Retract";
    case PhaseKind::CagingApproach: return "CagingApproach";
    case PhaseKind::Caged: return "Caged";
    case PhaseKind::Failed: return "Failed";
  }
  return "?";
}

const char* to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::None: return "none";
    case FailureReason::Singularity: return "singularity";
    case FailureReason::Ejection: return "ejection";
    case FailureReason::BaseCollision: return "base_collision";
    case FailureReason::Timeout: return "timeout";
  }
  return "?";
}

void SequenceConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("sequence: ") + what + " must be positive");
    }
  };
  positive(omega_threshold, "omega_threshold");
  positive(force_threshold, "force_threshold");
  positive(impedance_hold, "impedance_hold");
  positive(retract_distance, "retract_distance");
  positive(timeout, "timeout");
  positive(ejection_range, "ejection_range");
  positive(caging.closing_duration, "caging.closing_duration");
  positive(duration.max_speed, "duration.max_speed");
  positive(duration.min_duration, "duration.min_duration");
  positive(servo.bandwidth, "servo.bandwidth");
  positive(servo.damping_ratio, "servo.damping_ratio");
  positive(servo.max_rate, "servo.max_rate");
  positive(singularity_threshold, "singularity_threshold");
  positive(guard_distance, "guard_distance");
  if (!std::isfinite(guard_angle)) throw ValidationError("sequence: guard_angle must be finite");
  if (!(dt > 0.0 && dt <= kMaxStep)) throw ValidationError("sequence: dt must lie in (0, 2e-3]");
  if (!(approach_grace >= 0.0) || !(post_cage_coast >= 0.0)) {
    throw ValidationError("sequence: grace and coast times must be non-negative");
  }
  if (!std::isfinite(initial_omega)) throw ValidationError("sequence: initial_omega must be finite");
  if (!(caging.gap >= 0.0) || !(caging.standoff >= 0.0) || !(caging.overlap >= 0.0)) {
    throw ValidationError("sequence: caging distances must be non-negative");
  }
  if (!(min_elbow_angle >= 0.0)) throw ValidationError("sequence: min_elbow_angle must be >= 0");
  if (record_every < 1) throw ValidationError("sequence: record_every must be >= 1");
  approach.validate();
  tracker.validate();
  contact.validate();
}

namespace {

using Keys = std::set<std::string>;

void check_keys(const json& node, const Keys& allowed, const std::string& where) {
  if (!node.is_object()) throw ValidationError("sequence config: " + where + " must be an object");
  for (const auto& item : node.items()) {
    if (!allowed.count(item.key())) {
      throw ValidationError("sequence config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

void read(const json& node, const char* key, double& out) {
  if (!node.contains(key)) return;
  const json& v = node.at(key);
  if (!v.is_number()) throw ValidationError(std::string("sequence config: '") + key + "' must be a number");
  out = v.get<double>();
}

template <int N>
void read(const json& node, const char* key, Eigen::Matrix<double, N, 1>& out) {
  if (!node.contains(key)) return;
  const json& v = node.at(key);
  if (!v.is_array() || v.size() != N) {
    throw ValidationError(std::string("sequence config: '") + key + "' must be an array of " +
                          std::to_string(N) + " numbers");
  }
  for (int i = 0; i < N; ++i) {
    if (!v[i].is_number()) throw ValidationError(std::string("sequence config: '") + key + "' must be numeric");
    out(i) = v[i].get<double>();
  }
}

}  // namespace

SequenceConfig load_sequence_config(std::string_view text, SequenceConfig cfg) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("sequence config: parse error: ") + e.what());
  }
  check_keys(doc,
             {"schema_version", "mode", "omega_threshold_rad_s", "force_threshold_N",
              "impedance_hold_s", "retract_distance_m", "approach_grace_s", "initial_omega_rad_s",
              "timeout_s", "post_cage_coast_s", "dt_s", "integrator", "target_position_m",
              "home_poses", "home_elbows", "guard_distance_m", "guard_angle_rad", "min_elbow_angle_rad", "ejection_range_m", "approach",
              "duration", "tracker", "caging", "servo", "contact", "singularity_threshold",
              "record_every"},
             "top level");
  if (doc.contains("schema_version") && doc["schema_version"] != 1) {
    throw ValidationError("sequence config: unsupported schema_version");
  }
  if (doc.contains("mode")) {
    const std::string mode = doc["mode"].is_string() ? doc["mode"].get<std::string>() : "";
    if (mode == "detumble") cfg.mode = SequenceMode::DetumbleThenCage;
    else if (mode == "direct") cfg.mode = SequenceMode::DirectCage;
    else throw ValidationError("sequence config: mode must be \"detumble\" or \"direct\"");
  }
  if (doc.contains("integrator")) {
    const std::string name = doc["integrator"].is_string() ? doc["integrator"].get<std::string>() : "";
    if (name == "rk4") cfg.integrator = Integrator::RungeKutta4;
    else if (name == "euler") cfg.integrator = Integrator::SemiImplicitEuler;
    else throw ValidationError("sequence config: integrator must be \"rk4\" or \"euler\"");
  }
  read(doc, "omega_threshold_rad_s", cfg.omega_threshold);
  read(doc, "force_threshold_N", cfg.force_threshold);
  read(doc, "impedance_hold_s", cfg.impedance_hold);
  read(doc, "retract_distance_m", cfg.retract_distance);
  read(doc, "approach_grace_s", cfg.approach_grace);
  read(doc, "initial_omega_rad_s", cfg.initial_omega);
  read(doc, "timeout_s", cfg.timeout);
  read(doc, "post_cage_coast_s", cfg.post_cage_coast);
  read(doc, "dt_s", cfg.dt);
  read<2>(doc, "target_position_m", cfg.target_position);
  read(doc, "guard_distance_m", cfg.guard_distance);
  read(doc, "guard_angle_rad", cfg.guard_angle);
  if (doc.contains("home_poses")) {
    const json& h = doc["home_poses"];
    check_keys(h, {"left", "right"}, "home_poses");
    read<3>(h, "left", cfg.home_poses[0]);
    read<3>(h, "right", cfg.home_poses[1]);
  }
  if (doc.contains("home_elbows")) {
    const json& h = doc["home_elbows"];
    check_keys(h, {"left", "right"}, "home_elbows");
    read(h, "left", cfg.home_elbows[0]);
    read(h, "right", cfg.home_elbows[1]);
  }
  read(doc, "min_elbow_angle_rad", cfg.min_elbow_angle);
  read(doc, "ejection_range_m", cfg.ejection_range);
  read(doc, "singularity_threshold", cfg.singularity_threshold);
  if (doc.contains("record_every")) {
    if (!doc["record_every"].is_number_integer()) {
      throw ValidationError("sequence config: record_every must be an integer");
    }
    cfg.record_every = doc["record_every"].get<int>();
  }
  if (doc.contains("approach")) {
    const json& a = doc["approach"];
    check_keys(a, {"alpha", "beta_rad", "gamma_rad"}, "approach");
    read(a, "alpha", cfg.approach.alpha);
    read(a, "beta_rad", cfg.approach.beta);
    read(a, "gamma_rad", cfg.approach.gamma);
  }
  if (doc.contains("duration")) {
    const json& d = doc["duration"];
    check_keys(d, {"max_speed_m_s", "min_duration_s"}, "duration");
    read(d, "max_speed_m_s", cfg.duration.max_speed);
    read(d, "min_duration_s", cfg.duration.min_duration);
  }
  if (doc.contains("tracker")) {
    const json& t = doc["tracker"];
    check_keys(t, {"kp", "ki", "kd", "integral_limit"}, "tracker");
    read<3>(t, "kp", cfg.tracker.kp);
    read<3>(t, "ki", cfg.tracker.ki);
    read<3>(t, "kd", cfg.tracker.kd);
    read(t, "integral_limit", cfg.tracker.integral_limit);
  }
  if (doc.contains("caging")) {
    const json& c = doc["caging"];
    check_keys(c, {"standoff_m", "gap_m", "overlap_m", "closing_duration_s"}, "caging");
    read(c, "standoff_m", cfg.caging.standoff);
    read(c, "gap_m", cfg.caging.gap);
    read(c, "overlap_m", cfg.caging.overlap);
    read(c, "closing_duration_s", cfg.caging.closing_duration);
  }
  if (doc.contains("servo")) {
    const json& s = doc["servo"];
    check_keys(s, {"bandwidth_rad_s", "damping_ratio", "max_rate_rad_s"}, "servo");
    read(s, "bandwidth_rad_s", cfg.servo.bandwidth);
    read(s, "damping_ratio", cfg.servo.damping_ratio);
    read(s, "max_rate_rad_s", cfg.servo.max_rate);
  }
  if (doc.contains("contact")) {
    const json& c = doc["contact"];
    check_keys(c, {"stiffness_N_m", "damping_Ns_m", "friction"}, "contact");
    read(c, "stiffness_N_m", cfg.contact.stiffness);
    read(c, "damping_Ns_m", cfg.contact.damping);
    read(c, "friction", cfg.contact.friction);
  }
  cfg.validate();
  return cfg;
}

SequenceConfig load_sequence_config_file(const std::string& path, SequenceConfig base) {
  std::ifstream in(path);
  if (!in) throw ValidationError("sequence config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_sequence_config(buffer.str(), std::move(base));
}

std::string dump_sequence_config(const SequenceConfig& cfg) {
  auto arr = [](const auto& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  json doc = {
      {"schema_version", 1},
      {"mode", to_string(cfg.mode)},
      {"omega_threshold_rad_s", cfg.omega_threshold},
      {"force_threshold_N", cfg.force_threshold},
      {"impedance_hold_s", cfg.impedance_hold},
      {"retract_distance_m", cfg.retract_distance},
      {"approach_grace_s", cfg.approach_grace},
      {"initial_omega_rad_s", cfg.initial_omega},
      {"timeout_s", cfg.timeout},
      {"post_cage_coast_s", cfg.post_cage_coast},
      {"dt_s", cfg.dt},
      {"integrator", cfg.integrator == Integrator::RungeKutta4 ? "rk4" : "euler"},
      {"target_position_m", arr(cfg.target_position)},
      {"home_poses", {{"left", arr(cfg.home_poses[0])}, {"right", arr(cfg.home_poses[1])}}},
      {"home_elbows", {{"left", cfg.home_elbows[0]}, {"right", cfg.home_elbows[1]}}},
      {"guard_distance_m", cfg.guard_distance},
      {"guard_angle_rad", cfg.guard_angle},
      {"min_elbow_angle_rad", cfg.min_elbow_angle},
      {"ejection_range_m", cfg.ejection_range},
      {"approach",
       {{"alpha", cfg.approach.alpha}, {"beta_rad", cfg.approach.beta}, {"gamma_rad", cfg.approach.gamma}}},
      {"duration",
       {{"max_speed_m_s", cfg.duration.max_speed}, {"min_duration_s", cfg.duration.min_duration}}},
      {"tracker",
       {{"kp", arr(cfg.tracker.kp)},
        {"ki", arr(cfg.tracker.ki)},
        {"kd", arr(cfg.tracker.kd)},
        {"integral_limit", cfg.tracker.integral_limit}}},
      {"caging",
       {{"standoff_m", cfg.caging.standoff},
        {"gap_m", cfg.caging.gap},
        {"overlap_m", cfg.caging.overlap},
        {"closing_duration_s", cfg.caging.closing_duration}}},
      {"servo",
       {{"bandwidth_rad_s", cfg.servo.bandwidth},
        {"damping_ratio", cfg.servo.damping_ratio},
        {"max_rate_rad_s", cfg.servo.max_rate}}},
      {"contact",
       {{"stiffness_N_m", cfg.contact.stiffness},
        {"damping_Ns_m", cfg.contact.damping},
        {"friction", cfg.contact.friction}}},
      {"singularity_threshold", cfg.singularity_threshold},
      {"record_every", cfg.record_every},
  };
  return doc.dump(2);
}

MeasuredWrenches measure(const ContactLoads& loads) {
  MeasuredWrenches m;
  m.wrench = loads.effector_wrenches;
  for (std::size_t i = 0; i < loads.events.size(); ++i) {
    m.normal[index(loads.events[i].arm)] += loads.events[i].normal;
  }
  for (Vec2& n : m.normal) {
    if (n.norm() > 0.0) n.normalize();
  }
  return m;
}

namespace {

Vec3 current_pose(const RobotModel& model, const SystemState& state, Arm arm) {
  return forward_kinematics(model, state, arm).pose();
}

Vec3 to_world(const Vec3& base_pose, const Vec3& local) {
  const Vec2 p = base_pose.head<2>() + rotation(base_pose.z()) * local.head<2>();
  return {p.x(), p.y(), wrap_angle(base_pose.z() + local.z())};
}

double elbow_sign(const SystemState& state, Arm arm) {
  return sign_nonzero(state.joint_angles(arm)(1));
}

// Reachable `horizon` seconds ahead (base pose extrapolated at its current
// velocity) on the current elbow branch, clear of the stretched singularity.
bool reachable(const RobotModel& model, const SystemState& state, Arm arm, const Vec3& pose,
               const SequenceConfig& cfg, double horizon) {
  const Vec3 base = state.base_pose() + horizon * state.base_vel();
  try {
    const Vec3 joints = solve_arm_ik(model, base, arm, pose, elbow_sign(state, arm));
    return std::abs(joints(1)) >= cfg.min_elbow_angle && std::abs(joints(1)) <= kPi - cfg.min_elbow_angle;
  } catch (const ValidationError&) {
    return false;
  }
}

// Loose bound for any base heading: the rollout settles the rest.
bool within_reach(const RobotModel& model, const SystemState& state, Arm arm, const Vec3& pose,
                  const SequenceConfig& cfg) {
  const double l1 = model.links[0].length_m;
  const double l2 = model.links[1].length_m;
  const double stretched = std::sqrt(l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * std::cos(cfg.min_elbow_angle));
  const double mount = model.mounts[index(arm)].norm();
  return (pose.head<2>() - state.q.head<2>()).norm() <= mount + stretched;
}

Vec3 predicted_target(const SystemState& state, double horizon) {
  return state.target_pose + horizon * state.target_vel;
}

// Time grid for plan searches: the spin moves the reduced angle through a full
// quarter turn within this window.
double search_window(const SystemState& state) {
  const double w = std::abs(state.target_vel.z());
  return w > 1e-3 ? std::min(0.5 * kPi / w, 10.0) : 0.0;
}
constexpr double kSearchStep = 0.05;  // s
constexpr double kRetryDelay = 0.2;   // s
constexpr int kMaxPreviews = 12;      // rollouts per arm or cage search
constexpr double kCageStep = 0.25;    // s

TrajectoryPlan hold_plan(const Vec3& pose, double now) { return make_plan(pose, pose, 1.0, now); }

void set_plan(SequencePhase& p, Arm arm, const TrajectoryPlan& plan) {
  p.plans[index(arm)] = plan;
  p.trackers[index(arm)] = TrackerState{};
}

}  // namespace

bool preview_plans(const RobotModel& model, SystemState& s, const PlanPair& plans, double t_end,
                   const SequenceConfig& cfg, double clear_until) {
  constexpr double kStep = 0.02;
  const Momentum m0 = system_momentum(model, s);
  const double span = t_end - s.time;
  if (span <= 0.0) return true;
  const int n = std::max(2, static_cast<int>(std::ceil(span / kStep)));
  const double h = span / n;

  // Chaser velocity for the planned effector motion at time t (midpoint rule below).
  auto velocity = [&](SystemState& at, double t, Vec9& qd) {
    Vec6 v = Vec6::Zero();
    for (Arm arm : kArms) {
      const auto& plan = plans[index(arm)];
      if (plan) v.segment<3>(3 * index(arm)) = eval_trajectory(*plan, t - plan->start_time).velocity;
    }
    const GeneralizedInertia inertia = assemble_inertia(model, at);
    const Vec2 pb = at.q.head<2>();
    const Vec3 rows(m0.linear.x(), m0.linear.y(), m0.angular - cross(pb, m0.linear));
    // Base velocity consistent with the held momentum and the current joint rates.
    at.qd.head<3>() = inertia.base().ldlt().solve(rows - inertia.coupling() * at.qd.tail<6>());
    Vec6 rates;
    try {
      rates = resolve_joint_rates(model, at, v, 10.0 * cfg.singularity_threshold);
    } catch (const SingularityError&) {
      return false;
    }
    qd << inertia.base().ldlt().solve(rows - inertia.coupling() * rates), rates;
    return true;
  };

  for (int k = 0; k < n; ++k) {
    Vec9 k1, k2;
    if (!velocity(s, s.time, k1)) return false;
    SystemState mid = s;
    mid.q += 0.5 * h * k1;
    mid.qd = k1;
    if (!velocity(mid, s.time + 0.5 * h, k2)) return false;
    s.q += h * k2;
    s.qd = k2;
    s.target_pose += h * s.target_vel;
    s.time += h;
    for (Arm arm : kArms) {
      const double elbow = std::abs(s.joint_angles(arm)(1));
      if (elbow < cfg.min_elbow_angle || elbow > kPi - cfg.min_elbow_angle) return false;
      if (s.time >= clear_until) continue;
      for (const Vec2& tip : forward_kinematics(model, s, arm).tips) {
        const ClosestFeature f = closest_on_square(s.target_pose.head<2>(), s.target_pose.z(),
                                                   model.target.side_m, tip);
        if (f.distance < model.effector.tip_radius_m) return false;
      }
    }
  }
  return true;
}

namespace {

constexpr double kClearMargin = 0.1;  // s before the planned touch

bool rollout(const RobotModel& model, SystemState& s, const PlanPair& plans, double t_end,
             const SequenceConfig& cfg, double clear_until) {
  return preview_plans(model, s, plans, t_end, cfg, clear_until);
}

// U facing the target centre from the arm's side, clear of the spinning square.
Vec3 guard_pose(const RobotModel& model, const Vec3& base, const Vec2& target, const SequenceConfig& cfg,
                Arm arm) {
  const double side = arm == Arm::Left ? -1.0 : 1.0;
  const Vec2 dir = rotation(base.z()) * Vec2(side * std::cos(cfg.guard_angle), -std::sin(cfg.guard_angle));
  const Vec2 axis = -dir;
  const Vec2 origin = target + cfg.guard_distance * dir - model.effector.depth_m * axis;
  return {origin.x(), origin.y(), std::atan2(-axis.x(), axis.y())};
}

TrajectoryPlan home_plan(const RobotModel& model, const SystemState& state, const SequenceConfig& cfg,
                         Arm arm) {
  const Vec3 start = current_pose(model, state, arm);
  double t = cfg.duration.min_duration;
  for (int it = 0; it < 3; ++it) {
    const Vec3 goal = guard_pose(model, state.base_pose(), predicted_target(state, t).head<2>(), cfg, arm);
    t = trajectory_duration((goal.head<2>() - start.head<2>()).norm(), cfg.duration);
  }
  const Vec3 guard = guard_pose(model, state.base_pose(), predicted_target(state, t).head<2>(), cfg, arm);
  if (reachable(model, state, arm, guard, cfg, t)) return make_plan(start, guard, t, state.time);
  const Vec3 goal = to_world(state.base_pose(), cfg.home_poses[index(arm)]);
  return make_plan(start, goal, trajectory_duration((goal.head<2>() - start.head<2>()).norm(), cfg.duration),
                   state.time);
}

void plan_home(SequencePhase& p, const RobotModel& model, const SystemState& state,
               const SequenceConfig& cfg, Arm arm) {
  set_plan(p, arm, home_plan(model, state, cfg, arm));
}

bool plan_done(const SequencePhase& p, Arm arm, double now) {
  const auto& plan = p.plans[index(arm)];
  return !plan || now >= plan->end_time();
}

// Approach: per arm, the flattest reachable face over the search window; then
// the arm nearer its contact.
void enter_approach(SequencePhase& p, const RobotModel& model, const SystemState& state,
                    const SequenceConfig& cfg) {
  p.kind = PhaseKind::Approach;
  p.since = state.time;
  struct Candidate {
    Arm arm;
    double duration;
    double distance;
    ContactGoal goal;
  };
  std::optional<Candidate> best;
  for (Arm arm : kArms) {
    int previews = 0;
    std::optional<Candidate> pick;
    const Vec3 start = current_pose(model, state, arm);
    double t = cfg.duration.min_duration;
    for (int it = 0; it < 4; ++it) {
      const ContactGoal g = plan_contact_goal(model, state.target_pose, state.target_vel, t, cfg.approach);
      t = trajectory_duration((g.effector_goal.head<2>() - start.head<2>()).norm(), cfg.duration);
    }
    const double t_end = t + search_window(state);
    for (double tc = t; tc <= t_end + 1e-9; tc += kSearchStep) {
      const ContactGoal g = plan_contact_goal(model, state.target_pose, state.target_vel, tc, cfg.approach);
      const double dist = (g.effector_goal.head<2>() - start.head<2>()).norm();
      if (tc + 1e-9 < trajectory_duration(dist, cfg.duration)) continue;
      if (!reachable(model, state, arm, g.effector_goal, cfg, tc)) continue;
      // Room to comply and back off after the hit.
      Vec3 backed = g.effector_goal;
      backed.head<2>() += cfg.retract_distance * g.face_normal;
      if (!reachable(model, state, arm, backed, cfg, tc)) continue;
      if (++previews > kMaxPreviews) break;
      PlanPair trial;
      trial[index(arm)] = make_plan(start, g.effector_goal, tc, state.time);
      trial[index(other(arm))] = home_plan(model, state, cfg, other(arm));
      SystemState preview = state;
      if (!rollout(model, preview, trial, state.time + tc, cfg, state.time + tc - kClearMargin)) continue;
      // Flattest face wins: a tilted face throws the target away from the base.
      const double tilt = std::abs(g.face_normal.y());
      if (!pick || tilt < pick->goal.face_normal.cwiseAbs().y() - 1e-3) {
        pick = Candidate{arm, tc, (g.contact_point - start.head<2>()).norm(), g};
      }
    }
    if (pick && (!best || pick->distance < best->distance)) best = pick;
  }
  if (!best) {
    p.waiting_until = state.time + kRetryDelay;
    for (Arm arm : kArms) plan_home(p, model, state, cfg, arm);
    return;
  }
  p.waiting_until = 0.0;
  p.active = best->arm;
  set_plan(p, best->arm, make_plan(current_pose(model, state, best->arm), best->goal.effector_goal,
                                   best->duration, state.time));
  plan_home(p, model, state, cfg, other(best->arm));
}

void enter_caging(SequencePhase& p, const RobotModel& model, const SystemState& state,
                  const SequenceConfig& cfg) {
  p.kind = PhaseKind::CagingApproach;
  p.since = state.time;
  p.caging_stage = 0;
  const std::array<Vec3, 2> start{current_pose(model, state, Arm::Left),
                                  current_pose(model, state, Arm::Right)};
  const double closing = cfg.caging.closing_duration;
  const double t0 = cfg.duration.min_duration + closing;
  const double t_end = t0 + search_window(state) + 5.0;
  int previews = 0;
  for (double t = t0; t <= t_end + 1e-9 && previews < kMaxPreviews; t += kCageStep) {
    const Vec3 target = cage_frame(state.q.head<2>(), predicted_target(state, t));
    for (bool mirrored : {false, true}) {
      const CagePlacement stand = cage_placement(model, target, cfg.caging, cfg.caging.standoff, mirrored);
      const CagePlacement close = cage_placement(model, target, cfg.caging, 0.0, mirrored);
      bool ok = true;
      for (Arm arm : kArms) {
        const int i = index(arm);
        const double dist = (stand.effector_poses[i].head<2>() - start[i].head<2>()).norm();
        ok = ok && t - closing + 1e-9 >= trajectory_duration(dist, cfg.duration) &&
             within_reach(model, state, arm, stand.effector_poses[i], cfg) &&
             within_reach(model, state, arm, close.effector_poses[i], cfg);
      }
      if (!ok) continue;
      ++previews;
      PlanPair first, second;
      for (Arm arm : kArms) {
        const int i = index(arm);
        first[i] = make_plan(start[i], stand.effector_poses[i], t - closing, state.time);
        second[i] = make_plan(stand.effector_poses[i], close.effector_poses[i], closing,
                              state.time + t - closing);
      }
      SystemState preview = state;
      const double touch = state.time + t - closing;
      if (!rollout(model, preview, first, touch, cfg, touch) ||
          !rollout(model, preview, second, state.time + t, cfg, touch)) {
        continue;
      }
      p.waiting_until = 0.0;
      p.cage_time = state.time + t;
      p.cage_mirrored = mirrored;
      for (Arm arm : kArms) {
        set_plan(p, arm, make_plan(start[index(arm)], stand.effector_poses[index(arm)], t - closing,
                                   state.time));
      }
      return;
    }
  }
  p.waiting_until = state.time + kRetryDelay;
  for (Arm arm : kArms) plan_home(p, model, state, cfg, arm);
}

void enter_closing(SequencePhase& p, const RobotModel& model, const SystemState& state,
                   const SequenceConfig& cfg) {
  p.caging_stage = 1;
  const double horizon = std::max(p.cage_time - state.time, 0.2);
  p.cage_time = state.time + horizon;
  const CagePlacement close =
      cage_placement(model, cage_frame(state.q.head<2>(), predicted_target(state, horizon)), cfg.caging,
                     0.0, p.cage_mirrored);
  for (Arm arm : kArms) {
    set_plan(p, arm, make_plan(current_pose(model, state, arm), close.effector_poses[index(arm)],
                               horizon, state.time));
  }
}

void enter_retract(SequencePhase& p, const RobotModel& model, const SystemState& state,
                   const SequenceConfig& cfg) {
  p.kind = PhaseKind::Retract;
  p.since = state.time;
  const Vec3 start = current_pose(model, state, p.active);
  // Shorten the back-off if the target has drifted toward the edge of reach.
  double dist = cfg.retract_distance;
  for (int i = 0; i < 4; ++i, dist *= 0.5) {
    Vec3 goal = start;
    goal.head<2>() += dist * p.contact_normal;
    const TrajectoryPlan plan = make_plan(start, goal, trajectory_duration(dist, cfg.duration), state.time);
    if (!reachable(model, state, p.active, goal, cfg, 0.0)) continue;
    PlanPair trial = p.plans;
    trial[index(p.active)] = plan;
    SystemState preview = state;
    trial[index(other(p.active))] = home_plan(model, state, cfg, other(p.active));
    if (!rollout(model, preview, trial, plan.end_time(), cfg, -std::numeric_limits<double>::infinity())) continue;
    set_plan(p, other(p.active), *trial[index(other(p.active))]);
    set_plan(p, p.active, plan);
    return;
  }
  set_plan(p, p.active, hold_plan(start, state.time));
}

void enter_detumble_or_cage(SequencePhase& p, const RobotModel& model, const SystemState& state,
                            const SequenceConfig& cfg) {
  if (std::abs(state.target_vel.z()) < cfg.omega_threshold) {
    enter_caging(p, model, state, cfg);
  } else {
    enter_approach(p, model, state, cfg);
  }
}

Vec3 follow(SequencePhase& p, const RobotModel& model, const SystemState& state,
            const SequenceConfig& cfg, Arm arm) {
  const auto& plan = p.plans[index(arm)];
  const Vec3 pose = current_pose(model, state, arm);
  if (!plan) return Vec3::Zero();
  return track(eval_trajectory(*plan, state.time - plan->start_time), pose, cfg.tracker,
               p.trackers[index(arm)], cfg.dt);
}

}  // namespace

SequencePhase initial_phase(const RobotModel& model, const SystemState& state,
                            const SequenceConfig& cfg) {
  SequencePhase p;
  for (Arm arm : kArms) set_plan(p, arm, hold_plan(current_pose(model, state, arm), state.time));
  if (cfg.mode == SequenceMode::DirectCage) {
    enter_caging(p, model, state, cfg);
  } else {
    enter_detumble_or_cage(p, model, state, cfg);
  }
  return p;
}

SequenceOutput step_sequence(const SequencePhase& phase, const RobotModel& model,
                             const SystemState& state, const SequenceConfig& cfg,
                             const ImpedanceParams& impedance, const MeasuredWrenches& measured) {
  SequenceOutput out;
  out.next = phase;
  SequencePhase& p = out.next;
  const double now = state.time;

  // Transitions.
  switch (p.kind) {
    case PhaseKind::Approach: {
      // Whichever arm is struck goes compliant, planned or not.
      const Arm hit = measured.force(Arm::Left) > measured.force(Arm::Right) ? Arm::Left : Arm::Right;
      if (measured.force(hit) > cfg.force_threshold) {
        const Arm a = hit;
        p.active = a;
        p.waiting_until = 0.0;
        p.kind = PhaseKind::ImpedanceReduce;
        p.since = now;
        p.contacts += 1;
        p.impedance = start_impedance(current_pose(model, state, a));
        set_plan(p, other(a), hold_plan(current_pose(model, state, other(a)), now));
        const Vec2 n = measured.normal[index(a)];
        p.contact_normal = n.norm() > 0.0 ? n : Vec2(current_pose(model, state, a).head<2>() -
                                                     state.target_pose.head<2>()).normalized();
      } else if (p.waiting_until > 0.0) {
        if (now >= p.waiting_until) enter_detumble_or_cage(p, model, state, cfg);
      } else if (plan_done(p, p.active, now - cfg.approach_grace)) {
        enter_detumble_or_cage(p, model, state, cfg);
      }
      break;
    }
    case PhaseKind::ImpedanceReduce:
      if (now - p.since >= cfg.impedance_hold) enter_retract(p, model, state, cfg);
      break;
    case PhaseKind::Retract:
      if (plan_done(p, p.active, now)) enter_detumble_or_cage(p, model, state, cfg);
      break;
    case PhaseKind::CagingApproach:
      if (p.waiting_until > 0.0) {
        if (now >= p.waiting_until) enter_caging(p, model, state, cfg);
      } else if (plan_done(p, Arm::Left, now) && plan_done(p, Arm::Right, now)) {
        if (p.caging_stage == 0) {
          enter_closing(p, model, state, cfg);
        } else {
          std::array<Vec2, 4> tips;
          for (Arm arm : kArms) {
            const EffectorPose e = forward_kinematics(model, state, arm);
            tips[2 * index(arm)] = e.tips[0];
            tips[2 * index(arm) + 1] = e.tips[1];
          }
          if (target_confined(model, state.target_pose, tips)) {
            p.kind = PhaseKind::Caged;
            p.since = now;
          } else {
            enter_caging(p, model, state, cfg);
          }
        }
      }
      break;
    case PhaseKind::Caged:
    case PhaseKind::Failed:
      break;
  }

  if (p.kind == PhaseKind::Caged || p.kind == PhaseKind::Failed) return out;

  // Commands.
  std::array<Vec3, 2> v{Vec3::Zero(), Vec3::Zero()};
  for (Arm arm : kArms) {
    const bool compliant = p.kind == PhaseKind::ImpedanceReduce && arm == p.active;
    v[index(arm)] = compliant
                        ? impedance_velocity(impedance, p.impedance, measured.wrench[index(arm)], cfg.dt)
                        : follow(p, model, state, cfg, arm);
  }
  out.effector_velocity << v[0], v[1];
  try {
    out.joint_rates = resolve_joint_rates(model, state, out.effector_velocity, cfg.singularity_threshold);
  } catch (const SingularityError&) {
    p.kind = PhaseKind::Failed;
    p.reason = FailureReason::Singularity;
    p.since = now;
    out.joint_rates.setZero();
  }
  return out;
}

SystemState initial_state(const RobotModel& model, const SequenceConfig& cfg) {
  SystemState s;
  for (Arm arm : kArms) {
    const Vec3 pose = cfg.home_poses[index(arm)];
    s.set_joint_angles(arm, solve_arm_ik(model, Vec3::Zero(), arm, pose, cfg.home_elbows[index(arm)]));
  }
  s.target_pose = Vec3(cfg.target_position.x(), cfg.target_position.y(), 0.0);
  s.target_vel = Vec3(0.0, 0.0, cfg.initial_omega);
  return s;
}

namespace {

// U pose whose tips sit at `a` (tip 0) and `b` (tip 1), opening toward `inside`.
Vec3 u_pose(const RobotModel& model, Vec2 a, Vec2 b, const Vec2& inside) {
  if (cross(b - a, inside - 0.5 * (a + b)) < 0.0) std::swap(a, b);
  const Vec2 x_axis = (b - a).normalized();
  const Vec2 mid = 0.5 * (a + b);
  const Vec2 origin = mid - model.effector.depth_m * perp(x_axis);
  return {origin.x(), origin.y(), std::atan2(x_axis.y(), x_axis.x())};
}

}  // namespace

Vec3 cage_frame(const Vec2& base_position, const Vec3& target_pose) {
  const Vec2 d = target_pose.head<2>() - base_position;
  const double radial = std::atan2(-d.x(), d.y());
  return {target_pose.x(), target_pose.y(), radial + reduce_quarter_turn(target_pose.z() - radial)};
}

CagePlacement cage_placement(const RobotModel& model, const Vec3& target_pose,
                             const CagingParams& params, double standoff, bool mirrored) {
  const double h = 0.5 * model.target.side_m;
  const double r = model.effector.tip_radius_m;
  const double w = model.effector.width_m;
  // Left U in the target frame: inner tip beside the -x face, outer tip above the +y face.
  const Vec2 outer(-(h - params.overlap), h + r + params.gap);
  const double dx = (h + r + params.gap) - (h - params.overlap);
  const double dy = std::sqrt(std::max(w * w - dx * dx, 0.0));
  Vec2 inner(-(h + r + params.gap), outer.y() - dy);
  std::array<Vec2, 4> local{inner, outer, -inner, -outer};
  if (mirrored) {
    for (Vec2& t : local) t.y() = -t.y();
  }

  const Mat2 rot = rotation(target_pose.z());
  const Vec2 c = target_pose.head<2>();
  CagePlacement out;
  for (int u = 0; u < 2; ++u) {
    const Vec2 a = c + rot * local[2 * u];
    const Vec2 b = c + rot * local[2 * u + 1];
    Vec3 pose = u_pose(model, a, b, c);
    // Back off along the U axis.
    const Vec2 back = -standoff * link_axis(pose.z());
    pose.head<2>() += back;
    out.effector_poses[u] = pose;
    const auto offsets = model.tip_offsets();
    out.tips[2 * u] = pose.head<2>() + rotation(pose.z()) * offsets[0];
    out.tips[2 * u + 1] = pose.head<2>() + rotation(pose.z()) * offsets[1];
  }
  return out;
}

namespace {

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i - 1] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

bool target_confined(const RobotModel& model, const Vec3& target_pose, std::span<const Vec2> tips,
                     int directions) {
  constexpr double kSweep = 1.0;  // m, well past any tip
  const double r = model.effector.tip_radius_m;
  const Polygon square = square_corners(target_pose.head<2>(), target_pose.z(), model.target.side_m);
  for (int k = 0; k < directions; ++k) {
    const double a = 2.0 * kPi * k / directions;
    const Vec2 u(std::cos(a), std::sin(a));
    std::vector<Vec2> pts(square.begin(), square.end());
    for (const Vec2& c : square) pts.push_back(c + kSweep * u);
    const std::vector<Vec2> hull = convex_hull(std::move(pts));
    bool blocked = false;
    for (const Vec2& t : tips) {
      if (distance_to_convex(hull, t) < r) {
        blocked = true;
        break;
      }
    }
    if (!blocked) return false;
  }
  return true;
}

bool base_collision(const RobotModel& model, const SystemState& state) {
  const Polygon target = square_corners(state.target_pose.head<2>(), state.target_pose.z(), model.target.side_m);
  return polygons_intersect(model.base_outline(state.base_pose()), target);
}

bool target_ejected(const SystemState& state, double range) {
  const Vec2 rel = state.target_pose.head<2>() - state.q.head<2>();
  const Vec2 rel_vel = state.target_vel.head<2>() - state.qd.head<2>();
  return rel.norm() > range && rel.dot(rel_vel) > 0.0;
}

namespace {

bool planned_contact(const SequencePhase& p, Arm arm) {
  switch (p.kind) {
    case PhaseKind::Approach:
    case PhaseKind::ImpedanceReduce: return arm == p.active;
    case PhaseKind::Retract: return false;
    default: return true;
  }
}

TraceSample sample(const RobotModel& model, const SystemState& state, const SequencePhase& p,
                   const MeasuredWrenches& measured) {
  TraceSample s;
  s.time = state.time;
  s.phase = p.kind;
  s.active = p.active;
  for (Arm arm : kArms) {
    s.force[index(arm)] = measured.force(arm);
    s.manipulability[index(arm)] = manipulability(model, state, arm);
  }
  s.target_omega = state.target_vel.z();
  s.base_angle = state.q(2);
  s.base_omega = state.qd(2);
  s.target_pose = state.target_pose;
  s.base_pose = state.base_pose();
  return s;
}

}  // namespace

EpisodeTrace run_episode(const RobotModel& model, const SequenceConfig& cfg,
                         const ImpedanceParams& impedance) {
  const SystemState state = initial_state(model, cfg);
  return run_episode_from(model, cfg, impedance, state, initial_phase(model, state, cfg));
}

EpisodeTrace run_episode_from(const RobotModel& model, const SequenceConfig& cfg,
                              const ImpedanceParams& impedance, SystemState state,
                              SequencePhase phase) {
  model.validate();
  cfg.validate();
  impedance.validate();

  EpisodeTrace trace;
  trace.mode = cfg.mode;
  trace.impedance = impedance;
  EpisodeSummary& sum = trace.summary;
  sum.min_manipulability = {std::numeric_limits<double>::infinity(),
                            std::numeric_limits<double>::infinity()};

  ServoState servo;
  std::array<bool, 2> touching{false, false};
  const Momentum p0 = system_momentum(model, state) + target_momentum(model, state);
  const double linear_scale =
      model.target.mass_kg * std::max(state.target_vel.head<2>().norm(),
                                      0.5 * model.target.side_m * std::abs(state.target_vel.z()));
  const double angular_scale = std::abs(target_momentum(model, state).angular) +
                               model.target.inertia_kgm2 * std::abs(state.target_vel.z());
  auto track_momentum = [&] {
    const Momentum p = system_momentum(model, state) + target_momentum(model, state);
    if (linear_scale > 0.0) {
      sum.momentum_drift_linear = std::max(sum.momentum_drift_linear, (p.linear - p0.linear).norm() / linear_scale);
    }
    if (angular_scale > 0.0) {
      sum.momentum_drift_angular = std::max(sum.momentum_drift_angular, std::abs(p.angular - p0.angular) / angular_scale);
    }
  };
  const StageForces stage = [&](const SystemState& s, DynamicsInput& in) {
    accumulate(compute_contact_loads(model, s, cfg.contact), in);
  };

  for (long n = 0;; ++n) {
    const ContactLoads loads = compute_contact_loads(model, state, cfg.contact);
    const MeasuredWrenches measured = measure(loads);
    for (Arm arm : kArms) {
      const int i = index(arm);
      sum.max_tip_force = std::max(sum.max_tip_force, loads.peak_tip_force[i]);
      const bool now_touching = measured.force(arm) > cfg.force_threshold;
      if (now_touching && !touching[i] && phase.kind != PhaseKind::Failed) {
        const bool planned = planned_contact(phase, arm);
        trace.contacts.push_back({state.time, arm, phase.kind, planned, state.target_vel.z()});
        if (!planned) sum.unplanned_contact = true;
      }
      touching[i] = now_touching;
      sum.min_manipulability[i] = std::min(sum.min_manipulability[i], manipulability(model, state, arm));
    }

    const SequenceOutput out = step_sequence(phase, model, state, cfg, impedance, measured);
    if (phase.kind == PhaseKind::ImpedanceReduce && out.next.kind != PhaseKind::ImpedanceReduce) {
      trace.omega_after_contact.push_back(std::abs(state.target_vel.z()));
    }
    if (phase.kind != PhaseKind::Caged && out.next.kind == PhaseKind::Caged) {
      sum.time_to_cage = state.time;
    }
    phase = out.next;
    if (n % cfg.record_every == 0) trace.samples.push_back(sample(model, state, phase, measured));

    if (phase.kind == PhaseKind::Failed) {
      sum.failure = phase.reason;
      break;
    }
    if (phase.kind == PhaseKind::Caged && state.time - phase.since >= cfg.post_cage_coast) {
      std::array<Vec2, 4> tips;
      for (Arm arm : kArms) {
        const EffectorPose e = forward_kinematics(model, state, arm);
        tips[2 * index(arm)] = e.tips[0];
        tips[2 * index(arm) + 1] = e.tips[1];
      }
      sum.caged = target_confined(model, state.target_pose, tips);
      if (!sum.caged) {
        sum.failure = FailureReason::Ejection;
        sum.ejection = true;
      }
      break;
    }
    if (state.time >= cfg.timeout) {
      sum.failure = FailureReason::Timeout;
      break;
    }

    DynamicsInput input;
    input.joint_torques = servo_torques(model, state, out.joint_rates, cfg.servo, servo, cfg.dt);
    state = step(model, state, input, cfg.dt, cfg.integrator, stage);
    track_momentum();

    if (base_collision(model, state)) {
      sum.failure = FailureReason::BaseCollision;
      sum.base_collision = true;
      break;
    }
    if (target_ejected(state, cfg.ejection_range)) {
      sum.failure = FailureReason::Ejection;
      sum.ejection = true;
      break;
    }
  }
  if (sum.failure != FailureReason::None) {
    phase.kind = PhaseKind::Failed;
    phase.reason = sum.failure;
  }
  if (trace.samples.empty() || trace.samples.back().time != state.time) {
    // Close the trace with the terminal state.
    trace.samples.push_back(sample(model, state, phase, measure(compute_contact_loads(model, state, cfg.contact))));
  }
  sum.final_omega = state.target_vel.z();
  sum.contact_count = phase.contacts;
  sum.end_time = state.time;
  return trace;
}

}  // namespace detumble
