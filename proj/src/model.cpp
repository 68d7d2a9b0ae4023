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

#include "detumble/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace detumble {

using nlohmann::json;

const char* to_string(Arm arm) { return arm == Arm::Left ? "L" : "R"; }

namespace {

void require_positive(double value, const std::string& field) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ValidationError("model: " + field + " must be positive and finite (got " +
                          std::to_string(value) + ")");
  }
}

double get_number(const json& node, const std::string& key, const std::string& path) {
  if (!node.is_object() || !node.contains(key)) {
    throw ValidationError("model: missing field '" + path + key + "'");
  }
  const json& v = node.at(key);
  if (!v.is_number()) {
    throw ValidationError("model: field '" + path + key + "' must be a number");
  }
  return v.get<double>();
}

const json& get_section(const json& node, const std::string& key) {
  if (!node.contains(key)) throw ValidationError("model: missing section '" + key + "'");
  return node.at(key);
}

Vec2 get_point(const json& node, const std::string& key, const std::string& path) {
  if (!node.contains(key) || !node.at(key).is_array() || node.at(key).size() != 2) {
    throw ValidationError("model: field '" + path + key + "' must be a [x, y] pair");
  }
  return {node.at(key)[0].get<double>(), node.at(key)[1].get<double>()};
}

}  // namespace

void RobotModel::validate() const {
  require_positive(base.mass_kg, "base.mass_kg");
  require_positive(base.inertia_kgm2, "base.inertia_kgm2");
  require_positive(base.width_m, "base.width_m");
  require_positive(base.depth_m, "base.depth_m");
  if (!std::isfinite(base.cog_offset_m)) throw ValidationError("model: base.cog_offset_m not finite");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string prefix = "links[" + std::to_string(i) + "].";
    require_positive(links[i].mass_kg, prefix + "mass_kg");
    require_positive(links[i].inertia_kgm2, prefix + "inertia_kgm2");
    require_positive(links[i].length_m, prefix + "length_m");
    if (!std::isfinite(links[i].cog_offset_m)) {
      throw ValidationError("model: " + prefix + "cog_offset_m not finite");
    }
  }
  require_positive(effector.width_m, "effector.width_m");
  require_positive(effector.depth_m, "effector.depth_m");
  require_positive(effector.tip_radius_m, "effector.tip_radius_m");
  if (effector.tip_radius_m >= effector.depth_m) {
    throw ValidationError("model: effector.tip_radius_m must be smaller than effector.depth_m");
  }
  require_positive(target.mass_kg, "target.mass_kg");
  require_positive(target.inertia_kgm2, "target.inertia_kgm2");
  require_positive(target.side_m, "target.side_m");
  for (const Vec2& m : mounts) {
    if (!m.allFinite()) throw ValidationError("model: mounts_m entries must be finite");
  }
}

double RobotModel::chaser_mass() const {
  double m = base.mass_kg;
  for (const LinkParams& l : links) m += 2.0 * l.mass_kg;
  return m;
}

std::array<Vec2, 2> RobotModel::tip_offsets() const {
  const double half = 0.5 * effector.width_m;
  return {Vec2(-half, effector.depth_m), Vec2(half, effector.depth_m)};
}

Polygon RobotModel::base_outline(const Vec3& base_pose) const {
  const double half = 0.5 * base.width_m;
  const Vec2 lo(-half, base.cog_offset_m - base.depth_m);
  const Vec2 hi(half, base.cog_offset_m);
  return box_corners(base_pose.head<2>(), base_pose.z(), lo, hi);
}

RobotModel default_model() { return RobotModel{}; }

RobotModel load_model(std::string_view config_text) {
  json doc;
  try {
    doc = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model: parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("model: top level must be an object");
  const double version = get_number(doc, "schema_version", "");
  if (version != 1.0) throw ValidationError("model: unsupported schema_version");

  RobotModel model;
  const json& base = get_section(doc, "base");
  model.base.mass_kg = get_number(base, "mass_kg", "base.");
  model.base.inertia_kgm2 = get_number(base, "inertia_kgm2", "base.");
  model.base.width_m = get_number(base, "width_m", "base.");
  model.base.depth_m = get_number(base, "depth_m", "base.");
  model.base.cog_offset_m = get_number(base, "cog_offset_m", "base.");

  const json& links = get_section(doc, "links");
  if (!links.is_array() || links.size() != 3) {
    throw ValidationError("model: 'links' must list exactly 3 links per arm");
  }
  const json& effector = get_section(doc, "effector");
  model.effector.width_m = get_number(effector, "width_m", "effector.");
  model.effector.depth_m = get_number(effector, "depth_m", "effector.");
  model.effector.tip_radius_m = get_number(effector, "tip_radius_m", "effector.");
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string path = "links[" + std::to_string(i) + "].";
    model.links[i].mass_kg = get_number(links[i], "mass_kg", path);
    model.links[i].inertia_kgm2 = get_number(links[i], "inertia_kgm2", path);
    model.links[i].cog_offset_m = get_number(links[i], "cog_offset_m", path);
    model.links[i].length_m =
        i < 2 ? get_number(links[i], "length_m", path) : model.effector.depth_m;
  }

  const json& target = get_section(doc, "target");
  model.target.mass_kg = get_number(target, "mass_kg", "target.");
  model.target.inertia_kgm2 = get_number(target, "inertia_kgm2", "target.");
  model.target.side_m = get_number(target, "side_m", "target.");

  const json& mounts = get_section(doc, "mounts_m");
  model.mounts[0] = get_point(mounts, "left", "mounts_m.");
  model.mounts[1] = get_point(mounts, "right", "mounts_m.");

  model.validate();
  return model;
}

RobotModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("model: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_model(buffer.str());
}

std::string dump_model(const RobotModel& model) {
  json links = json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    json l = {{"mass_kg", model.links[i].mass_kg},
              {"inertia_kgm2", model.links[i].inertia_kgm2},
              {"cog_offset_m", model.links[i].cog_offset_m}};
    if (i < 2) l["length_m"] = model.links[i].length_m;
    links.push_back(l);
  }
  const json doc = {
      {"schema_version", 1},
      {"base",
       {{"mass_kg", model.base.mass_kg},
        {"inertia_kgm2", model.base.inertia_kgm2},
        {"width_m", model.base.width_m},
        {"depth_m", model.base.depth_m},
        {"cog_offset_m", model.base.cog_offset_m}}},
      {"links", links},
      {"effector",
       {{"width_m", model.effector.width_m},
        {"depth_m", model.effector.depth_m},
        {"tip_radius_m", model.effector.tip_radius_m}}},
      {"target",
       {{"mass_kg", model.target.mass_kg},
        {"inertia_kgm2", model.target.inertia_kgm2},
        {"side_m", model.target.side_m}}},
      {"mounts_m",
       {{"left", {model.mounts[0].x(), model.mounts[0].y()}},
        {"right", {model.mounts[1].x(), model.mounts[1].y()}}}},
  };
  return doc.dump(2);
}

bool SystemState::finite() const {
  return q.allFinite() && qd.allFinite() && target_pose.allFinite() && target_vel.allFinite() &&
         std::isfinite(time);
}

void SystemState::normalize_angles() {
  q(2) = wrap_angle(q(2));
  for (int i = kBaseDofs; i < kChaserDofs; ++i) q(i) = wrap_angle(q(i));
  target_pose.z() = wrap_angle(target_pose.z());
}

ArmChain arm_chain(const RobotModel& model, const Vec9& q, Arm arm) {
  const double base_angle = q(2);
  const Vec2 base_pos = q.head<2>();
  const int off = arm_offset(arm);

  ArmChain chain;
  Vec2 joint = base_pos + rotation(base_angle) * model.mounts[index(arm)];
  double angle = base_angle;
  for (int i = 0; i < 3; ++i) {
    angle += q(off + i);
    const Vec2 axis = link_axis(angle);
    chain.joints[i] = joint;
    chain.angles[i] = angle;
    chain.link_coms[i] = joint + model.links[i].cog_offset_m * axis;
    if (i < 2) joint = joint + model.links[i].length_m * axis;
  }
  chain.effector = chain.joints[2];
  return chain;
}

EffectorPose forward_kinematics(const RobotModel& model, const SystemState& state, Arm arm) {
  const ArmChain chain = arm_chain(model, state.q, arm);
  EffectorPose pose;
  pose.position = chain.effector;
  pose.angle = chain.angles[2];
  const Mat2 r = rotation(chain.angles[2]);
  const auto offsets = model.tip_offsets();
  for (int i = 0; i < 2; ++i) pose.tips[i] = chain.effector + r * offsets[i];
  return pose;
}

Mat3 arm_jacobian(const RobotModel& model, const SystemState& state, Arm arm) {
  const ArmChain chain = arm_chain(model, state.q, arm);
  Mat3 j;
  for (int i = 0; i < 3; ++i) {
    j.block<2, 1>(0, i) = perp(chain.effector - chain.joints[i]);
    j(2, i) = 1.0;
  }
  return j;
}

Mat3 base_jacobian(const RobotModel& model, const SystemState& state, Arm arm) {
  const ArmChain chain = arm_chain(model, state.q, arm);
  Mat3 j = Mat3::Identity();
  j.block<2, 1>(0, 2) = perp(chain.effector - state.q.head<2>());
  return j;
}

Vec3 effector_velocity(const RobotModel& model, const SystemState& state, Arm arm) {
  return base_jacobian(model, state, arm) * state.base_vel() +
         arm_jacobian(model, state, arm) * state.joint_rates(arm);
}

Vec2 effector_point_velocity(const RobotModel& model, const SystemState& state, Arm arm,
                             const Vec2& point) {
  const Vec3 v = effector_velocity(model, state, arm);
  const Vec2 p = arm_chain(model, state.q, arm).effector;
  return v.head<2>() + v.z() * perp(point - p);
}

double manipulability(const RobotModel& model, const SystemState& state, Arm arm) {
  const ArmChain chain = arm_chain(model, state.q, arm);
  std::array<Vec2, 3> cols;
  for (int i = 0; i < 3; ++i) cols[i] = perp(chain.effector - chain.joints[i]);
  // Cauchy-Binet: det(J J^T) is the sum of squared 2x2 minors.
  double det = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int k = i + 1; k < 3; ++k) {
      const double minor = cross(cols[i], cols[k]);
      det += minor * minor;
    }
  }
  return std::sqrt(det);
}

Vec3 solve_arm_ik(const RobotModel& model, const Vec3& base_pose, Arm arm, const Vec3& pose,
                  double elbow) {
  const double l1 = model.links[0].length_m;
  const double l2 = model.links[1].length_m;
  const Vec2 mount = base_pose.head<2>() + rotation(base_pose.z()) * model.mounts[index(arm)];
  const Vec2 d = pose.head<2>() - mount;
  const double r2 = d.squaredNorm();
  const double c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (c2 > 1.0 || c2 < -1.0) {
    throw ValidationError("ik: effector pose out of reach for arm " + std::string(to_string(arm)));
  }
  const double phi2 = (elbow < 0.0 ? -1.0 : 1.0) * std::acos(c2);
  const double reach_angle = std::atan2(-d.x(), d.y());
  const double a1 = reach_angle - std::atan2(l2 * std::sin(phi2), l1 + l2 * std::cos(phi2));
  return {wrap_angle(a1 - base_pose.z()), wrap_angle(phi2), wrap_angle(pose.z() - a1 - phi2)};
}

}  // namespace detumble
