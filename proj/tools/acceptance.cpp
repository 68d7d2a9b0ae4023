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

// detumble_acceptance: one PASS/FAIL line per acceptance criterion.
//
// Exit status is non-zero when any criterion fails, except those named with
// --known-unattained; their line is still printed as it came out.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "CLI11.hpp"
#include "detumble/harness.hpp"

namespace {

using namespace detumble;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

Verdict momentum_conservation(const RobotModel& model) {
  const auto t0 = Clock::now();
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SystemState s;
  for (int i = 0; i < kChaserDofs; ++i) {
    s.q(i) = 0.8 * u(rng);
    s.qd(i) = 0.5 * u(rng);
  }
  const Momentum p0 = system_momentum(model, s);
  for (int i = 0; i < 10000; ++i) s = step(model, s, {}, 1e-3, Integrator::RungeKutta4);
  const Momentum p1 = system_momentum(model, s);
  const double dx = std::abs(p1.linear.x() - p0.linear.x()) / p0.linear.norm();
  const double dy = std::abs(p1.linear.y() - p0.linear.y()) / p0.linear.norm();
  const double dl = std::abs(p1.angular - p0.angular) / std::abs(p0.angular);
  const double elapsed = seconds_since(t0);
  const double worst = std::max({dx, dy, dl});
  return {worst < 1e-4 && elapsed < 1.0,
          format("max relative drift %.2e (x %.1e, y %.1e, L %.1e), limit 1e-4; %.2f s of 1 s", worst, dx,
                 dy, dl, elapsed)};
}

Verdict newton_pair(const RobotModel& model, const SequenceConfig& cfg, const ImpedanceParams& rep) {
  const auto t0 = Clock::now();
  double lin = 0.0, ang = 0.0;
  for (SequenceMode mode : {SequenceMode::DetumbleThenCage, SequenceMode::DirectCage}) {
    SequenceConfig c = cfg;
    c.mode = mode;
    const EpisodeTrace t = run_episode(model, c, rep);
    lin = std::max(lin, t.summary.momentum_drift_linear);
    ang = std::max(ang, t.summary.momentum_drift_angular);
  }
  const double elapsed = seconds_since(t0);
  return {lin < 1e-3 && ang < 1e-3 && elapsed < 5.0,
          format("combined drift linear %.2e, angular %.2e (limit 1e-3) over detumble and direct "
                 "episodes; %.2f s of 5 s",
                 lin, ang, elapsed)};
}

// Resolved-rate motion at fixed joint rates with zero chaser momentum.
Vec9 zero_momentum_rates(const RobotModel& model, const SystemState& s, const Vec6& rates) {
  const GeneralizedInertia h = assemble_inertia(model, s);
  Vec9 qd;
  qd.head<3>() = -h.base().inverse() * h.coupling() * rates;
  qd.tail<6>() = rates;
  return qd;
}

SystemState advance(const RobotModel& model, SystemState s, const Vec6& rates, double h) {
  // One classical RK4 step of q' = qd(q).
  auto f = [&](const Vec9& q) {
    SystemState x = s;
    x.q = q;
    return zero_momentum_rates(model, x, rates);
  };
  const Vec9 k1 = f(s.q);
  const Vec9 k2 = f(s.q + 0.5 * h * k1);
  const Vec9 k3 = f(s.q + 0.5 * h * k2);
  const Vec9 k4 = f(s.q + h * k3);
  s.q += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  return s;
}

Verdict generalized_jacobian_oracle(const RobotModel& model) {
  const auto t0 = Clock::now();
  std::mt19937 rng(202);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  int states = 0;
  while (states < 100) {
    SystemState s;
    for (int i = 0; i < kChaserDofs; ++i) s.q(i) = 1.5 * u(rng);
    Vec6 rates;
    for (int i = 0; i < 6; ++i) rates(i) = u(rng);
    const Eigen::JacobiSVD<Mat6> svd(generalized_jacobian(model, s));
    if (svd.singularValues()(5) < 1e-3) continue;
    s.qd = zero_momentum_rates(model, s, rates);
    ++states;
    const Vec6 v = generalized_jacobian(model, s) * rates;
    const SystemState plus = advance(model, s, rates, h);
    const SystemState minus = advance(model, s, rates, -h);
    for (Arm arm : kArms) {
      Vec3 fd = forward_kinematics(model, plus, arm).pose() - forward_kinematics(model, minus, arm).pose();
      fd.z() = wrap_angle(fd.z());
      fd /= 2 * h;
      const Vec3 vj = v.segment<3>(3 * index(arm));
      worst = std::max(worst, (vj - fd).norm() / vj.norm());
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-5 && elapsed < 10.0,
          format("100 states, worst relative error %.2e (limit 1e-5); %.2f s of 10 s", worst, elapsed)};
}

Verdict time_scaling() {
  double worst = 0.0;
  for (double T : {0.5, 1.0, 2.0, 3.7}) {
    worst = std::max({worst, std::abs(cubic_time_scaling(0.0, T).s), std::abs(cubic_time_scaling(T, T).s - 1.0),
                      std::abs(cubic_time_scaling(0.0, T).s_dot), std::abs(cubic_time_scaling(T, T).s_dot),
                      std::abs(cubic_time_scaling(0.5 * T, T).s - 0.5)});
  }
  return {worst <= 1e-12, format("worst endpoint/midpoint error %.1e (limit 1e-12)", worst)};
}

Verdict impedance_filter() {
  const double f = 0.5;
  double worst = 0.0;
  for (double m : {0.01, 0.1, 0.5}) {
    for (double d : {1.5, 6.0, 15.0}) {
      ImpedanceState s = start_impedance(Vec3::Zero());
      Vec3 v;
      for (int i = 0; i < 20000; ++i) v = impedance_velocity({m, d, 0.0}, s, Vec3(f, 0, 0), 1e-3);
      worst = std::max(worst, std::abs(v.x() - f / d) / (f / d));
      for (double k : {10.0, 50.0, 100.0}) {
        ImpedanceState sk = start_impedance(Vec3::Zero());
        for (int i = 0; i < 20000; ++i) impedance_velocity({m, d, k}, sk, Vec3(f, 0, 0), 1e-3);
        worst = std::max(worst, std::abs(sk.displacement.x() - f / k) / (f / k));
      }
    }
  }
  return {worst < 0.01, format("worst steady-state error %.2e of F/d or F/k (limit 1%%)", worst)};
}

struct Representative {
  EpisodeTrace detumble;
  EpisodeTrace direct;
  double seconds = 0.0;
};

Representative run_representative(const RobotModel& model, const SequenceConfig& cfg, const ImpedanceParams& p) {
  const auto t0 = Clock::now();
  Representative r;
  SequenceConfig c = cfg;
  c.mode = SequenceMode::DetumbleThenCage;
  r.detumble = run_episode(model, c, p);
  c.mode = SequenceMode::DirectCage;
  r.direct = run_episode(model, c, p);
  r.seconds = seconds_since(t0);
  return r;
}

Verdict representative_case(const Representative& r, double omega0) {
  const EpisodeSummary& s = r.detumble.summary;
  const double ratio = s.max_tip_force / r.direct.summary.max_tip_force;
  bool monotone = true;
  double previous = std::abs(omega0);
  std::string omegas = format("%.3f", previous);
  for (double w : r.detumble.omega_after_contact) {
    if (w > previous * 1.05) monotone = false;
    previous = w;
    omegas += format(", %.3f", w);
  }
  const bool pass = s.caged && std::abs(s.final_omega) < 0.5 && ratio <= 0.70 && monotone && r.seconds < 30.0;
  return {pass, format("caged=%s, final |omega| %.3f (limit 0.5), peak %.3f N vs direct %.3f N = %.0f%% "
                       "(limit 70%%), |omega| after contacts %s, %.1f s of 30 s",
                       s.caged ? "yes" : "no", std::abs(s.final_omega), s.max_tip_force,
                       r.direct.summary.max_tip_force, 100.0 * ratio, omegas.c_str(), r.seconds)};
}

Verdict sweep_trend(const RobotModel& model, const SequenceConfig& cfg, std::size_t workers) {
  const auto t0 = Clock::now();
  const SweepGrid grid = default_grid();
  const SweepResult res = run_sweep(model, cfg, grid, workers);
  const double elapsed = seconds_since(t0);

  std::map<std::tuple<double, double, double>, bool> ok;
  for (const SweepCell& c : res.cells) {
    ok[{c.params.mass, c.params.stiffness, c.params.damping}] = !c.errored() && is_success(c.outcome.cls);
  }
  // (a) successes in each row form one contiguous band of damping values.
  int split_rows = 0;
  // (b) minimal successful damping does not decrease with stiffness.
  int worst_violations = 0;
  for (double m : grid.masses) {
    int violations = 0;
    double last_min = -1.0;
    for (double k : grid.stiffnesses) {
      int runs = 0;
      bool prev = false;
      double min_d = -1.0;
      for (double d : grid.dampings) {
        const bool s = ok[{m, k, d}];
        if (s && !prev) ++runs;
        if (s && min_d < 0.0) min_d = d;
        prev = s;
      }
      if (runs > 1) ++split_rows;
      if (min_d >= 0.0) {
        if (last_min >= 0.0 && min_d < last_min) ++violations;
        last_min = min_d;
      }
    }
    worst_violations = std::max(worst_violations, violations);
  }
  // (c) spot cells.
  int spot_bad = 0;
  for (double d : {1.5, 3.0, 4.5}) spot_bad += ok[{0.01, 10.0, d}] ? 0 : 1;
  for (double d : grid.dampings) {
    if (d >= 4.5 && ok[{0.01, 0.0, d}]) ++spot_bad;
  }
  int successes = 0;
  for (const auto& [key, s] : ok) successes += s;
  const bool pass = split_rows == 0 && worst_violations <= 2 && spot_bad == 0 && elapsed < 1800.0;
  return {pass, format("%d/%zu cells succeed; rows with split success bands %d (limit 0); worst panel "
                       "min-d_im violations %d (limit 2); spot cells wrong %d (limit 0); %.0f s on %zu "
                       "workers (limit 1800 s)",
                       successes, res.cells.size(), split_rows, worst_violations, spot_bad, elapsed, workers)};
}

Verdict classification_totality() {
  std::mt19937 rng(303);
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<int> reason(0, 4);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  int bad = 0;
  std::map<std::string, int> counts;
  for (int i = 0; i < 1000; ++i) {
    EpisodeSummary e, b;
    for (EpisodeSummary* s : {&e, &b}) {
      s->caged = bit(rng);
      s->failure = static_cast<FailureReason>(reason(rng));
      s->unplanned_contact = bit(rng);
      s->base_collision = bit(rng);
      s->ejection = bit(rng);
      s->max_tip_force = u(rng);
      s->final_omega = u(rng) - 2.5;
      s->contact_count = static_cast<int>(u(rng));
    }
    try {
      const Outcome o = classify_outcome(e, b);
      if (outcome_from_string(to_string(o.cls)) != o.cls || is_success(o.cls) != e.caged) ++bad;
      ++counts[to_string(o.cls)];
    } catch (...) {
      ++bad;
    }
  }
  return {bad == 0, format("1000 random summaries, %d without exactly one class; %zu distinct classes seen", bad,
                           counts.size())};
}

Verdict manipulability_check(const RobotModel& model, const SequenceConfig& cfg, const Representative& r) {
  double min_w = std::numeric_limits<double>::infinity();
  for (const TraceSample& s : r.detumble.samples) min_w = std::min({min_w, s.manipulability[0], s.manipulability[1]});
  const bool success = r.detumble.summary.caged;

  // Drive the right effector straight out of the workspace.
  SequenceConfig c = cfg;
  c.timeout = 5.0;
  SystemState s = initial_state(model, c);
  s.target_pose = Vec3(0.0, 1.2, 0.0);
  s.target_vel.setZero();
  SequencePhase p;
  p.kind = PhaseKind::Approach;
  p.active = Arm::Right;
  for (Arm arm : kArms) {
    const Vec3 pose = forward_kinematics(model, s, arm).pose();
    p.plans[index(arm)] = make_plan(pose, pose, 1.0, 0.0);
  }
  const Vec3 from = forward_kinematics(model, s, Arm::Right).pose();
  const Vec2 out = (from.head<2>() - model.mounts[1]).normalized();
  p.plans[1] = make_plan(from, Vec3(from.x() + 0.4 * out.x(), from.y() + 0.4 * out.y(), from.z()), 3.0, 0.0);
  FailureReason reason = FailureReason::None;
  bool crashed = false;
  try {
    reason = run_episode_from(model, c, r.detumble.impedance, s, p).summary.failure;
  } catch (...) {
    crashed = true;
  }
  const bool pass = success && min_w > 0.0 && !crashed && reason == FailureReason::Singularity;
  return {pass, format("representative min manipulability %.4f (must be > 0, success=%s); stretched-arm "
                       "command ends %s",
                       min_w, success ? "yes" : "no", crashed ? "in an exception" : to_string(reason))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the detumbling simulator"};
  std::vector<std::string> unattained;
  std::vector<std::string> skip;
  app.add_option("--known-unattained", unattained,
                 "Criteria reported but not counted toward the exit status");
  app.add_option("--skip", skip, "Criteria not to run");
  CLI11_PARSE(app, argc, argv);
  const std::set<std::string> known(unattained.begin(), unattained.end());
  const std::set<std::string> skipped(skip.begin(), skip.end());

  std::size_t workers = 1;
  try {
    workers = worker_count_from_env();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  const RobotModel model = default_model();
  const SequenceConfig cfg;
  const ImpedanceParams rep{0.1, 1.5, 10.0};

  int failed = 0;
  int counted_failures = 0;
  int ran = 0;
  auto report = [&](const char* name, auto&& check) {
    if (skipped.count(name)) {
      std::printf("SKIP %s\n", name);
      return;
    }
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    ++ran;
    const bool excused = known.count(name) > 0;
    if (!v.pass) {
      ++failed;
      if (!excused) ++counted_failures;
    }
    std::printf("%s %s: %s%s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str(),
                !v.pass && excused ? " [known unattained]" : "");
    std::fflush(stdout);
  };

  std::optional<Representative> r;
  auto representative = [&]() -> const Representative& {
    if (!r) r = run_representative(model, cfg, rep);
    return *r;
  };

  report("momentum_conservation", [&] { return momentum_conservation(model); });
  report("newton_pair", [&] { return newton_pair(model, cfg, rep); });
  report("generalized_jacobian", [&] { return generalized_jacobian_oracle(model); });
  report("time_scaling", [&] { return time_scaling(); });
  report("impedance_filter", [&] { return impedance_filter(); });
  report("representative_case", [&] { return representative_case(representative(), cfg.initial_omega); });
  report("sweep_trend", [&] { return sweep_trend(model, cfg, workers); });
  report("classification_totality", [&] { return classification_totality(); });
  report("manipulability", [&] { return manipulability_check(model, cfg, representative()); });

  std::printf("acceptance: %d of %d criteria passed", ran - failed, ran);
  if (failed > counted_failures) std::printf(", %d known unattained", failed - counted_failures);
  std::printf("\n");
  return counted_failures == 0 ? 0 : 1;
}
