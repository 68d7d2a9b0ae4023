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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "detumble/harness.hpp"

namespace detumble {
namespace {

EpisodeSummary random_summary(std::mt19937& rng) {
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<int> reason(0, 4);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  EpisodeSummary s;
  s.caged = bit(rng);
  s.failure = static_cast<FailureReason>(reason(rng));
  s.unplanned_contact = bit(rng);
  s.base_collision = bit(rng);
  s.ejection = bit(rng);
  s.max_tip_force = u(rng);
  s.final_omega = u(rng) - 2.5;
  s.contact_count = static_cast<int>(u(rng));
  s.time_to_cage = bit(rng) ? u(rng) : -1.0;
  s.min_manipulability = {u(rng) * 0.01, u(rng) * 0.01};
  return s;
}

TEST(Grid, DefaultHas484Cells) {
  const SweepGrid g = default_grid();
  EXPECT_EQ(g.masses.size(), 4u);
  EXPECT_EQ(g.dampings.size(), 11u);
  EXPECT_EQ(g.stiffnesses.size(), 11u);
  EXPECT_EQ(g.size(), 484u);
  EXPECT_DOUBLE_EQ(g.dampings.back(), 15.0);
  EXPECT_DOUBLE_EQ(g.stiffnesses.back(), 100.0);
  // Damping varies fastest.
  EXPECT_DOUBLE_EQ(g.cell(1).damping, 1.5);
  EXPECT_DOUBLE_EQ(g.cell(11).stiffness, 10.0);
  EXPECT_DOUBLE_EQ(g.cell(121).mass, 0.05);
  EXPECT_DOUBLE_EQ(g.cell(483).mass, 0.5);
}

TEST(Grid, LoadsListsAndRanges) {
  const SweepGrid g = load_grid(R"({"schema_version": 1, "m_im_kg": [0.1],
      "d_im_Ns_m": {"start": 0, "stop": 3, "step": 1.5}, "k_im_N_m": [10, 20], "omega0_rad_s": 0.8})");
  EXPECT_EQ(g.dampings, (std::vector<double>{0.0, 1.5, 3.0}));
  EXPECT_EQ(g.size(), 6u);
  EXPECT_DOUBLE_EQ(g.initial_omega, 0.8);
  EXPECT_THROW(load_grid(R"({"m_im_kg": [0.0], "d_im_Ns_m": [1], "k_im_N_m": [1]})"), ValidationError);
  EXPECT_THROW(load_grid(R"({"m_im_kg": [], "d_im_Ns_m": [1], "k_im_N_m": [1]})"), ValidationError);
  EXPECT_THROW(load_grid(R"({"m_im_kg": [0.1], "d_im_Ns_m": [1]})"), ValidationError);
  EXPECT_THROW(load_grid(R"({"m_im_kg": [0.1], "d_im_Ns_m": [1], "k_im_N_m": [1], "x": 1})"), ValidationError);
  EXPECT_THROW(load_grid_file("/nonexistent/grid.json"), ValidationError);
}

TEST(Grid, ShippedConfigsMatchDefaults) {
  const std::string dir = DETUMBLE_CONFIG_DIR;
  const SweepGrid g = load_grid_file(dir + "/grid.json");
  const SweepGrid d = default_grid();
  EXPECT_EQ(g.masses, d.masses);
  EXPECT_EQ(g.dampings, d.dampings);
  EXPECT_EQ(g.stiffnesses, d.stiffnesses);
  EXPECT_EQ(load_model_file(dir + "/model.json"), default_model());
  EXPECT_EQ(dump_sequence_config(load_sequence_config_file(dir + "/sequence.json")),
            dump_sequence_config(SequenceConfig{}));
}

TEST(Classify, TotalOverRandomSummaries) {
  std::mt19937 rng(2026);
  const std::vector<OutcomeClass> all{OutcomeClass::SuccessForceReduced, OutcomeClass::SuccessNoReduction,
                                      OutcomeClass::SuccessUnplannedContacts, OutcomeClass::FailEjection,
                                      OutcomeClass::FailBaseCollision};
  for (int i = 0; i < 1000; ++i) {
    const EpisodeSummary e = random_summary(rng);
    const EpisodeSummary b = random_summary(rng);
    Outcome o;
    ASSERT_NO_THROW(o = classify_outcome(e, b));
    EXPECT_EQ(std::count(all.begin(), all.end(), o.cls), 1);
    EXPECT_EQ(is_success(o.cls), e.caged);
    EXPECT_EQ(outcome_from_string(to_string(o.cls)), o.cls);
  }
}

TEST(Classify, Precedence) {
  EpisodeSummary base;
  base.max_tip_force = 2.0;
  EpisodeSummary e;
  e.caged = true;
  e.max_tip_force = 1.0;
  EXPECT_EQ(classify_outcome(e, base).cls, OutcomeClass::SuccessForceReduced);
  e.max_tip_force = 2.0;
  EXPECT_EQ(classify_outcome(e, base).cls, OutcomeClass::SuccessNoReduction);
  e.unplanned_contact = true;
  EXPECT_EQ(classify_outcome(e, base).cls, OutcomeClass::SuccessUnplannedContacts);
  EpisodeSummary f;
  f.base_collision = true;
  EXPECT_EQ(classify_outcome(f, base).cls, OutcomeClass::FailBaseCollision);
  f.ejection = true;
  EXPECT_EQ(classify_outcome(f, base).cls, OutcomeClass::FailEjection);
  EpisodeSummary g;
  g.failure = FailureReason::Singularity;
  const Outcome o = classify_outcome(g, base);
  EXPECT_EQ(o.cls, OutcomeClass::FailEjection);
  EXPECT_EQ(o.annotation, "singularity");
  EXPECT_THROW(outcome_from_string("Win"), ValidationError);
}

TEST(SweepCsv, RoundTrip) {
  SweepResult r;
  r.grid.masses = {0.1};
  r.grid.dampings = {0.0, 1.5};
  r.grid.stiffnesses = {10.0};
  SweepCell a;
  a.params = {0.1, 0.0, 10.0};
  a.outcome.cls = OutcomeClass::SuccessForceReduced;
  a.outcome.max_tip_force = 0.123456789;
  a.outcome.contact_count = 3;
  a.outcome.time_to_cage = 7.5;
  a.outcome.final_omega = -0.02;
  SweepCell b;
  b.params = {0.1, 1.5, 10.0};
  b.outcome.cls = OutcomeClass::FailEjection;
  b.outcome.annotation = "timeout";
  SweepCell c;
  c.params = {0.1, 3.0, 10.0};
  c.error = "boom, twice\n";
  r.cells = {a, b, c};
  std::stringstream s;
  write_sweep_csv(s, r);
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')), kSweepHeader);
  const SweepResult back = read_sweep_csv(s);
  ASSERT_EQ(back.cells.size(), 3u);
  EXPECT_EQ(back.cells[0].outcome.cls, OutcomeClass::SuccessForceReduced);
  EXPECT_DOUBLE_EQ(back.cells[0].outcome.max_tip_force, 0.123456789);
  EXPECT_EQ(back.cells[0].outcome.contact_count, 3);
  EXPECT_DOUBLE_EQ(back.cells[0].outcome.time_to_cage, 7.5);
  EXPECT_DOUBLE_EQ(back.cells[1].outcome.time_to_cage, -1.0);
  EXPECT_EQ(back.cells[1].outcome.annotation, "timeout");
  EXPECT_TRUE(back.cells[2].errored());
  EXPECT_EQ(back.grid.dampings, (std::vector<double>{0.0, 1.5, 3.0}));

  std::stringstream again;
  write_sweep_csv(again, back);
  std::stringstream first;
  write_sweep_csv(first, r);
  EXPECT_EQ(again.str(), first.str());

  std::stringstream bad("m,d\n");
  EXPECT_THROW(read_sweep_csv(bad), ValidationError);
  std::stringstream short_row(std::string(kSweepHeader) + "\n0.1,1,2,FailEjection\n");
  EXPECT_THROW(read_sweep_csv(short_row), ValidationError);
}

TEST(Trace, CsvHeaderAndMonotoneTime) {
  EpisodeTrace t;
  for (int i = 0; i <= 250; ++i) {
    TraceSample s;
    s.time = i * 1e-3 * 7;
    s.force = {0.0, i * 0.01};
    s.target_omega = 1.0 - i * 1e-3;
    t.samples.push_back(s);
  }
  std::stringstream out;
  write_trace_csv(out, t, 100.0);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(line, kTraceHeader);
  double last = -1.0;
  int rows = 0;
  while (std::getline(out, line)) {
    const double time = std::stod(line.substr(0, line.find(',')));
    EXPECT_GT(time, last);
    last = time;
    ++rows;
  }
  EXPECT_NEAR(last, 1.75, 1e-9);
  EXPECT_EQ(rows, 176);
  const Metrics m = metrics(t, 100.0);
  EXPECT_EQ(m.time.size(), 176u);
  EXPECT_DOUBLE_EQ(m.max_force, 2.5);
}

TEST(Harness, WorkerCountFromEnvironment) {
  ::setenv("DETUMBLE_WORKERS", "3", 1);
  EXPECT_EQ(worker_count_from_env(), 3u);
  ::setenv("DETUMBLE_WORKERS", "zero", 1);
  EXPECT_THROW(worker_count_from_env(), ValidationError);
  ::setenv("DETUMBLE_WORKERS", "0", 1);
  EXPECT_THROW(worker_count_from_env(), ValidationError);
  ::unsetenv("DETUMBLE_WORKERS");
  EXPECT_GE(worker_count_from_env(), 1u);
}

TEST(Harness, SmallSweepMatchesSerialEpisodes) {
  const RobotModel m = default_model();
  SequenceConfig c;
  c.timeout = 6.0;
  SweepGrid g;
  g.masses = {0.1};
  g.dampings = {1.5, 7.5};
  g.stiffnesses = {10.0};
  const SweepResult r = run_sweep(m, c, g, 2);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_TRUE(r.baseline.caged);
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    EXPECT_FALSE(r.cells[i].errored());
    const ImpedanceParams p = g.cell(i);
    EXPECT_EQ(r.cells[i].params.damping, p.damping);
    const EpisodeTrace t = run_episode(m, c, p);
    EXPECT_EQ(r.cells[i].outcome.max_tip_force, t.summary.max_tip_force);
  }

  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "detumble_harness_test";
  std::filesystem::remove_all(dir);
  write_sweep_artifacts(dir.string(), r);
  for (const char* f : {"sweep.csv", "grid.txt", "baseline.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream in(dir / "sweep.csv");
  EXPECT_EQ(read_sweep_csv(in).cells.size(), 2u);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace detumble
