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

// Parametric sweep over impedance parameters, outcome classes and the CSV /
// table artifacts.

#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "detumble/sequence.hpp"

namespace detumble {

struct SweepGrid {
  std::vector<double> masses;       // m_im [kg]
  std::vector<double> dampings;     // d_im [N s/m]
  std::vector<double> stiffnesses;  // k_im [N/m]
  double initial_omega = 1.0;       // [rad/s]

  void validate() const;
  std::size_t size() const { return masses.size() * dampings.size() * stiffnesses.size(); }
  /// Cell parameters for a flat index ordered mass, stiffness, damping (slowest first).
  ImpedanceParams cell(std::size_t i) const;
};

/// 4 x 11 x 11 grid at omega_0 = 1 rad/s.
SweepGrid default_grid();

/// JSON grid: lists or {"start", "stop", "step"} ranges per axis.
SweepGrid load_grid(std::string_view text);
SweepGrid load_grid_file(const std::string& path);

enum class OutcomeClass {
  SuccessForceReduced,
  SuccessNoReduction,
  SuccessUnplannedContacts,
  FailEjection,
  FailBaseCollision,
};

const char* to_string(OutcomeClass c);
OutcomeClass outcome_from_string(std::string_view name);
bool is_success(OutcomeClass c);
/// Single-glyph symbol for the grid table.
const char* glyph(OutcomeClass c);

struct Outcome {
  OutcomeClass cls = OutcomeClass::FailEjection;
  std::string annotation;  // e.g. "timeout", "singularity"
  double max_tip_force = 0.0;
  double final_omega = 0.0;
  int contact_count = 0;
  double time_to_cage = -1.0;
  std::array<double, 2> min_manipulability{0.0, 0.0};
};

Outcome classify_outcome(const EpisodeSummary& episode, const EpisodeSummary& baseline);

struct SweepCell {
  ImpedanceParams params;
  Outcome outcome;
  std::string error;  // non-empty when the episode threw

  bool errored() const { return !error.empty(); }
};

struct SweepResult {
  SweepGrid grid;
  EpisodeSummary baseline;
  std::vector<SweepCell> cells;  // ordered as SweepGrid::cell
};

/// Worker count from DETUMBLE_WORKERS, else the hardware concurrency.
std::size_t worker_count_from_env();

using Progress = std::function<void(std::size_t done, std::size_t total)>;

SweepResult run_sweep(const RobotModel& model, const SequenceConfig& cfg, const SweepGrid& grid,
                      std::size_t workers, const Progress& progress = {});

/// Trace samples resampled at `rate_hz` (last sample at or before each tick).
std::vector<TraceSample> resample(const EpisodeTrace& trace, double rate_hz = 100.0);

struct Metrics {
  std::vector<double> time;
  std::vector<std::array<double, 2>> force;
  std::vector<double> target_omega;
  std::vector<double> base_angle;
  std::vector<std::array<double, 2>> manipulability;
  double max_force = 0.0;
  double final_omega = 0.0;
  std::array<double, 2> min_manipulability{0.0, 0.0};
};

Metrics metrics(const EpisodeTrace& trace, double rate_hz = 100.0);

inline constexpr const char* kTraceHeader =
    "time_s,phase,F_L_N,F_R_N,omega_t_rad_s,theta_base_rad,w_L,w_R";
inline constexpr const char* kSweepHeader =
    "m_im_kg,d_im_Ns_m,k_im_N_m,class,max_force_N,contacts,t_cage_s,final_omega_rad_s,annotation";

void write_trace_csv(std::ostream& out, const EpisodeTrace& trace, double rate_hz = 100.0);
void write_sweep_csv(std::ostream& out, const SweepResult& result);
/// One panel per m_im, rows k_im, columns d_im, followed by the legend.
void write_grid_table(std::ostream& out, const SweepResult& result);

/// Reads a sweep CSV back; baseline and grid are reconstructed from the rows.
SweepResult read_sweep_csv(std::istream& in);

/// Writes sweep.csv, grid.txt and baseline.json into `dir` (created if needed).
void write_sweep_artifacts(const std::string& dir, const SweepResult& result);

}  // namespace detumble
