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

#include "detumble/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace detumble {

using nlohmann::json;

void SweepGrid::validate() const {
  auto check = [](const std::vector<double>& v, const char* name, bool allow_zero) {
    if (v.empty()) throw ValidationError(std::string("grid: ") + name + " list is empty");
    for (double x : v) {
      if (!std::isfinite(x) || x < 0.0 || (!allow_zero && x == 0.0)) {
        throw ValidationError(std::string("grid: invalid ") + name + " value " + std::to_string(x));
      }
    }
  };
  check(masses, "m_im", false);
  check(dampings, "d_im", true);
  check(stiffnesses, "k_im", true);
  if (!std::isfinite(initial_omega)) throw ValidationError("grid: omega_0 must be finite");
}

ImpedanceParams SweepGrid::cell(std::size_t i) const {
  const std::size_t nd = dampings.size();
  const std::size_t nk = stiffnesses.size();
  ImpedanceParams p;
  p.damping = dampings[i % nd];
  p.stiffness = stiffnesses[(i / nd) % nk];
  p.mass = masses[i / (nd * nk)];
  return p;
}

namespace {

std::vector<double> range(double start, double stop, double step) {
  if (!(step > 0.0)) throw ValidationError("grid: range step must be positive");
  std::vector<double> v;
  const long n = std::lround(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= n; ++i) v.push_back(start + step * static_cast<double>(i));
  return v;
}

std::vector<double> read_axis(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ValidationError(std::string("grid: missing '") + key + "'");
  const json& node = doc.at(key);
  if (node.is_array()) {
    std::vector<double> v;
    for (const json& x : node) {
      if (!x.is_number()) throw ValidationError(std::string("grid: '") + key + "' must hold numbers");
      v.push_back(x.get<double>());
    }
    return v;
  }
  if (node.is_object() && node.contains("start") && node.contains("stop") && node.contains("step")) {
    return range(node["start"].get<double>(), node["stop"].get<double>(), node["step"].get<double>());
  }
  throw ValidationError(std::string("grid: '") + key + "' must be a list or a start/stop/step range");
}

}  // namespace

SweepGrid default_grid() {
  SweepGrid g;
  g.masses = {0.01, 0.05, 0.1, 0.5};
  g.dampings = range(0.0, 15.0, 1.5);
  g.stiffnesses = range(0.0, 100.0, 10.0);
  g.initial_omega = 1.0;
  return g;
}

SweepGrid load_grid(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("grid: parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("grid: expected a JSON object");
  for (const auto& item : doc.items()) {
    static const std::vector<std::string> known{"schema_version", "m_im_kg", "d_im_Ns_m", "k_im_N_m",
                                                "omega0_rad_s"};
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ValidationError("grid: unknown key '" + item.key() + "'");
    }
  }
  SweepGrid g;
  g.masses = read_axis(doc, "m_im_kg");
  g.dampings = read_axis(doc, "d_im_Ns_m");
  g.stiffnesses = read_axis(doc, "k_im_N_m");
  if (doc.contains("omega0_rad_s")) g.initial_omega = doc["omega0_rad_s"].get<double>();
  g.validate();
  return g;
}

SweepGrid load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("grid: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_grid(buffer.str());
}

const char* to_string(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::SuccessForceReduced: return "SuccessForceReduced";
    case OutcomeClass::SuccessNoReduction: return "SuccessNoReduction";
    case OutcomeClass::SuccessUnplannedContacts: return "SuccessUnplannedContacts";
    case OutcomeClass::FailEjection: return "FailEjection";
    case OutcomeClass::FailBaseCollision: return "FailBaseCollision";
  }
  return "?";
}

OutcomeClass outcome_from_string(std::string_view name) {
  for (OutcomeClass c : {OutcomeClass::SuccessForceReduced, OutcomeClass::SuccessNoReduction,
                         OutcomeClass::SuccessUnplannedContacts, OutcomeClass::FailEjection,
                         OutcomeClass::FailBaseCollision}) {
    if (name == to_string(c)) return c;
  }
  throw ValidationError("unknown outcome class '" + std::string(name) + "'");
}

bool is_success(OutcomeClass c) {
  return c == OutcomeClass::SuccessForceReduced || c == OutcomeClass::SuccessNoReduction ||
         c == OutcomeClass::SuccessUnplannedContacts;
}

const char* glyph(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::SuccessForceReduced: return "●";
    case OutcomeClass::SuccessNoReduction: return "○";
    case OutcomeClass::SuccessUnplannedContacts: return "◐";
    case OutcomeClass::FailEjection: return "✕";
    case OutcomeClass::FailBaseCollision: return "■";
  }
  return "?";
}

Outcome classify_outcome(const EpisodeSummary& episode, const EpisodeSummary& baseline) {
  Outcome o;
  o.max_tip_force = episode.max_tip_force;
  o.final_omega = episode.final_omega;
  o.contact_count = episode.contact_count;
  o.time_to_cage = episode.time_to_cage;
  o.min_manipulability = episode.min_manipulability;
  if (episode.caged) {
    if (episode.unplanned_contact) {
      o.cls = OutcomeClass::SuccessUnplannedContacts;
    } else if (episode.max_tip_force < baseline.max_tip_force) {
      o.cls = OutcomeClass::SuccessForceReduced;
    } else {
      o.cls = OutcomeClass::SuccessNoReduction;
    }
  } else if (episode.ejection) {
    o.cls = OutcomeClass::FailEjection;
  } else if (episode.base_collision) {
    o.cls = OutcomeClass::FailBaseCollision;
  } else {
    o.cls = OutcomeClass::FailEjection;
    o.annotation = episode.failure == FailureReason::None ? "timeout" : to_string(episode.failure);
  }
  return o;
}

std::size_t worker_count_from_env() {
  if (const char* env = std::getenv("DETUMBLE_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
    throw ValidationError("DETUMBLE_WORKERS must be a positive integer");
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

SweepResult run_sweep(const RobotModel& model, const SequenceConfig& cfg, const SweepGrid& grid,
                      std::size_t workers, const Progress& progress) {
  grid.validate();
  SequenceConfig base_cfg = cfg;
  base_cfg.initial_omega = grid.initial_omega;
  base_cfg.record_every = 1000;  // only summaries are kept
  base_cfg.validate();

  SweepResult result;
  result.grid = grid;
  SequenceConfig direct = base_cfg;
  direct.mode = SequenceMode::DirectCage;
  result.baseline = run_episode(model, direct, ImpedanceParams{}).summary;

  SequenceConfig detumble = base_cfg;
  detumble.mode = SequenceMode::DetumbleThenCage;
  const std::size_t total = grid.size();
  result.cells.resize(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      SweepCell& cell = result.cells[i];
      cell.params = grid.cell(i);
      try {
        const EpisodeTrace trace = run_episode(model, detumble, cell.params);
        cell.outcome = classify_outcome(trace.summary, result.baseline);
      } catch (const std::exception& e) {
        cell.error = e.what();
        if (cell.error.empty()) cell.error = "unknown error";
      }
      const std::size_t n = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(n, total);
      }
    }
  };
  const std::size_t count = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(total, 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < count; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return result;
}

std::vector<TraceSample> resample(const EpisodeTrace& trace, double rate_hz) {
  std::vector<TraceSample> out;
  if (trace.samples.empty()) return out;
  const double period = 1.0 / rate_hz;
  const double t0 = trace.samples.front().time;
  const double t1 = trace.samples.back().time;
  std::size_t j = 0;
  for (long k = 0;; ++k) {
    const double t = t0 + period * static_cast<double>(k);
    if (t > t1 + 1e-9) break;
    while (j + 1 < trace.samples.size() && trace.samples[j + 1].time <= t + 1e-9) ++j;
    TraceSample s = trace.samples[j];
    s.time = t;
    out.push_back(s);
  }
  return out;
}

Metrics metrics(const EpisodeTrace& trace, double rate_hz) {
  if (trace.samples.empty()) throw ValidationError("metrics: empty trace");
  Metrics m;
  for (const TraceSample& s : resample(trace, rate_hz)) {
    m.time.push_back(s.time);
    m.force.push_back(s.force);
    m.target_omega.push_back(s.target_omega);
    m.base_angle.push_back(s.base_angle);
    m.manipulability.push_back(s.manipulability);
  }
  m.min_manipulability = trace.samples.front().manipulability;
  for (const TraceSample& s : trace.samples) {
    m.max_force = std::max({m.max_force, s.force[0], s.force[1]});
    for (int i = 0; i < 2; ++i) m.min_manipulability[i] = std::min(m.min_manipulability[i], s.manipulability[i]);
  }
  m.final_omega = trace.samples.back().target_omega;
  return m;
}

void write_trace_csv(std::ostream& out, const EpisodeTrace& trace, double rate_hz) {
  out << kTraceHeader << '\n';
  out << std::setprecision(9);
  for (const TraceSample& s : resample(trace, rate_hz)) {
    out << s.time << ',' << to_string(s.phase) << ',' << s.force[0] << ',' << s.force[1] << ','
        << s.target_omega << ',' << s.base_angle << ',' << s.manipulability[0] << ','
        << s.manipulability[1] << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << kSweepHeader << '\n';
  out << std::setprecision(9);
  for (const SweepCell& c : result.cells) {
    out << c.params.mass << ',' << c.params.damping << ',' << c.params.stiffness << ',';
    if (c.errored()) {
      std::string msg = c.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << "Errored,,,,," << msg << '\n';
      continue;
    }
    const Outcome& o = c.outcome;
    out << to_string(o.cls) << ',' << o.max_tip_force << ',' << o.contact_count << ',';
    if (o.time_to_cage >= 0.0) out << o.time_to_cage;
    out << ',' << o.final_omega << ',' << o.annotation << '\n';
  }
}

namespace {

std::string fmt(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace

void write_grid_table(std::ostream& out, const SweepResult& result) {
  const SweepGrid& g = result.grid;
  std::map<std::tuple<double, double, double>, const SweepCell*> lookup;
  for (const SweepCell& c : result.cells) {
    lookup[{c.params.mass, c.params.stiffness, c.params.damping}] = &c;
  }
  for (double m : g.masses) {
    out << "omega_0 = " << fmt(g.initial_omega, 2) << " rad/s, m_im = " << m << " kg\n";
    out << "k_im\\d_im";
    for (double d : g.dampings) out << std::setw(6) << fmt(d, 1);
    out << '\n';
    for (double k : g.stiffnesses) {
      out << std::setw(9) << fmt(k, 1);
      for (double d : g.dampings) {
        const auto it = lookup.find({m, k, d});
        const char* mark = "     ?";
        std::string cell;
        if (it == lookup.end()) {
          cell = mark;
        } else if (it->second->errored()) {
          cell = "     !";
        } else {
          cell = std::string("     ") + glyph(it->second->outcome.cls);
        }
        out << cell;
      }
      out << '\n';
    }
    out << '\n';
  }
  out << "legend:\n";
  for (OutcomeClass c : {OutcomeClass::SuccessForceReduced, OutcomeClass::SuccessNoReduction,
                         OutcomeClass::SuccessUnplannedContacts, OutcomeClass::FailEjection,
                         OutcomeClass::FailBaseCollision}) {
    out << "  " << glyph(c) << "  " << to_string(c) << '\n';
  }
  out << "  !  episode errored\n";
  if (result.baseline.max_tip_force > 0.0) {
    out << "direct caging baseline peak tip force: " << fmt(result.baseline.max_tip_force, 3) << " N\n";
  }
}

SweepResult read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("sweep csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSweepHeader) throw ValidationError("sweep csv: unexpected header '" + line + "'");
  SweepResult r;
  std::vector<double> ms, ds, ks;
  auto add_unique = [](std::vector<double>& v, double x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 9) {
      throw ValidationError("sweep csv: row " + std::to_string(row) + " has " +
                            std::to_string(f.size()) + " fields, expected 9");
    }
    try {
      SweepCell c;
      c.params.mass = std::stod(f[0]);
      c.params.damping = std::stod(f[1]);
      c.params.stiffness = std::stod(f[2]);
      if (f[3] == "Errored") {
        c.error = f[8].empty() ? "errored" : f[8];
      } else {
        c.outcome.cls = outcome_from_string(f[3]);
        c.outcome.max_tip_force = std::stod(f[4]);
        c.outcome.contact_count = std::stoi(f[5]);
        c.outcome.time_to_cage = f[6].empty() ? -1.0 : std::stod(f[6]);
        c.outcome.final_omega = std::stod(f[7]);
        c.outcome.annotation = f[8];
      }
      add_unique(ms, c.params.mass);
      add_unique(ds, c.params.damping);
      add_unique(ks, c.params.stiffness);
      r.cells.push_back(std::move(c));
    } catch (const std::invalid_argument&) {
      throw ValidationError("sweep csv: malformed number on row " + std::to_string(row));
    } catch (const std::out_of_range&) {
      throw ValidationError("sweep csv: number out of range on row " + std::to_string(row));
    }
  }
  std::sort(ms.begin(), ms.end());
  std::sort(ds.begin(), ds.end());
  std::sort(ks.begin(), ks.end());
  r.grid.masses = ms;
  r.grid.dampings = ds;
  r.grid.stiffnesses = ks;
  return r;
}

void write_sweep_artifacts(const std::string& dir, const SweepResult& result) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  {
    std::ofstream out(root / "sweep.csv");
    write_sweep_csv(out, result);
  }
  {
    std::ofstream out(root / "grid.txt");
    write_grid_table(out, result);
  }
  {
    const EpisodeSummary& b = result.baseline;
    json doc = {{"omega0_rad_s", result.grid.initial_omega},
                {"caged", b.caged},
                {"max_force_N", b.max_tip_force},
                {"final_omega_rad_s", b.final_omega},
                {"t_cage_s", b.time_to_cage},
                {"failure", to_string(b.failure)}};
    std::ofstream out(root / "baseline.json");
    out << doc.dump(2) << '\n';
  }
}

}  // namespace detumble
