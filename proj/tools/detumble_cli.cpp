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

// detumble: run single episodes, parametric sweeps and sweep reports.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "detumble/harness.hpp"
#include "json.hpp"

namespace {

using namespace detumble;

ImpedanceParams parse_params(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> v;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--params: '" + item + "' is not a number");
    }
  }
  if (v.size() != 3) throw ValidationError("--params expects m,d,k");
  ImpedanceParams p{v[0], v[1], v[2]};
  p.validate();
  return p;
}

void print_summary(const char* label, const EpisodeSummary& s) {
  std::printf("%-9s caged=%s failure=%s max_tip_force=%.4f N final_omega=%.4f rad/s "
              "contacts=%d t_cage=%.3f s min_w=(%.5f, %.5f) t_end=%.3f s\n",
              label, s.caged ? "yes" : "no", to_string(s.failure), s.max_tip_force, s.final_omega,
              s.contact_count, s.time_to_cage, s.min_manipulability[0], s.min_manipulability[1],
              s.end_time);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Planar dual-arm detumbling and caging simulator"};
  app.require_subcommand(1);

  std::string model_path;
  std::string config_path;
  app.add_option("--model", model_path, "Robot/target model JSON (default: built-in reference model)")
      ->check(CLI::ExistingFile);
  app.add_option("--config", config_path, "Sequence/control config JSON")->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Run one episode");
  std::string params_text;
  std::string mode = "detumble";
  std::string trace_path;
  std::string baseline_trace_path;
  double omega0 = std::numeric_limits<double>::quiet_NaN();
  run->add_option("--params", params_text, "Impedance parameters m_im,d_im,k_im")->required();
  run->add_option("--mode", mode, "Sequence mode")->check(CLI::IsMember({"direct", "detumble"}));
  run->add_option("--trace", trace_path, "Write the episode trace CSV (100 Hz)");
  run->add_option("--baseline-trace", baseline_trace_path,
                  "Write the direct-caging baseline trace CSV (detumble mode only)");
  run->add_option("--omega0", omega0, "Initial target spin [rad/s]");

  auto* sweep = app.add_subcommand("sweep", "Run a parametric sweep");
  std::string grid_path;
  std::string out_dir;
  sweep->add_option("--grid", grid_path, "Grid JSON; default grid when omitted")->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Render a finished sweep");
  std::string in_dir;
  std::string format = "table";
  report->add_option("--in", in_dir, "Sweep output directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", format, "Output format")->check(CLI::IsMember({"table", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const RobotModel model = model_path.empty() ? default_model() : load_model_file(model_path);
    SequenceConfig cfg = config_path.empty() ? SequenceConfig{} : load_sequence_config_file(config_path);

    if (*run) {
      const ImpedanceParams params = parse_params(params_text);
      if (!std::isnan(omega0)) cfg.initial_omega = omega0;
      cfg.mode = mode == "direct" ? SequenceMode::DirectCage : SequenceMode::DetumbleThenCage;
      const EpisodeTrace trace = run_episode(model, cfg, params);
      print_summary(to_string(cfg.mode), trace.summary);
      for (const ContactRecord& c : trace.contacts) {
        std::printf("  contact t=%.3f arm=%s phase=%s %s omega=%.4f\n", c.time, to_string(c.arm),
                    to_string(c.phase), c.planned ? "planned" : "UNPLANNED", c.target_omega);
      }
      if (!trace_path.empty()) {
        std::ofstream out(trace_path);
        if (!out) throw ValidationError("cannot write " + trace_path);
        write_trace_csv(out, trace);
      }
      if (cfg.mode == SequenceMode::DetumbleThenCage) {
        SequenceConfig direct = cfg;
        direct.mode = SequenceMode::DirectCage;
        const EpisodeTrace baseline = run_episode(model, direct, params);
        print_summary("direct", baseline.summary);
        const Outcome o = classify_outcome(trace.summary, baseline.summary);
        std::printf("class: %s%s%s\n", to_string(o.cls), o.annotation.empty() ? "" : " ",
                    o.annotation.c_str());
        if (!baseline_trace_path.empty()) {
          std::ofstream out(baseline_trace_path);
          if (!out) throw ValidationError("cannot write " + baseline_trace_path);
          write_trace_csv(out, baseline);
        }
      }
      return 0;
    }

    if (*sweep) {
      const SweepGrid grid = grid_path.empty() ? default_grid() : load_grid_file(grid_path);
      const std::size_t workers = worker_count_from_env();
      std::fprintf(stderr, "sweep: %zu cells on %zu workers\n", grid.size(), workers);
      const auto t0 = std::chrono::steady_clock::now();
      const SweepResult result = run_sweep(model, cfg, grid, workers, [](std::size_t done, std::size_t total) {
        if (done % 10 == 0 || done == total) std::fprintf(stderr, "\r%zu/%zu", done, total);
      });
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "\nsweep: done in %.1f s\n", secs);
      write_sweep_artifacts(out_dir, result);
      write_grid_table(std::cout, result);
      return 0;
    }

    if (*report) {
      const std::filesystem::path root(in_dir);
      std::ifstream in(root / "sweep.csv");
      if (!in) throw ValidationError("report: no sweep.csv in " + in_dir);
      SweepResult result = read_sweep_csv(in);
      std::ifstream base(root / "baseline.json");
      if (base) {
        const nlohmann::json doc = nlohmann::json::parse(base);
        result.baseline.max_tip_force = doc.value("max_force_N", 0.0);
        result.grid.initial_omega = doc.value("omega0_rad_s", 1.0);
      }
      if (format == "csv") {
        write_sweep_csv(std::cout, result);
      } else {
        write_grid_table(std::cout, result);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
