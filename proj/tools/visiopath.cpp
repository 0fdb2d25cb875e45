/*
 Copyright 2026 The VisioPath Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// Closed-loop traffic benchmark front end: seeded scenario runs with
// bit-reproducible traces and tables, plot-table extraction, and offline
// re-verification of recorded trajectories.

// The planner headers parse Eigen before the HTTP client header; keep this
// include first.
#include "visiopath/runner.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "visiopath/safety.hpp"
#include "visiopath/scenario.hpp"
#include "visiopath/trace.hpp"
#include "visiopath/types.hpp"

namespace {

using namespace visiopath;

/// Parses a seed list: comma-separated entries, each a single non-negative
/// integer or an inclusive low-high range ("1,3,5-8").
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (item.empty()) {
      throw std::invalid_argument("--seeds: empty entry");
    }
    const std::size_t dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(item));
      } else {
        const std::uint64_t lo = std::stoull(item.substr(0, dash));
        const std::uint64_t hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) {
          throw std::invalid_argument("--seeds: descending range " + item);
        }
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw std::invalid_argument("--seeds: malformed entry \"" + item +
                                  "\" (expected N or N-M)");
    }
  }
  if (seeds.empty()) {
    throw std::invalid_argument("--seeds: no seeds given");
  }
  return seeds;
}

int cmd_run(const std::string& scenario_path, const std::string& method,
            const std::string& safety, const std::string& seeds_text,
            const std::string& out_dir, double v_nominal) {
  const auto scenario = scenario::load(scenario_path);
  runner::RunOptions base;
  base.method = runner::parse_method(method);
  if (safety == "on") {
    base.safety = true;
  } else if (safety == "off") {
    base.safety = false;
  } else {
    throw std::invalid_argument("--safety must be on or off");
  }
  base.v_nominal = v_nominal;
  base.endpoint = perception::EndpointConfig::from_env();

  const std::vector<std::uint64_t> seeds =
      seeds_text.empty() ? std::vector<std::uint64_t>{scenario.seed}
                         : parse_seeds(seeds_text);

  std::vector<runner::RunResult> runs;
  runs.reserve(seeds.size());
  bool crashed = false;
  for (const std::uint64_t seed : seeds) {
    runner::RunOptions opt = base;
    opt.seed = seed;
    runs.push_back(runner::run_scenario(scenario, opt));
    const auto& run = runs.back();
    int completed = 0;
    int collided = 0;
    int partial = 0;
    for (const auto& e : run.episodes) {
      if (e.partial) {
        ++partial;
      } else if (e.collision) {
        ++collided;
      } else {
        ++completed;
      }
    }
    std::printf(
        "seed %llu: cycles %zu, episodes %zu (%d completed, %d collided, "
        "%d partial), solves %ld, replans %ld%s\n",
        static_cast<unsigned long long>(seed), run.records.size(),
        run.episodes.size(), completed, collided, partial, run.total_solves,
        run.replans, run.crashed ? " [CRASHED]" : "");
    if (run.crashed) {
      crashed = true;
      std::fprintf(stderr, "seed %llu crashed: %s\n",
                   static_cast<unsigned long long>(seed), run.error.c_str());
    }
  }

  runner::write_artifacts(out_dir, scenario, base, runs);

  std::vector<metrics::MetricsSummary> all_episodes;
  std::vector<metrics::CycleRecord> all_records;
  for (const auto& run : runs) {
    all_episodes.insert(all_episodes.end(), run.episodes.begin(),
                        run.episodes.end());
    all_records.insert(all_records.end(), run.records.begin(),
                       run.records.end());
  }
  const auto agg = metrics::aggregate_metrics(all_episodes, all_records,
                                              static_cast<int>(runs.size()));
  std::cout << metrics::aggregate_header()
            << metrics::format_aggregate_row(runner::method_name(base.method),
                                             base.safety, agg);
  std::cout << "artifacts written to " << out_dir << "\n";
  return crashed ? 1 : 0;
}

int cmd_plot_data(const std::string& traces_dir, const std::string& out_dir) {
  runner::emit_plot_data(traces_dir, out_dir);
  std::cout << "wrote " << out_dir << "/travel_times.tsv, " << out_dir
            << "/headway_hist.tsv, " << out_dir << "/speed_profiles.tsv\n";
  return 0;
}

/// Re-runs the rule-based safety checks on the trajectory a trace actually
/// realized: for every recorded cycle, the ego states of the following
/// cycles in the same episode are checked against that cycle's recorded
/// obstacle frame.
int cmd_verify(const std::string& trace_path, double lane_width,
               int lane_count) {
  const auto records = trace::read_trace(trace_path);
  RoadGeometry road;
  road.lane_width = lane_width;
  road.lane_count = lane_count;
  road.validate();
  VehicleParams params;  // library-default ego footprint and period
  const double T = params.T;

  struct Tally {
    long checked = 0;
    long collision = 0;
    long ttc = 0;
    long lateral = 0;
    long off_road = 0;
    long unsafe = 0;
    long high_risk = 0;
  };

  Tally total;
  int episode = -1;
  Tally per;
  long episode_first = 0;

  auto flush_episode = [&](long end_index) {
    if (episode < 0) return;
    std::printf(
        "episode %d: cycles %ld, checked %ld, collisions %ld, "
        "ttc violations %ld, lateral violations %ld, off-road %ld, "
        "unsafe %ld, high-risk %ld\n",
        episode, end_index - episode_first, per.checked, per.collision,
        per.ttc, per.lateral, per.off_road, per.unsafe, per.high_risk);
  };

  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].episode != episode) {
      flush_episode(static_cast<long>(i));
      episode = records[i].episode;
      episode_first = static_cast<long>(i);
      per = Tally{};
    }
    // Consecutive same-episode records define the realized trajectory.
    std::size_t span = i;
    while (span + 1 < records.size() &&
           records[span + 1].episode == episode) {
      ++span;
    }
    const int available = static_cast<int>(span - i);  // future states
    const int steps = std::min(30, available);
    if (steps < 1) continue;

    std::vector<VehicleState> trajectory;
    trajectory.reserve(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
      const auto& r = records[i + static_cast<std::size_t>(k)];
      trajectory.push_back({r.ego_x, r.ego_y, r.ego_vx, r.ego_vy});
    }

    std::vector<perception::ObstacleObservation> observations;
    observations.reserve(records[i].obstacles.size());
    for (const auto& o : records[i].obstacles) {
      perception::ObstacleObservation obs;
      obs.id = o.id;
      obs.x = o.x;
      obs.y = o.y;
      obs.length = o.length;
      obs.width = o.width;
      obs.velocity = Vec2(o.vx, o.vy);
      obs.lane_index = road.lane_index_of(o.y);
      observations.push_back(obs);
    }

    safety::SafetyConfig config;
    config.T = T;
    config.horizon = steps * T;
    const auto report = safety::verify(trajectory, observations, road, params,
                                       config);
    ++per.checked;
    ++total.checked;
    bool any_collision = false;
    bool any_ttc = false;
    bool any_lateral = false;
    for (std::size_t g = 0; g < report.collision.size(); ++g) {
      any_collision = any_collision || report.collision[g];
      any_ttc = any_ttc || report.ttc_violation[g];
      any_lateral = any_lateral || report.lateral_violation[g];
    }
    bool any_off_road = false;
    for (const auto flag : report.off_road) {
      any_off_road = any_off_road || flag != 0;
    }
    if (any_collision) ++per.collision, ++total.collision;
    if (any_ttc) ++per.ttc, ++total.ttc;
    if (any_lateral) ++per.lateral, ++total.lateral;
    if (any_off_road) ++per.off_road, ++total.off_road;
    if (report.unsafe) ++per.unsafe, ++total.unsafe;
    if (report.high_risk) ++per.high_risk, ++total.high_risk;
  }
  flush_episode(static_cast<long>(records.size()));

  std::printf(
      "total: records %zu, checked %ld, collisions %ld, ttc violations %ld, "
      "lateral violations %ld, off-road %ld, unsafe %ld, high-risk %ld\n",
      records.size(), total.checked, total.collision, total.ttc,
      total.lateral, total.off_road, total.unsafe, total.high_risk);
  std::printf("verdict: %s\n", total.unsafe > 0 ? "UNSAFE" : "CLEAN");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Trajectory-planning benchmark: seeded closed-loop traffic runs with "
      "reproducible traces, plot-table extraction, and offline safety "
      "re-verification."};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string method = "mpc-ref-init";
  std::string safety = "on";
  std::string seeds_text;
  std::string run_out = "out";
  double v_nominal = 15.0;
  auto* run = app.add_subcommand("run", "Run a scenario over a seed list");
  run->add_option("--scenario", scenario_path, "Scenario JSON file")
      ->required();
  run->add_option("--method", method,
                  "mpc-zero-init, mpc-ref-init, or mpc-fixed-interval");
  run->add_option("--safety", safety, "Safety gate: on or off");
  run->add_option("--seeds", seeds_text,
                  "Seed list, e.g. 1,2,5-8 (default: the scenario seed)");
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--v-nominal", v_nominal, "Ego free-flow target [m/s]");

  std::string traces_dir;
  std::string plot_out = "plots";
  auto* plot = app.add_subcommand(
      "plot-data", "Derive plotting tables from a run output directory");
  plot->add_option("--traces", traces_dir, "Directory holding run artifacts")
      ->required();
  plot->add_option("--out", plot_out, "Output directory");

  std::string trace_path;
  double lane_width = 3.2;
  int lane_count = 4;
  auto* verify = app.add_subcommand(
      "verify", "Re-run the safety checks on a recorded trace");
  verify->add_option("--trace", trace_path, "Trace JSONL file")->required();
  verify->add_option("--lane-width", lane_width, "Road lane width [m]");
  verify->add_option("--lane-count", lane_count, "Road lane count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(scenario_path, method, safety, seeds_text, run_out,
                     v_nominal);
    }
    if (plot->parsed()) {
      return cmd_plot_data(traces_dir, plot_out);
    }
    if (verify->parsed()) {
      return cmd_verify(trace_path, lane_width, lane_count);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
