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

#ifndef VISIOPATH_RUNNER_HPP
#define VISIOPATH_RUNNER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include "visiopath/metrics.hpp"
#include "visiopath/mpc.hpp"
#include "visiopath/perception.hpp"
#include "visiopath/reference.hpp"
#include "visiopath/rng.hpp"
#include "visiopath/scenario.hpp"
#include "visiopath/sim.hpp"
#include "visiopath/trace.hpp"
#include "visiopath/vlm_client.hpp"

namespace visiopath::runner {

/// The benchmark methods. Zero-init and ref-init are event-triggered and
/// differ only in how a fresh solve is initialized; fixed-interval replans
/// every cycle with the reference initializer, isolating the trigger policy.
enum class Method { kZeroInit, kRefInit, kFixedInterval };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kZeroInit:
      return "mpc-zero-init";
    case Method::kRefInit:
      return "mpc-ref-init";
    case Method::kFixedInterval:
      return "mpc-fixed-interval";
  }
  throw std::invalid_argument("method_name: unknown method");
}

inline Method parse_method(const std::string& name) {
  if (name == "mpc-zero-init") return Method::kZeroInit;
  if (name == "mpc-ref-init") return Method::kRefInit;
  if (name == "mpc-fixed-interval") return Method::kFixedInterval;
  throw std::invalid_argument(
      "unknown method \"" + name +
      "\" (expected mpc-zero-init, mpc-ref-init, or mpc-fixed-interval)");
}

/// Per-run knobs on top of the scenario file.
struct RunOptions {
  Method method = Method::kRefInit;
  bool safety = true;        // rule-based gate on the solved plans
  std::uint64_t seed = 1;    // traffic stream seed for this run
  double v_nominal = 15.0;   // ego free-flow target [m/s]
  perception::EndpointConfig endpoint;  // optional external reference source
};

/// One seeded closed-loop run. The solver totals are recomputed from the
/// records, so anything downstream can rebuild them from the trace alone.
struct RunResult {
  std::uint64_t seed = 0;
  std::vector<metrics::CycleRecord> records;
  std::vector<metrics::MetricsSummary> episodes;
  long total_solves = 0;
  long total_iterations = 0;
  long replans = 0;
  bool crashed = false;
  std::string error;
};

/// Planner configuration for a scenario and option set: library defaults
/// with the scenario road, the requested speed target, and the method's
/// trigger and initializer selections.
inline mpc::MpcConfig planner_config(const sim::ScenarioConfig& scenario,
                                     const RunOptions& opt) {
  mpc::MpcConfig cfg;
  cfg.road = scenario.road;
  cfg.speed.v_nominal = opt.v_nominal;
  cfg.safety_gate = opt.safety;
  cfg.fixed_interval = opt.method == Method::kFixedInterval;
  cfg.initializer = opt.method == Method::kZeroInit
                        ? mpc::MpcConfig::Initializer::kZero
                        : mpc::MpcConfig::Initializer::kReference;
  cfg.validate();
  return cfg;
}

/// Reference provider backed by an external endpoint. Each replan issues one
/// request; a payload with a "waypoints" array of {t, x_m, y_m} points is
/// used directly, and any transport or schema failure falls back to the
/// built-in gap-seeking generator, so planning never stalls on the network.
inline mpc::Coordinator::ReferenceProvider endpoint_reference_provider(
    const perception::EndpointConfig& endpoint, const mpc::MpcConfig& cfg,
    double v_nominal) {
  auto fetch = perception::make_http_fetch(endpoint);
  const RoadGeometry road = cfg.road;
  const VehicleParams params = cfg.params;
  const int K = cfg.K;
  return [fetch, road, params, K, v_nominal](
             const VehicleState& ego,
             const perception::ObservationSet& observations)
             -> std::optional<std::vector<reference::Waypoint>> {
    try {
      const std::string raw = fetch(0);
      const auto j = nlohmann::json::parse(raw);
      const auto it = j.find("waypoints");
      if (it != j.end() && it->is_array() && !it->empty()) {
        std::vector<reference::Waypoint> points;
        points.reserve(it->size());
        for (const auto& w : *it) {
          reference::Waypoint p;
          p.t = w.at("t").get<double>();
          p.x = w.at("x_m").get<double>();
          p.y = w.at("y_m").get<double>();
          points.push_back(p);
        }
        return points;
      }
    } catch (const std::exception&) {
      // Fall through to the built-in generator.
    }
    return reference::generate(ego, observations.observations, road, params,
                               v_nominal, K)
        .waypoints;
  };
}

namespace detail {

inline std::string trigger_string(const mpc::CycleResult& r) {
  if (!r.replanned) return "";
  if (r.continuation_replan) return "continuation";
  if (r.decision.first_cycle) return "init";
  std::string s;
  if (r.decision.c1_horizon) s += "c1";
  if (r.decision.c2_count) s += "c2";
  if (r.decision.c3_deviation) s += "c3";
  if (r.decision.c4_lane) s += "c4";
  if (s.empty()) s = "fixed";  // fixed-interval replans without criteria
  return s;
}

}  // namespace detail

/// Runs one seeded scenario closed loop: Poisson traffic and scripted cast,
/// ego episodes back to back from the end of the warm-up, one planner cycle
/// per control period, realized-overlap collision classification. A thrown
/// error ends the run with crashed set and everything recorded so far kept.
inline RunResult run_scenario(const sim::ScenarioConfig& scenario,
                              const RunOptions& opt) {
  scenario.validate();
  const mpc::MpcConfig cfg = planner_config(scenario, opt);
  const double T = cfg.params.T;

  mpc::Coordinator::ReferenceProvider provider;
  if (opt.method != Method::kZeroInit && opt.endpoint.configured()) {
    provider = endpoint_reference_provider(opt.endpoint, cfg, opt.v_nominal);
  }

  RunResult result;
  result.seed = opt.seed;

  Rng rng(opt.seed);
  sim::WorldState world;
  std::optional<mpc::Coordinator> coordinator;
  int episode = 0;
  std::size_t episode_start = 0;

  const long steps = std::lround(scenario.duration / T);

  auto close_episode = [&]() {
    const std::vector<metrics::CycleRecord> slice(
        result.records.begin() +
            static_cast<std::ptrdiff_t>(episode_start),
        result.records.end());
    result.episodes.push_back(metrics::collect_metrics(
        slice, scenario.ego_segment, scenario.warmup, T));
    world.vehicles.erase(
        std::remove_if(world.vehicles.begin(), world.vehicles.end(),
                       [&](const sim::SimVehicle& v) {
                         return v.id == world.ego_id;
                       }),
        world.vehicles.end());
    world.ego_id = -1;
    coordinator.reset();
  };

  try {
    for (long step = 0; step < steps; ++step) {
      const double now = static_cast<double>(step) * T;
      world.time = now;

      sim::spawn_traffic(scenario, now, world, rng);
      if (now >= scenario.warmup && !world.has_ego()) {
        if (sim::spawn_ego(scenario, world, cfg.params, opt.v_nominal)) {
          ++episode;
          episode_start = result.records.size();
          coordinator.emplace(cfg, provider);
        }
      }

      const bool active = world.has_ego();
      if (active) {
        const sim::SimVehicle& ego = *world.ego();
        const VehicleState ego_state = ego.state();
        const auto frame = perception::observe_ground_truth(
            world.vehicles, world.ego_id, scenario.road,
            scenario.sensing_range, now);
        const auto leader = sim::ego_leader(scenario, world);

        const auto res = coordinator->cycle(now, ego_state, frame);

        metrics::CycleRecord rec;
        rec.episode = episode;
        rec.cycle = step;
        rec.time = now;
        rec.ego_x = ego_state.x;
        rec.ego_y = ego_state.y;
        rec.ego_vx = ego_state.vx;
        rec.ego_vy = ego_state.vy;
        rec.applied_ux = res.applied.ux;
        rec.applied_uy = res.applied.uy;
        rec.v_desired = res.v_desired;
        rec.v_command = res.v_command;
        rec.replanned = res.replanned;
        rec.continuation_replan = res.continuation_replan;
        rec.emergency = res.emergency;
        rec.dangerous = res.dangerous;
        rec.unsafe = res.report.unsafe;
        rec.high_risk = res.report.high_risk;
        rec.used_reference = res.used_reference;
        rec.reference_rejected = res.reference_rejected;
        rec.attempts = res.attempts;
        rec.solve_iterations = res.solve_iterations;
        rec.cycle_iterations = res.cycle_iterations;
        rec.triggers = detail::trigger_string(res);
        if (leader) {
          rec.dist_headway = leader->bumper_gap;
          rec.time_headway =
              ego_state.vx > 0.1 ? leader->bumper_gap / ego_state.vx : -1.0;
        }
        rec.obstacles.reserve(frame.observations.size());
        for (const auto& o : frame.observations) {
          metrics::ObstacleSnapshot snap;
          snap.id = o.id;
          snap.x = o.x;
          snap.y = o.y;
          snap.vx = o.velocity.x();
          snap.vy = o.velocity.y();
          snap.length = o.length;
          snap.width = o.width;
          rec.obstacles.push_back(snap);
        }
        result.records.push_back(std::move(rec));

        sim::actuate_ego(scenario, world, res.applied, cfg.params,
                         cfg.speed.command_delta_limit);
      }

      sim::advance_traffic(scenario, world, T);

      if (active) {
        auto& rec = result.records.back();
        if (sim::ego_overlap(world)) rec.collision = true;
        const auto* ego = world.ego();
        if (ego != nullptr && ego->x >= scenario.ego_segment) {
          rec.completed = true;
        }
        if (rec.collision || rec.completed) close_episode();
      }
      world.time = static_cast<double>(step + 1) * T;
    }
    if (world.has_ego() && result.records.size() > episode_start) {
      close_episode();  // duration ran out mid-episode: partial
    }
  } catch (const std::exception& e) {
    result.crashed = true;
    result.error = e.what();
  }

  for (const auto& r : result.records) {
    result.total_solves += r.attempts;
    result.total_iterations += r.cycle_iterations;
    if (r.replanned) ++result.replans;
  }
  return result;
}

/// Per-run metrics document: run totals plus one entry per episode.
inline nlohmann::json run_metrics_json(const RunResult& run) {
  nlohmann::json j;
  j["crashed"] = run.crashed;
  if (run.crashed) j["error"] = run.error;
  nlohmann::json episodes = nlohmann::json::array();
  for (const auto& e : run.episodes) {
    episodes.push_back(trace::metrics_to_json(e));
  }
  j["episodes"] = std::move(episodes);
  j["replans"] = run.replans;
  j["seed"] = run.seed;
  j["total_iterations"] = run.total_iterations;
  j["total_solves"] = run.total_solves;
  return j;
}

/// Writes the artifacts of one invocation: a JSONL trace and a metrics
/// document per seed, the aggregate table over all seeds, and a manifest.
/// Content is a pure function of (scenario, options, seeds), so two
/// identical invocations produce byte-identical files.
inline void write_artifacts(const std::string& out_dir,
                            const sim::ScenarioConfig& scenario,
                            const RunOptions& base_options,
                            const std::vector<RunResult>& runs) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<metrics::MetricsSummary> all_episodes;
  std::vector<metrics::CycleRecord> all_records;
  nlohmann::json seeds = nlohmann::json::array();
  nlohmann::json files = nlohmann::json::array();

  for (const auto& run : runs) {
    const std::string trace_name =
        "trace_seed" + std::to_string(run.seed) + ".jsonl";
    const std::string metrics_name =
        "metrics_seed" + std::to_string(run.seed) + ".json";
    trace::write_trace((fs::path(out_dir) / trace_name).string(),
                       run.records);
    std::ofstream metrics_out(fs::path(out_dir) / metrics_name,
                              std::ios::binary);
    if (!metrics_out) {
      throw std::runtime_error("cannot write metrics file in " + out_dir);
    }
    metrics_out << run_metrics_json(run).dump(2) << '\n';

    seeds.push_back(run.seed);
    files.push_back(trace_name);
    files.push_back(metrics_name);
    all_episodes.insert(all_episodes.end(), run.episodes.begin(),
                        run.episodes.end());
    all_records.insert(all_records.end(), run.records.begin(),
                       run.records.end());
  }

  const auto agg = metrics::aggregate_metrics(all_episodes, all_records,
                                              static_cast<int>(runs.size()));
  std::ofstream table(fs::path(out_dir) / "aggregate.tsv", std::ios::binary);
  if (!table) {
    throw std::runtime_error("cannot write aggregate table in " + out_dir);
  }
  table << metrics::aggregate_header()
        << metrics::format_aggregate_row(method_name(base_options.method),
                                         base_options.safety, agg);

  nlohmann::json manifest;
  manifest["files"] = std::move(files);
  manifest["method"] = method_name(base_options.method);
  manifest["safety"] = base_options.safety ? "on" : "off";
  manifest["scenario"] = scenario.name;
  manifest["seeds"] = std::move(seeds);
  manifest["v_nominal"] = base_options.v_nominal;
  std::ofstream mf(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!mf) {
    throw std::runtime_error("cannot write manifest in " + out_dir);
  }
  mf << manifest.dump(2) << '\n';
}

namespace detail {

inline std::vector<std::filesystem::path> sorted_matches(
    const std::string& dir, const std::string& prefix,
    const std::string& suffix) {
  namespace fs = std::filesystem;
  std::vector<fs::path> out;
  if (!fs::exists(dir)) {
    throw std::runtime_error("no such directory: " + dir);
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > prefix.size() + suffix.size() &&
        name.compare(0, prefix.size(), prefix) == 0 &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) ==
            0) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string seed_label(const std::filesystem::path& path,
                              const std::string& prefix,
                              const std::string& suffix) {
  const std::string name = path.filename().string();
  return name.substr(prefix.size(),
                     name.size() - prefix.size() - suffix.size());
}

}  // namespace detail

/// Derives the plotting tables from a run output directory: per-episode
/// travel times (from the metrics documents), a time-headway histogram with
/// quarter-second bins, and per-cycle speed profiles (from the traces).
/// Empty inputs still produce the files with headers only.
inline void emit_plot_data(const std::string& traces_dir,
                           const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  // Travel times per terminal episode.
  std::ofstream travel(fs::path(out_dir) / "travel_times.tsv",
                       std::ios::binary);
  if (!travel) {
    throw std::runtime_error("cannot write travel_times.tsv in " + out_dir);
  }
  travel << "seed\tepisode\ttravel_time_s\tcompleted\n";
  for (const auto& path :
       detail::sorted_matches(traces_dir, "metrics_seed", ".json")) {
    std::ifstream in(path, std::ios::binary);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path.string() + ": " + e.what());
    }
    const std::string seed = detail::seed_label(path, "metrics_seed", ".json");
    for (const auto& e : j.at("episodes")) {
      if (e.at("partial").get<bool>()) continue;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.3f",
                    e.at("travel_time_s").get<double>());
      travel << seed << '\t' << e.at("episode").get<int>() << '\t' << buf
             << '\t' << (e.at("completed").get<bool>() ? 1 : 0) << '\n';
    }
  }

  // Headway histogram and speed profiles from the traces.
  constexpr double kBinWidth = 0.25;
  constexpr int kBins = 40;  // 0 s to 10 s, plus one overflow row
  std::vector<long> counts(kBins + 1, 0);

  std::ofstream speeds(fs::path(out_dir) / "speed_profiles.tsv",
                       std::ios::binary);
  if (!speeds) {
    throw std::runtime_error("cannot write speed_profiles.tsv in " + out_dir);
  }
  speeds << "seed\tepisode\ttime_s\tego_vx_mps\n";
  for (const auto& path :
       detail::sorted_matches(traces_dir, "trace_seed", ".jsonl")) {
    const auto records = trace::read_trace(path.string());
    const std::string seed = detail::seed_label(path, "trace_seed", ".jsonl");
    for (const auto& r : records) {
      if (r.time_headway >= 0.0) {
        const int bin = r.time_headway >= kBinWidth * kBins
                            ? kBins
                            : static_cast<int>(r.time_headway / kBinWidth);
        ++counts[static_cast<std::size_t>(bin)];
      }
      char time_buf[64];
      char speed_buf[64];
      std::snprintf(time_buf, sizeof(time_buf), "%.3f", r.time);
      std::snprintf(speed_buf, sizeof(speed_buf), "%.6f", r.ego_vx);
      speeds << seed << '\t' << r.episode << '\t' << time_buf << '\t'
             << speed_buf << '\n';
    }
  }

  std::ofstream hist(fs::path(out_dir) / "headway_hist.tsv",
                     std::ios::binary);
  if (!hist) {
    throw std::runtime_error("cannot write headway_hist.tsv in " + out_dir);
  }
  hist << "bin_low_s\tbin_high_s\tcount\n";
  for (int b = 0; b < kBins; ++b) {
    char low[32];
    char high[32];
    std::snprintf(low, sizeof(low), "%.2f", kBinWidth * b);
    std::snprintf(high, sizeof(high), "%.2f", kBinWidth * (b + 1));
    hist << low << '\t' << high << '\t'
         << counts[static_cast<std::size_t>(b)] << '\n';
  }
  hist << "10.00\tinf\t" << counts[static_cast<std::size_t>(kBins)] << '\n';
}

}  // namespace visiopath::runner

#endif  // VISIOPATH_RUNNER_HPP
