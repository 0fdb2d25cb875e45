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

#ifndef VISIOPATH_METRICS_HPP
#define VISIOPATH_METRICS_HPP

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace visiopath::metrics {

/// One observed obstacle as recorded in the trace, enough to re-run the
/// safety layer offline.
struct ObstacleSnapshot {
  int id = -1;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double length = 5.0;
  double width = 1.8;
};

/// Everything one control cycle leaves behind. The trace is a sequence of
/// these; every aggregate statistic is recomputable from them alone.
struct CycleRecord {
  int episode = 0;
  long cycle = 0;     // cycle index within the run
  double time = 0.0;  // cycle start time (s)

  // Ego state at cycle start.
  double ego_x = 0.0;
  double ego_y = 0.0;
  double ego_vx = 0.0;
  double ego_vy = 0.0;

  // Planner outputs.
  double applied_ux = 0.0;
  double applied_uy = 0.0;
  double v_desired = 0.0;
  double v_command = 0.0;
  bool replanned = false;
  bool continuation_replan = false;
  bool emergency = false;
  bool dangerous = false;
  bool unsafe = false;
  bool high_risk = false;
  bool used_reference = false;
  bool reference_rejected = false;
  int attempts = 0;          // solver invocations this cycle
  int solve_iterations = 0;  // iterations of the accepted solve
  int cycle_iterations = 0;  // iterations summed over all invocations
  std::string triggers;      // "init", subset of "c1c2c3c4", or empty

  // Ground-truth context at cycle start.
  double dist_headway = -1.0;  // bumper gap to the lane leader; -1 = none
  double time_headway = -1.0;  // gap / ego speed; -1 = none or nearly stopped
  std::vector<ObstacleSnapshot> obstacles;  // the perception frame

  // Episode events realized by this cycle's motion.
  bool collision = false;  // ego box overlapped another vehicle
  bool completed = false;  // ego crossed the segment end
};

/// Per-episode results in the shape the comparison tables need.
struct MetricsSummary {
  int episode = 0;
  double start_time = 0.0;
  double end_time = 0.0;    // start of the cycle after the last one
  double travel_time = 0.0; // to the segment crossing when completed
  double distance = 0.0;    // longitudinal progress including the final step
  double mean_speed = 0.0;
  std::vector<double> time_headway;      // per-cycle samples (s)
  std::vector<double> distance_headway;  // per-cycle samples (m)
  bool collision = false;
  int dangerous_incidents = 0;  // cycles whose verification was high-risk
  bool completed = false;
  bool partial = false;  // ran out of simulated time: excluded from rates

  double mean_time_headway() const {
    if (time_headway.empty()) return -1.0;
    double sum = 0.0;
    for (const double v : time_headway) sum += v;
    return sum / static_cast<double>(time_headway.size());
  }
  double mean_distance_headway() const {
    if (distance_headway.empty()) return -1.0;
    double sum = 0.0;
    for (const double v : distance_headway) sum += v;
    return sum / static_cast<double>(distance_headway.size());
  }
};

namespace detail {

/// Ego position after the record's own step.
inline double post_step_x(const CycleRecord& r, double T) {
  return r.ego_x + r.ego_vx * T + 0.5 * r.applied_ux * T * T;
}

/// Time into the record's step when the ego crosses x = L. The caller
/// guarantees the crossing happens within this step.
inline double crossing_offset(const CycleRecord& r, double L, double T) {
  const double dx = L - r.ego_x;
  if (dx <= 0.0) return 0.0;
  const double a = r.applied_ux;
  if (std::abs(a) < 1e-12) {
    return r.ego_vx > 0.0 ? dx / r.ego_vx : T;
  }
  const double disc = r.ego_vx * r.ego_vx + 2.0 * a * dx;
  if (disc < 0.0) return T;
  const double s = (-r.ego_vx + std::sqrt(disc)) / a;
  return std::min(std::max(s, 0.0), T);
}

}  // namespace detail

/// Folds the records of ONE episode into its summary. Cycles before the
/// warm-up boundary are ignored. An episode with neither a completion nor a
/// collision event is flagged partial.
inline MetricsSummary collect_metrics(const std::vector<CycleRecord>& records,
                                      double segment_length, double warmup,
                                      double T = 0.1) {
  if (!(segment_length > 0.0) || !(T > 0.0)) {
    throw std::invalid_argument("collect_metrics: non-positive scale");
  }
  MetricsSummary out;
  std::vector<const CycleRecord*> kept;
  for (const auto& r : records) {
    if (r.time >= warmup) kept.push_back(&r);
  }
  if (kept.empty()) {
    out.partial = true;
    return out;
  }

  out.episode = kept.front()->episode;
  out.start_time = kept.front()->time;
  const CycleRecord& last = *kept.back();
  out.end_time = last.time + T;
  out.distance = detail::post_step_x(last, T) - kept.front()->ego_x;

  for (const auto* r : kept) {
    if (r->high_risk) ++out.dangerous_incidents;
    if (r->dist_headway >= 0.0) out.distance_headway.push_back(r->dist_headway);
    if (r->time_headway >= 0.0) out.time_headway.push_back(r->time_headway);
    if (r->collision) out.collision = true;
    if (r->completed) out.completed = true;
  }

  if (out.completed) {
    const double offset = detail::crossing_offset(last, segment_length, T);
    out.travel_time = (last.time + offset) - out.start_time;
    out.mean_speed =
        out.travel_time > 0.0 ? segment_length / out.travel_time : 0.0;
  } else {
    out.travel_time = out.end_time - out.start_time;
    out.mean_speed =
        out.travel_time > 0.0 ? out.distance / out.travel_time : 0.0;
    out.partial = !out.collision;
  }
  return out;
}

/// Cross-seed aggregate in the shape of the comparison tables. Episode
/// statistics cover episodes that reached a terminal event (completion or
/// collision); duration-truncated partials are reported separately. Solver
/// statistics pool every recorded cycle.
struct Aggregate {
  int runs = 0;
  int episodes = 0;  // completed + collided
  int completed = 0;
  int collided = 0;
  int partial = 0;
  double collision_rate = 0.0;       // collided / episodes
  double mean_travel_time = -1.0;    // over completed episodes (s)
  double mean_speed = -1.0;          // over completed episodes (m/s)
  double mean_time_headway = -1.0;   // pooled samples (s)
  double mean_distance_headway = -1.0;  // pooled samples (m)
  double mean_dangerous = -1.0;      // per counted episode
  long total_solves = 0;
  long total_iterations = 0;
  double mean_ddp_iterations = -1.0;
  long replan_cycles = 0;
  long cycles = 0;
};

inline Aggregate aggregate_metrics(
    const std::vector<MetricsSummary>& episodes,
    const std::vector<CycleRecord>& records, int runs) {
  Aggregate agg;
  agg.runs = runs;

  double travel_sum = 0.0;
  double speed_sum = 0.0;
  double th_sum = 0.0;
  long th_count = 0;
  double dh_sum = 0.0;
  long dh_count = 0;
  long dangerous_sum = 0;

  for (const auto& e : episodes) {
    if (e.partial) {
      ++agg.partial;
      continue;
    }
    ++agg.episodes;
    dangerous_sum += e.dangerous_incidents;
    for (const double v : e.time_headway) {
      th_sum += v;
      ++th_count;
    }
    for (const double v : e.distance_headway) {
      dh_sum += v;
      ++dh_count;
    }
    if (e.collision) {
      ++agg.collided;
    } else {
      ++agg.completed;
      travel_sum += e.travel_time;
      speed_sum += e.mean_speed;
    }
  }

  if (agg.episodes > 0) {
    agg.collision_rate =
        static_cast<double>(agg.collided) / static_cast<double>(agg.episodes);
    agg.mean_dangerous = static_cast<double>(dangerous_sum) /
                         static_cast<double>(agg.episodes);
  }
  if (agg.completed > 0) {
    agg.mean_travel_time = travel_sum / static_cast<double>(agg.completed);
    agg.mean_speed = speed_sum / static_cast<double>(agg.completed);
  }
  if (th_count > 0) agg.mean_time_headway = th_sum / static_cast<double>(th_count);
  if (dh_count > 0) {
    agg.mean_distance_headway = dh_sum / static_cast<double>(dh_count);
  }

  for (const auto& r : records) {
    ++agg.cycles;
    agg.total_solves += r.attempts;
    agg.total_iterations += r.cycle_iterations;
    if (r.replanned) ++agg.replan_cycles;
  }
  if (agg.total_solves > 0) {
    agg.mean_ddp_iterations = static_cast<double>(agg.total_iterations) /
                              static_cast<double>(agg.total_solves);
  }
  return agg;
}

namespace detail {

inline std::string fixed(double value, int decimals) {
  if (value < 0.0) return "-";  // undefined sentinel
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace detail

/// Header of the aggregate table (tab separated, one trailing newline).
inline std::string aggregate_header() {
  return "method\tsafety\tseeds\tepisodes\tcompleted\tcollided\tpartial\t"
         "collision_rate\tmean_travel_time_s\tmean_speed_mps\t"
         "mean_time_headway_s\tmean_distance_headway_m\t"
         "mean_dangerous_incidents\ttotal_solves\tmean_ddp_iterations\t"
         "replan_cycles\tcycles\n";
}

/// One table row. Undefined statistics (no qualifying episodes or samples)
/// render as "-". The collision rate keeps three decimals, so 2 of 7
/// episodes prints as 0.286.
inline std::string format_aggregate_row(const std::string& method,
                                        bool safety_on,
                                        const Aggregate& agg) {
  std::string row;
  row += method;
  row += '\t';
  row += safety_on ? "on" : "off";
  row += '\t';
  row += std::to_string(agg.runs);
  row += '\t';
  row += std::to_string(agg.episodes);
  row += '\t';
  row += std::to_string(agg.completed);
  row += '\t';
  row += std::to_string(agg.collided);
  row += '\t';
  row += std::to_string(agg.partial);
  row += '\t';
  row += agg.episodes > 0 ? detail::fixed(agg.collision_rate, 3) : "-";
  row += '\t';
  row += detail::fixed(agg.mean_travel_time, 2);
  row += '\t';
  row += detail::fixed(agg.mean_speed, 2);
  row += '\t';
  row += detail::fixed(agg.mean_time_headway, 3);
  row += '\t';
  row += detail::fixed(agg.mean_distance_headway, 2);
  row += '\t';
  row += detail::fixed(agg.mean_dangerous, 2);
  row += '\t';
  row += std::to_string(agg.total_solves);
  row += '\t';
  row += detail::fixed(agg.mean_ddp_iterations, 2);
  row += '\t';
  row += std::to_string(agg.replan_cycles);
  row += '\t';
  row += std::to_string(agg.cycles);
  row += '\n';
  return row;
}

}  // namespace visiopath::metrics

#endif  // VISIOPATH_METRICS_HPP
