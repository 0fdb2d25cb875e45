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

#ifndef VISIOPATH_TRACE_HPP
#define VISIOPATH_TRACE_HPP

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include "visiopath/metrics.hpp"

namespace visiopath::trace {

/// One trace line. Keys are emitted in lexicographic order and doubles use
/// the shortest round-trip form, so identical records serialize to identical
/// bytes.
inline std::string to_json_line(const metrics::CycleRecord& r) {
  nlohmann::json j;
  j["applied_ux"] = r.applied_ux;
  j["applied_uy"] = r.applied_uy;
  j["attempts"] = r.attempts;
  j["collision"] = r.collision;
  j["completed"] = r.completed;
  j["continuation_replan"] = r.continuation_replan;
  j["cycle"] = r.cycle;
  j["cycle_iterations"] = r.cycle_iterations;
  j["dangerous"] = r.dangerous;
  j["dist_headway"] = r.dist_headway;
  j["ego_vx"] = r.ego_vx;
  j["ego_vy"] = r.ego_vy;
  j["ego_x"] = r.ego_x;
  j["ego_y"] = r.ego_y;
  j["emergency"] = r.emergency;
  j["episode"] = r.episode;
  j["high_risk"] = r.high_risk;
  nlohmann::json obstacles = nlohmann::json::array();
  for (const auto& o : r.obstacles) {
    obstacles.push_back({o.id, o.x, o.y, o.vx, o.vy, o.length, o.width});
  }
  j["obstacles"] = std::move(obstacles);
  j["reference_rejected"] = r.reference_rejected;
  j["replanned"] = r.replanned;
  j["solve_iterations"] = r.solve_iterations;
  j["time"] = r.time;
  j["time_headway"] = r.time_headway;
  j["triggers"] = r.triggers;
  j["unsafe"] = r.unsafe;
  j["used_reference"] = r.used_reference;
  j["v_command"] = r.v_command;
  j["v_desired"] = r.v_desired;
  return j.dump();
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j,
                                     const char* key, long line_number) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw std::runtime_error("trace line " + std::to_string(line_number) +
                             ": missing key \"" + key + "\"");
  }
  return *it;
}

}  // namespace detail

/// Parses one JSONL line back into a record. `line_number` is used only for
/// diagnostics.
inline metrics::CycleRecord parse_trace_line(const std::string& line,
                                             long line_number = 0) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("trace line " + std::to_string(line_number) +
                             ": " + e.what());
  }
  if (!j.is_object()) {
    throw std::runtime_error("trace line " + std::to_string(line_number) +
                             ": expected a JSON object");
  }
  metrics::CycleRecord r;
  try {
    r.applied_ux = detail::require(j, "applied_ux", line_number).get<double>();
    r.applied_uy = detail::require(j, "applied_uy", line_number).get<double>();
    r.attempts = detail::require(j, "attempts", line_number).get<int>();
    r.collision = detail::require(j, "collision", line_number).get<bool>();
    r.completed = detail::require(j, "completed", line_number).get<bool>();
    r.continuation_replan =
        detail::require(j, "continuation_replan", line_number).get<bool>();
    r.cycle = detail::require(j, "cycle", line_number).get<long>();
    r.cycle_iterations =
        detail::require(j, "cycle_iterations", line_number).get<int>();
    r.dangerous = detail::require(j, "dangerous", line_number).get<bool>();
    r.dist_headway =
        detail::require(j, "dist_headway", line_number).get<double>();
    r.ego_vx = detail::require(j, "ego_vx", line_number).get<double>();
    r.ego_vy = detail::require(j, "ego_vy", line_number).get<double>();
    r.ego_x = detail::require(j, "ego_x", line_number).get<double>();
    r.ego_y = detail::require(j, "ego_y", line_number).get<double>();
    r.emergency = detail::require(j, "emergency", line_number).get<bool>();
    r.episode = detail::require(j, "episode", line_number).get<int>();
    r.high_risk = detail::require(j, "high_risk", line_number).get<bool>();
    const auto& obstacles = detail::require(j, "obstacles", line_number);
    if (!obstacles.is_array()) {
      throw std::runtime_error("trace line " + std::to_string(line_number) +
                               ": \"obstacles\" must be an array");
    }
    for (const auto& entry : obstacles) {
      if (!entry.is_array() || entry.size() != 7) {
        throw std::runtime_error(
            "trace line " + std::to_string(line_number) +
            ": each obstacle must be [id, x, y, vx, vy, length, width]");
      }
      metrics::ObstacleSnapshot o;
      o.id = entry[0].get<int>();
      o.x = entry[1].get<double>();
      o.y = entry[2].get<double>();
      o.vx = entry[3].get<double>();
      o.vy = entry[4].get<double>();
      o.length = entry[5].get<double>();
      o.width = entry[6].get<double>();
      r.obstacles.push_back(o);
    }
    r.reference_rejected =
        detail::require(j, "reference_rejected", line_number).get<bool>();
    r.replanned = detail::require(j, "replanned", line_number).get<bool>();
    r.solve_iterations =
        detail::require(j, "solve_iterations", line_number).get<int>();
    r.time = detail::require(j, "time", line_number).get<double>();
    r.time_headway =
        detail::require(j, "time_headway", line_number).get<double>();
    r.triggers =
        detail::require(j, "triggers", line_number).get<std::string>();
    r.unsafe = detail::require(j, "unsafe", line_number).get<bool>();
    r.used_reference =
        detail::require(j, "used_reference", line_number).get<bool>();
    r.v_command = detail::require(j, "v_command", line_number).get<double>();
    r.v_desired = detail::require(j, "v_desired", line_number).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("trace line " + std::to_string(line_number) +
                             ": " + e.what());
  }
  return r;
}

/// Serializes records as JSONL, one line each.
inline void write_trace(const std::string& path,
                        const std::vector<metrics::CycleRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open trace file for writing: " + path);
  }
  for (const auto& r : records) {
    out << to_json_line(r) << '\n';
  }
  if (!out) {
    throw std::runtime_error("failed while writing trace file: " + path);
  }
}

/// Reads a JSONL trace produced by write_trace. Blank lines are ignored.
inline std::vector<metrics::CycleRecord> read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open trace file: " + path);
  }
  std::vector<metrics::CycleRecord> records;
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    records.push_back(parse_trace_line(line, line_number));
  }
  return records;
}

/// Compact per-episode metrics document. Full per-cycle samples live in the
/// trace; this stores the derived statistics.
inline nlohmann::json metrics_to_json(const metrics::MetricsSummary& m) {
  nlohmann::json j;
  j["collision"] = m.collision;
  j["completed"] = m.completed;
  j["dangerous_incidents"] = m.dangerous_incidents;
  j["distance_headway_samples"] =
      static_cast<long>(m.distance_headway.size());
  j["distance_m"] = m.distance;
  j["end_time_s"] = m.end_time;
  j["episode"] = m.episode;
  j["mean_distance_headway_m"] = m.mean_distance_headway();
  j["mean_speed_mps"] = m.mean_speed;
  j["mean_time_headway_s"] = m.mean_time_headway();
  j["partial"] = m.partial;
  j["start_time_s"] = m.start_time;
  j["time_headway_samples"] = static_cast<long>(m.time_headway.size());
  j["travel_time_s"] = m.travel_time;
  return j;
}

}  // namespace visiopath::trace

#endif  // VISIOPATH_TRACE_HPP
