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

#ifndef VISIOPATH_SCENARIO_HPP
#define VISIOPATH_SCENARIO_HPP

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include "visiopath/sim.hpp"

namespace visiopath::scenario {

/// Raised for structurally valid JSON whose content does not describe a
/// scenario. The message names the offending value by its JSON path.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& source,
                              const std::string& path,
                              const std::string& message) {
  throw ScenarioError(source + ": " + path + ": " + message);
}

inline void expect_object(const nlohmann::json& j, const std::string& source,
                          const std::string& path) {
  if (!j.is_object()) fail(source, path, "expected an object");
}

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& known,
                                const std::string& source,
                                const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    for (const auto& k : known) {
      if (it.key() == k) {
        found = true;
        break;
      }
    }
    if (!found) fail(source, path + "/" + it.key(), "unknown key");
  }
}

inline double number_at(const nlohmann::json& j, const std::string& source,
                        const std::string& path) {
  if (!j.is_number()) fail(source, path, "expected a number");
  return j.get<double>();
}

inline int int_at(const nlohmann::json& j, const std::string& source,
                  const std::string& path) {
  if (!j.is_number_integer()) fail(source, path, "expected an integer");
  return j.get<int>();
}

inline std::string string_at(const nlohmann::json& j,
                             const std::string& source,
                             const std::string& path) {
  if (!j.is_string()) fail(source, path, "expected a string");
  return j.get<std::string>();
}

inline const nlohmann::json* find(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const std::string& source,
                                     const std::string& path) {
  const auto* member = find(j, key);
  if (member == nullptr) {
    fail(source, path, std::string("missing key \"") + key + "\"");
  }
  return *member;
}

inline sim::VehicleType type_from_json(const nlohmann::json& j,
                                       const std::string& source,
                                       const std::string& path) {
  expect_object(j, source, path);
  reject_unknown_keys(j, {"name", "length", "width", "speed_min", "speed_max"},
                      source, path);
  sim::VehicleType t;
  t.name = string_at(require(j, "name", source, path), source, path + "/name");
  t.length = number_at(require(j, "length", source, path), source,
                       path + "/length");
  t.width =
      number_at(require(j, "width", source, path), source, path + "/width");
  t.speed_min = number_at(require(j, "speed_min", source, path), source,
                          path + "/speed_min");
  t.speed_max = number_at(require(j, "speed_max", source, path), source,
                          path + "/speed_max");
  return t;
}

inline sim::DemandEntry demand_from_json(const nlohmann::json& j,
                                         const std::string& source,
                                         const std::string& path) {
  expect_object(j, source, path);
  reject_unknown_keys(j, {"type", "flow"}, source, path);
  sim::DemandEntry d;
  d.type = string_at(require(j, "type", source, path), source, path + "/type");
  d.flow = number_at(require(j, "flow", source, path), source, path + "/flow");
  return d;
}

inline sim::ScriptedVehicle scripted_from_json(const nlohmann::json& j,
                                               const std::string& source,
                                               const std::string& path) {
  expect_object(j, source, path);
  reject_unknown_keys(
      j, {"type", "spawn_time", "x", "lane", "speed", "lane_change"}, source,
      path);
  sim::ScriptedVehicle s;
  s.type = string_at(require(j, "type", source, path), source, path + "/type");
  s.spawn_time = number_at(require(j, "spawn_time", source, path), source,
                           path + "/spawn_time");
  s.x = number_at(require(j, "x", source, path), source, path + "/x");
  s.lane = int_at(require(j, "lane", source, path), source, path + "/lane");
  s.speed =
      number_at(require(j, "speed", source, path), source, path + "/speed");
  if (const auto* lc = find(j, "lane_change")) {
    const std::string lc_path = path + "/lane_change";
    expect_object(*lc, source, lc_path);
    reject_unknown_keys(*lc, {"time", "target_lane", "duration"}, source,
                        lc_path);
    sim::ScriptedLaneChange change;
    change.time = number_at(require(*lc, "time", source, lc_path), source,
                            lc_path + "/time");
    change.target_lane = int_at(require(*lc, "target_lane", source, lc_path),
                                source, lc_path + "/target_lane");
    change.duration = number_at(require(*lc, "duration", source, lc_path),
                                source, lc_path + "/duration");
    s.lane_change = change;
  }
  return s;
}

}  // namespace detail

/// Builds a scenario from parsed JSON. Unknown keys, wrong value types, and
/// inconsistent content raise ScenarioError with a /path/to/value location;
/// `source` names the origin (usually the file) in every message.
inline sim::ScenarioConfig from_json(const nlohmann::json& j,
                                     const std::string& source = "scenario") {
  detail::expect_object(j, source, "/");
  detail::reject_unknown_keys(
      j,
      {"name", "road", "duration", "warmup", "ego_segment", "sensing_range",
       "seed", "types", "demand", "scripted"},
      source, "");

  sim::ScenarioConfig config;
  config.name = detail::string_at(detail::require(j, "name", source, "/"),
                                  source, "/name");

  if (const auto* road = detail::find(j, "road")) {
    detail::expect_object(*road, source, "/road");
    detail::reject_unknown_keys(*road, {"lane_width", "lane_count"}, source,
                                "/road");
    if (const auto* lw = detail::find(*road, "lane_width")) {
      config.road.lane_width = detail::number_at(*lw, source,
                                                 "/road/lane_width");
    }
    if (const auto* lc = detail::find(*road, "lane_count")) {
      config.road.lane_count = detail::int_at(*lc, source, "/road/lane_count");
    }
  }
  if (const auto* v = detail::find(j, "duration")) {
    config.duration = detail::number_at(*v, source, "/duration");
  }
  if (const auto* v = detail::find(j, "warmup")) {
    config.warmup = detail::number_at(*v, source, "/warmup");
  }
  if (const auto* v = detail::find(j, "ego_segment")) {
    config.ego_segment = detail::number_at(*v, source, "/ego_segment");
  }
  if (const auto* v = detail::find(j, "sensing_range")) {
    config.sensing_range = detail::number_at(*v, source, "/sensing_range");
  }
  if (const auto* v = detail::find(j, "seed")) {
    if (!v->is_number_integer() || v->get<long long>() < 0) {
      detail::fail(source, "/seed", "expected a non-negative integer");
    }
    config.seed = v->get<std::uint64_t>();
  }
  if (const auto* v = detail::find(j, "types")) {
    if (!v->is_array()) detail::fail(source, "/types", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      config.types.push_back(detail::type_from_json(
          (*v)[i], source, "/types/" + std::to_string(i)));
    }
  }
  if (const auto* v = detail::find(j, "demand")) {
    if (!v->is_array()) detail::fail(source, "/demand", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      config.demand.push_back(detail::demand_from_json(
          (*v)[i], source, "/demand/" + std::to_string(i)));
    }
  }
  if (const auto* v = detail::find(j, "scripted")) {
    if (!v->is_array()) detail::fail(source, "/scripted", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      config.scripted.push_back(detail::scripted_from_json(
          (*v)[i], source, "/scripted/" + std::to_string(i)));
    }
  }

  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(source + ": " + e.what());
  }
  return config;
}

/// Parses scenario JSON text. Syntax errors keep the parser's line and
/// column diagnostics, prefixed with `source`.
inline sim::ScenarioConfig parse(const std::string& text,
                                 const std::string& source = "scenario") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(source + ": " + e.what());
  }
  return from_json(j, source);
}

/// Loads a scenario file.
inline sim::ScenarioConfig load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ScenarioError("cannot open scenario file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

/// Serializes a scenario so that from_json(to_json(c)) == c.
inline nlohmann::json to_json(const sim::ScenarioConfig& config) {
  nlohmann::json j;
  j["name"] = config.name;
  j["road"] = {{"lane_width", config.road.lane_width},
               {"lane_count", config.road.lane_count}};
  j["duration"] = config.duration;
  j["warmup"] = config.warmup;
  j["ego_segment"] = config.ego_segment;
  j["sensing_range"] = config.sensing_range;
  j["seed"] = config.seed;
  nlohmann::json types = nlohmann::json::array();
  for (const auto& t : config.types) {
    types.push_back({{"name", t.name},
                     {"length", t.length},
                     {"width", t.width},
                     {"speed_min", t.speed_min},
                     {"speed_max", t.speed_max}});
  }
  j["types"] = std::move(types);
  nlohmann::json demand = nlohmann::json::array();
  for (const auto& d : config.demand) {
    demand.push_back({{"type", d.type}, {"flow", d.flow}});
  }
  j["demand"] = std::move(demand);
  nlohmann::json scripted = nlohmann::json::array();
  for (const auto& s : config.scripted) {
    nlohmann::json entry = {{"type", s.type},
                            {"spawn_time", s.spawn_time},
                            {"x", s.x},
                            {"lane", s.lane},
                            {"speed", s.speed}};
    if (s.lane_change) {
      entry["lane_change"] = {{"time", s.lane_change->time},
                              {"target_lane", s.lane_change->target_lane},
                              {"duration", s.lane_change->duration}};
    }
    scripted.push_back(std::move(entry));
  }
  j["scripted"] = std::move(scripted);
  return j;
}

/// Writes a scenario file (two-space indentation, trailing newline).
inline void save(const std::string& path, const sim::ScenarioConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ScenarioError("cannot open scenario file for writing: " + path);
  }
  out << to_json(config).dump(2) << '\n';
  if (!out) {
    throw ScenarioError("failed while writing scenario file: " + path);
  }
}

namespace detail {

inline std::vector<sim::VehicleType> standard_catalog() {
  return {
      {"medium_car", 5.0, 1.8, 13.5, 15.5},
      {"small_car", 4.2, 1.7, 14.5, 16.5},
      {"large_car", 5.6, 1.9, 13.0, 15.0},
      {"small_truck", 8.5, 2.2, 12.0, 13.5},
      {"large_truck", 12.0, 2.4, 11.0, 12.5},
  };
}

inline sim::ScenarioConfig density_preset(const std::string& name,
                                          double cars_medium,
                                          double cars_small,
                                          double cars_large,
                                          double trucks_small,
                                          double trucks_large) {
  sim::ScenarioConfig config;
  config.name = name;
  config.duration = 200.0;
  config.warmup = 50.0;
  config.ego_segment = 2000.0;
  config.sensing_range = 100.0;
  config.seed = 1;
  config.types = standard_catalog();
  config.demand = {
      {"medium_car", cars_medium}, {"small_car", cars_small},
      {"large_car", cars_large},   {"small_truck", trucks_small},
      {"large_truck", trucks_large},
  };
  config.validate();
  return config;
}

}  // namespace detail

/// Four-lane freeway with moderate mixed traffic (3600 veh/hour total).
inline sim::ScenarioConfig medium_density() {
  return detail::density_preset("medium-density", 2400, 600, 400, 150, 50);
}

/// Four-lane freeway near capacity (4530 veh/hour total).
inline sim::ScenarioConfig high_density() {
  return detail::density_preset("high-density", 2800, 800, 600, 250, 80);
}

}  // namespace visiopath::scenario

#endif  // VISIOPATH_SCENARIO_HPP
