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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "visiopath/rng.hpp"
#include "visiopath/types.hpp"

namespace visiopath::perception {

/// Hard cap on the number of obstacles reported per frame.
inline constexpr int kMaxObservations = 15;

/// One surrounding vehicle as the planner sees it: center position, box
/// dimensions, estimated velocity, and the lane it currently occupies.
struct ObstacleObservation {
  int id = -1;
  double x = 0.0;
  double y = 0.0;
  double length = 5.0;
  double width = 1.8;
  Vec2 velocity = Vec2::Zero();
  int lane_index = 0;
  bool velocity_cold_start = false;  // first sighting, no motion history yet

  void validate(const RoadGeometry& road) const {
    if (!(length > 0.0) || !(width > 0.0)) {
      throw std::invalid_argument("ObstacleObservation: non-positive size");
    }
    if (lane_index < 0 || lane_index >= road.lane_count) {
      throw std::invalid_argument("ObstacleObservation: lane out of range");
    }
    if (!std::isfinite(x) || !std::isfinite(y) ||
        !velocity.allFinite()) {
      throw std::invalid_argument("ObstacleObservation: non-finite value");
    }
  }
};

/// A timestamped frame of observations.
struct ObservationSet {
  double timestamp = 0.0;
  std::vector<ObstacleObservation> observations;

  void validate(const RoadGeometry& road) const {
    if (static_cast<int>(observations.size()) > kMaxObservations) {
      throw std::invalid_argument("ObservationSet: too many observations");
    }
    for (const auto& o : observations) o.validate(road);
  }
};

/// Two-sample velocity estimate from consecutive center positions.
inline Vec2 estimate_velocity(const Vec2& p_now, const Vec2& p_prev,
                              double T) {
  if (!(T > 0.0)) {
    throw std::invalid_argument("estimate_velocity: T must be positive");
  }
  return (p_now - p_prev) / T;
}

/// Velocity of a track against its previous frame; an id with no history is
/// a cold start and reports zero velocity.
inline std::pair<Vec2, bool> track_velocity(const ObservationSet* previous,
                                            int id, const Vec2& p_now,
                                            double T) {
  if (previous != nullptr) {
    for (const auto& o : previous->observations) {
      if (o.id == id) {
        return {estimate_velocity(p_now, Vec2(o.x, o.y), T), false};
      }
    }
  }
  return {Vec2::Zero(), true};
}

/// Exact observations of every non-ego vehicle within the sensing range,
/// nearest first by longitudinal distance, capped at kMaxObservations.
///
/// VehicleRange is any iterable of objects exposing the public fields
/// id, x, y, vx, vy, length, width; the simulator's vehicle record and the
/// test mocks both qualify.
template <class VehicleRange>
ObservationSet observe_ground_truth(const VehicleRange& vehicles, int ego_id,
                                    const RoadGeometry& road,
                                    double sensing_range, double timestamp) {
  const auto* ego = [&]() -> decltype(&*std::begin(vehicles)) {
    for (const auto& v : vehicles) {
      if (v.id == ego_id) return &v;
    }
    return nullptr;
  }();
  if (ego == nullptr) {
    throw std::invalid_argument("observe_ground_truth: unknown ego id");
  }

  ObservationSet set;
  set.timestamp = timestamp;
  for (const auto& v : vehicles) {
    if (v.id == ego_id) continue;
    if (std::abs(v.x - ego->x) > sensing_range) continue;
    ObstacleObservation o;
    o.id = v.id;
    o.x = v.x;
    o.y = v.y;
    o.length = v.length;
    o.width = v.width;
    o.velocity = Vec2(v.vx, v.vy);
    o.lane_index = road.lane_index_of(v.y);
    set.observations.push_back(o);
  }
  const double ego_x = ego->x;
  std::sort(set.observations.begin(), set.observations.end(),
            [ego_x](const ObstacleObservation& a, const ObstacleObservation& b) {
              const double da = std::abs(a.x - ego_x);
              const double db = std::abs(b.x - ego_x);
              if (da != db) return da < db;
              return a.id < b.id;
            });
  if (static_cast<int>(set.observations.size()) > kMaxObservations) {
    set.observations.resize(kMaxObservations);
  }
  return set;
}

/// Ground truth with zero-mean Gaussian error on positions and dimensions,
/// deterministic for a fixed seed. Velocities are re-estimated from the
/// previous frame's noisy positions rather than copied from the world, so
/// they carry the same error model the planner would face.
template <class VehicleRange>
ObservationSet observe_noisy(const VehicleRange& vehicles, int ego_id,
                             const RoadGeometry& road, double sensing_range,
                             double timestamp, std::uint64_t seed,
                             double sigma_pos, double sigma_dim,
                             const ObservationSet* previous, double T) {
  if (sigma_pos < 0.0 || sigma_dim < 0.0) {
    throw std::invalid_argument("observe_noisy: negative sigma");
  }
  ObservationSet set =
      observe_ground_truth(vehicles, ego_id, road, sensing_range, timestamp);
  Rng rng(seed);
  for (auto& o : set.observations) {
    o.x += rng.normal(0.0, sigma_pos);
    o.y += rng.normal(0.0, sigma_pos);
    o.length = std::max(0.1, o.length + rng.normal(0.0, sigma_dim));
    o.width = std::max(0.1, o.width + rng.normal(0.0, sigma_dim));
    o.lane_index = road.lane_index_of(o.y);
    const auto [v, cold] = track_velocity(previous, o.id, Vec2(o.x, o.y), T);
    o.velocity = v;
    o.velocity_cold_start = cold;
  }
  return set;
}

// ---------------------------------------------------------------------------
// External-model adapter
//
// Payload schema (one frame):
//   {"vehicles": [{"id": <int>, "x_m": <num>, "y_m": <num>,
//                  "length_m": <num>, "width_m": <num>,
//                  "confidence": <num in [0,1]>}, ...]}
// Entries are ranked by confidence; at most kMaxObservations survive.
// ---------------------------------------------------------------------------

/// Parses one payload into observations. Returns an error description on any
/// schema violation, or std::nullopt on success. Velocities are filled from
/// the previous frame by track matching.
inline std::optional<std::string> parse_external_payload(
    const std::string& raw, const RoadGeometry& road, double T,
    const ObservationSet* previous, std::vector<ObstacleObservation>* out) {
  nlohmann::json doc = nlohmann::json::parse(raw, nullptr, false);
  if (doc.is_discarded()) return "payload is not valid JSON";
  if (!doc.is_object() || !doc.contains("vehicles")) {
    return "missing required key: vehicles";
  }
  const auto& vehicles = doc["vehicles"];
  if (!vehicles.is_array()) return "vehicles must be an array";

  struct Entry {
    ObstacleObservation obs;
    double confidence;
  };
  std::vector<Entry> entries;
  for (const auto& item : vehicles) {
    if (!item.is_object()) return "vehicle entry must be an object";
    for (const char* key :
         {"id", "x_m", "y_m", "length_m", "width_m", "confidence"}) {
      if (!item.contains(key)) {
        return std::string("missing required key: ") + key;
      }
      if (!item[key].is_number()) {
        return std::string("non-numeric value for key: ") + key;
      }
    }
    if (!item["id"].is_number_integer()) return "id must be an integer";
    Entry e;
    e.obs.id = item["id"].get<int>();
    e.obs.x = item["x_m"].get<double>();
    e.obs.y = item["y_m"].get<double>();
    e.obs.length = item["length_m"].get<double>();
    e.obs.width = item["width_m"].get<double>();
    e.confidence = item["confidence"].get<double>();
    if (!(e.obs.length > 0.0) || !(e.obs.width > 0.0)) {
      return "non-positive vehicle dimensions";
    }
    if (!(e.confidence >= 0.0) || !(e.confidence <= 1.0)) {
      return "confidence outside [0, 1]";
    }
    if (!std::isfinite(e.obs.x) || !std::isfinite(e.obs.y)) {
      return "non-finite position";
    }
    e.obs.lane_index = road.lane_index_of(e.obs.y);
    const auto [v, cold] =
        track_velocity(previous, e.obs.id, Vec2(e.obs.x, e.obs.y), T);
    e.obs.velocity = v;
    e.obs.velocity_cold_start = cold;
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) {
                     return a.confidence > b.confidence;
                   });
  if (static_cast<int>(entries.size()) > kMaxObservations) {
    entries.resize(kMaxObservations);
  }
  out->clear();
  for (auto& e : entries) out->push_back(std::move(e.obs));
  return std::nullopt;
}

/// Drives an external structured-output endpoint with a bounded re-prompt
/// loop. A malformed payload triggers one re-prompt; two consecutive
/// failures fall back to the previous frame and set the fallback flag.
class ExternalAdapter {
 public:
  /// The transport: performs one request (the argument is the attempt index,
  /// starting at 0 so the prompt can be adjusted on re-prompts) and returns
  /// the raw payload text. Throwing counts as a failed attempt.
  using FetchFn = std::function<std::string(int)>;

  ExternalAdapter(FetchFn fetch, RoadGeometry road, double T,
                  int max_attempts = 2)
      : fetch_(std::move(fetch)), road_(road), T_(T),
        max_attempts_(max_attempts) {
    if (!fetch_) throw std::invalid_argument("ExternalAdapter: null fetch");
    if (max_attempts_ < 1) {
      throw std::invalid_argument("ExternalAdapter: max_attempts < 1");
    }
    if (!(T_ > 0.0)) throw std::invalid_argument("ExternalAdapter: T <= 0");
  }

  /// Fetches the next frame. On total failure the previous frame is reused
  /// (empty on a cold start) and fallback_used() reports true.
  ObservationSet next(double timestamp) {
    fallback_used_ = false;
    last_error_.clear();
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
      std::string raw;
      try {
        raw = fetch_(attempt);
      } catch (const std::exception& ex) {
        last_error_ = ex.what();
        continue;
      }
      std::vector<ObstacleObservation> parsed;
      const auto err =
          parse_external_payload(raw, road_, T_, &previous_, &parsed);
      if (!err) {
        previous_.timestamp = timestamp;
        previous_.observations = std::move(parsed);
        return previous_;
      }
      last_error_ = *err;
    }
    fallback_used_ = true;
    ObservationSet out = previous_;
    out.timestamp = timestamp;
    return out;
  }

  bool fallback_used() const { return fallback_used_; }
  const std::string& last_error() const { return last_error_; }

 private:
  FetchFn fetch_;
  RoadGeometry road_;
  double T_;
  int max_attempts_;
  ObservationSet previous_;
  bool fallback_used_ = false;
  std::string last_error_;
};

}  // namespace visiopath::perception
