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

#ifndef VISIOPATH_SIM_HPP
#define VISIOPATH_SIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "visiopath/dynamics.hpp"
#include "visiopath/rng.hpp"
#include "visiopath/safety.hpp"
#include "visiopath/types.hpp"

namespace visiopath::sim {

// Surrounding-vehicle behavior constants. The car-following rule is a
// time-gap controller: accelerate toward the desired speed on an open road,
// brake so the bumper gap tracks kJamGap + v * kTimeGap behind a leader. The
// gap gain of 2/s gives a damped response (damping ratio about 0.77), with
// fixed point exactly gap = kJamGap + v * kTimeGap. A kinematic speed
// envelope (never faster than what kBrakeComfort can shed over the gap in
// excess of the jam distance) bounds the approach to slow or stopped
// leaders, so queues compress to the jam gap instead of overshooting.
inline constexpr double kSpeedGain = 1.0;  // 1/s, desired-speed tracking
inline constexpr double kGapGain = 2.0;    // 1/s, time-gap tracking
inline constexpr double kTimeGap = 1.2;    // s, target bumper time gap
inline constexpr double kJamGap = 2.0;     // m, standstill bumper gap
// Envelope deceleration: half the braking limit, so the proportional
// controller's tracking lag stays well inside the remaining authority.
inline constexpr double kBrakeComfort = 3.0;  // m/s^2
inline constexpr double kAccelMin = -6.0;  // m/s^2, traffic braking envelope
inline constexpr double kAccelMax = 3.0;   // m/s^2, traffic acceleration

// Entry and exit management.
inline constexpr double kSpawnClearance = 10.0;     // m, traffic entry gap
inline constexpr double kEgoSpawnClearance = 25.0;  // m, ego entry gap
inline constexpr double kDespawnMargin = 200.0;     // m past the ego segment

/// One catalog entry: the physical footprint and the range the per-vehicle
/// desired speed is drawn from.
struct VehicleType {
  std::string name;
  double length = 5.0;
  double width = 1.8;
  double speed_min = 13.0;  // m/s
  double speed_max = 17.0;  // m/s

  void validate() const {
    if (name.empty()) {
      throw std::invalid_argument("VehicleType: empty name");
    }
    if (!(length > 0.0) || !(width > 0.0)) {
      throw std::invalid_argument("VehicleType: non-positive dimensions");
    }
    if (!(speed_min > 0.0) || !(speed_max >= speed_min)) {
      throw std::invalid_argument("VehicleType: bad desired-speed range");
    }
  }
};

/// Demand-table row: arrivals of one catalog type as a Poisson stream.
struct DemandEntry {
  std::string type;
  double flow = 0.0;  // veh/hour
};

/// A choreographed lane change: at `time` the vehicle starts moving to the
/// center of `target_lane` over `duration` seconds along a smoothstep.
struct ScriptedLaneChange {
  double time = 0.0;
  int target_lane = 0;
  double duration = 2.0;
};

/// A deterministic cast member for constructed scenarios: spawns at a fixed
/// time and place, cruises at a fixed desired speed, and optionally executes
/// one scripted lane change.
struct ScriptedVehicle {
  std::string type;
  double spawn_time = 0.0;
  double x = 0.0;
  int lane = 0;
  double speed = 15.0;
  std::optional<ScriptedLaneChange> lane_change;
};

/// Full scenario description: the road, the demand table and type catalog,
/// scripted vehicles, the ego segment, and the base seed.
struct ScenarioConfig {
  std::string name = "scenario";
  RoadGeometry road;
  double duration = 120.0;  // s of simulated time
  double warmup = 50.0;     // s excluded from metrics; ego enters at its end
  std::vector<VehicleType> types;
  std::vector<DemandEntry> demand;
  std::vector<ScriptedVehicle> scripted;
  double ego_segment = 2000.0;   // m the ego travels per episode
  double sensing_range = 100.0;  // m, longitudinal perception range
  std::uint64_t seed = 1;

  double despawn_x() const { return ego_segment + kDespawnMargin; }

  const VehicleType* find_type(const std::string& type_name) const {
    for (const auto& t : types) {
      if (t.name == type_name) return &t;
    }
    return nullptr;
  }

  void validate() const {
    road.validate();
    if (!(warmup >= 0.0) || !(duration > warmup)) {
      throw std::invalid_argument(
          "ScenarioConfig: need duration > warmup >= 0");
    }
    if (!(ego_segment > 0.0) || !(sensing_range > 0.0)) {
      throw std::invalid_argument(
          "ScenarioConfig: non-positive segment or sensing range");
    }
    for (const auto& t : types) t.validate();
    for (const auto& d : demand) {
      if (!(d.flow >= 0.0)) {
        throw std::invalid_argument("ScenarioConfig: negative flow");
      }
      if (find_type(d.type) == nullptr) {
        throw std::invalid_argument("ScenarioConfig: demand for unknown type " +
                                    d.type);
      }
    }
    for (const auto& s : scripted) {
      if (find_type(s.type) == nullptr) {
        throw std::invalid_argument(
            "ScenarioConfig: scripted vehicle of unknown type " + s.type);
      }
      if (s.lane < 0 || s.lane >= road.lane_count) {
        throw std::invalid_argument("ScenarioConfig: scripted lane off-road");
      }
      if (s.lane_change) {
        const auto& lc = *s.lane_change;
        if (lc.target_lane < 0 || lc.target_lane >= road.lane_count) {
          throw std::invalid_argument(
              "ScenarioConfig: scripted change target off-road");
        }
        if (!(lc.duration > 0.0)) {
          throw std::invalid_argument(
              "ScenarioConfig: non-positive change duration");
        }
      }
      if (!(s.speed >= 0.0)) {
        throw std::invalid_argument("ScenarioConfig: negative scripted speed");
      }
    }
  }
};

/// One vehicle in the world. Fields are flat so the perception observers can
/// consume the record directly.
struct SimVehicle {
  int id = -1;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double length = 5.0;
  double width = 1.8;
  int lane = 0;  // lane the vehicle follows; the target during a change
  double v_desired = 15.0;
  std::string type;

  // Scripted lane-change playback state.
  std::optional<ScriptedLaneChange> script;
  double script_y_from = 0.0;
  bool script_started = false;
  bool script_done = false;

  VehicleState state() const { return {x, y, vx, vy}; }

  safety::BoundingBox box() const {
    return {x, y, 0.5 * length, 0.5 * width};
  }

  /// Whether the lateral footprint touches the given lane; a vehicle
  /// straddling a boundary occupies both neighbors.
  bool occupies(int lane_index, const RoadGeometry& road) const {
    const int lo = road.lane_index_of(y - 0.5 * width);
    const int hi = road.lane_index_of(y + 0.5 * width);
    return lane_index >= lo && lane_index <= hi;
  }
};

/// The complete simulation state on one logical clock. Vehicles are kept in
/// ascending id order (ids are issued monotonically and never reused).
struct WorldState {
  double time = 0.0;
  std::vector<SimVehicle> vehicles;
  int ego_id = -1;
  int next_id = 0;

  // Poisson arrival schedule, one next-arrival time per demand entry; primed
  // on the first spawn_traffic call.
  std::vector<double> next_arrival;
  std::vector<std::uint8_t> scripted_spawned;

  SimVehicle* find(int id) {
    for (auto& v : vehicles) {
      if (v.id == id) return &v;
    }
    return nullptr;
  }
  const SimVehicle* find(int id) const {
    for (const auto& v : vehicles) {
      if (v.id == id) return &v;
    }
    return nullptr;
  }
  SimVehicle* ego() { return ego_id >= 0 ? find(ego_id) : nullptr; }
  const SimVehicle* ego() const {
    return ego_id >= 0 ? find(ego_id) : nullptr;
  }
  bool has_ego() const { return ego() != nullptr; }
};

namespace detail {

/// Number of vehicles whose center sits in the lane.
inline int lane_population(const WorldState& world, int lane,
                           const RoadGeometry& road) {
  int count = 0;
  for (const auto& v : world.vehicles) {
    if (road.lane_index_of(v.y) == lane) ++count;
  }
  return count;
}

/// Distance from the entry point (x = 0) to the nearest rear bumper among
/// vehicles whose footprint touches the lane. Infinite when the lane is
/// clear.
inline double entry_clearance(const WorldState& world, int lane,
                              const RoadGeometry& road) {
  double clearance = std::numeric_limits<double>::infinity();
  for (const auto& v : world.vehicles) {
    if (!v.occupies(lane, road)) continue;
    clearance = std::min(clearance, v.x - 0.5 * v.length);
  }
  return clearance;
}

/// Lanes ordered emptiest first, ties broken by index.
inline std::vector<int> lanes_by_emptiness(const WorldState& world,
                                           const RoadGeometry& road) {
  std::vector<int> lanes(static_cast<std::size_t>(road.lane_count));
  std::iota(lanes.begin(), lanes.end(), 0);
  std::stable_sort(lanes.begin(), lanes.end(), [&](int a, int b) {
    return lane_population(world, a, road) < lane_population(world, b, road);
  });
  return lanes;
}

/// Places one vehicle at the entry in the emptiest lane offering at least
/// the required bumper clearance. Returns the new id, or -1 when every lane
/// is blocked (the caller keeps the arrival queued).
inline int place_at_entry(const ScenarioConfig& config, WorldState& world,
                          const VehicleType& type, double v_desired,
                          double required_clearance) {
  for (const int lane : lanes_by_emptiness(world, config.road)) {
    const double clearance =
        entry_clearance(world, lane, config.road) - 0.5 * type.length;
    if (clearance < required_clearance) continue;
    SimVehicle v;
    v.id = world.next_id++;
    v.x = 0.0;
    v.y = config.road.lane_center(lane);
    v.lane = lane;
    v.length = type.length;
    v.width = type.width;
    v.v_desired = v_desired;
    v.vx = std::min(v_desired,
                    std::max(0.0, (clearance - kJamGap) / kTimeGap));
    v.type = type.name;
    world.vehicles.push_back(std::move(v));
    return world.vehicles.back().id;
  }
  return -1;
}

}  // namespace detail

/// Spawns traffic due by `now`: scripted vehicles at their configured times
/// and demand-table arrivals as independent per-type Poisson streams
/// (exponential inter-arrival times). An arrival that finds every lane
/// blocked stays queued and retries on the next call, so demand is deferred,
/// never dropped. Deterministic for a fixed (config, seed) stream.
inline void spawn_traffic(const ScenarioConfig& config, double now,
                          WorldState& world, Rng& rng) {
  if (!std::isfinite(now)) {
    throw std::invalid_argument("spawn_traffic: non-finite time");
  }

  // Scripted cast members enter unconditionally at their configured spot.
  if (world.scripted_spawned.size() != config.scripted.size()) {
    world.scripted_spawned.assign(config.scripted.size(), 0);
  }
  for (std::size_t i = 0; i < config.scripted.size(); ++i) {
    if (world.scripted_spawned[i] != 0) continue;
    const auto& s = config.scripted[i];
    if (now < s.spawn_time) continue;
    const auto* type = config.find_type(s.type);
    if (type == nullptr) {
      throw std::invalid_argument("spawn_traffic: unknown scripted type");
    }
    SimVehicle v;
    v.id = world.next_id++;
    v.x = s.x;
    v.y = config.road.lane_center(s.lane);
    v.lane = s.lane;
    v.length = type->length;
    v.width = type->width;
    v.vx = s.speed;
    v.v_desired = s.speed;
    v.type = type->name;
    v.script = s.lane_change;
    world.vehicles.push_back(std::move(v));
    world.scripted_spawned[i] = 1;
  }

  // Prime the Poisson schedules on first use.
  if (world.next_arrival.size() != config.demand.size()) {
    world.next_arrival.assign(config.demand.size(),
                              std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < config.demand.size(); ++i) {
      const double rate = config.demand[i].flow / 3600.0;
      if (rate > 0.0) world.next_arrival[i] = now + rng.exponential(rate);
    }
  }

  for (std::size_t i = 0; i < config.demand.size(); ++i) {
    const double rate = config.demand[i].flow / 3600.0;
    if (!(rate > 0.0)) continue;
    const auto* type = config.find_type(config.demand[i].type);
    if (type == nullptr) {
      throw std::invalid_argument("spawn_traffic: unknown demand type");
    }
    while (world.next_arrival[i] <= now) {
      const double v_desired = rng.uniform(type->speed_min, type->speed_max);
      const int id = detail::place_at_entry(config, world, *type, v_desired,
                                            kSpawnClearance);
      if (id < 0) break;  // suppressed: every lane blocked, retry next call
      world.next_arrival[i] += rng.exponential(rate);
    }
  }
}

/// Spawns the ego at the entry with a larger clearance requirement. Returns
/// true when a lane had room. The ego enters at the smaller of the nominal
/// speed and the speed the entry gap supports.
inline bool spawn_ego(const ScenarioConfig& config, WorldState& world,
                      const VehicleParams& params, double v_nominal) {
  VehicleType ego_type;
  ego_type.name = "ego";
  ego_type.length = params.length;
  ego_type.width = params.width;
  ego_type.speed_min = v_nominal;
  ego_type.speed_max = v_nominal;
  const int id = detail::place_at_entry(config, world, ego_type, v_nominal,
                                        kEgoSpawnClearance);
  if (id < 0) return false;
  world.ego_id = id;
  return true;
}

/// Advances every non-ego vehicle by one step of the car-following rule plus
/// scripted lane changes, then retires vehicles past the exit bound.
/// Accelerations are computed against a frozen snapshot, so the update is
/// independent of vehicle order.
inline void advance_traffic(const ScenarioConfig& config, WorldState& world,
                            double T) {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw std::invalid_argument("advance_traffic: T must be positive");
  }
  const auto& road = config.road;

  std::vector<double> accel(world.vehicles.size(), 0.0);
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    const auto& follower = world.vehicles[i];
    if (follower.id == world.ego_id) continue;

    const SimVehicle* leader = nullptr;
    double leader_distance = std::numeric_limits<double>::infinity();
    for (const auto& other : world.vehicles) {
      if (other.id == follower.id) continue;
      if (other.x <= follower.x) continue;
      if (!other.occupies(follower.lane, road)) continue;
      if (other.x - follower.x < leader_distance) {
        leader_distance = other.x - follower.x;
        leader = &other;
      }
    }

    double a = kSpeedGain * (follower.v_desired - follower.vx);
    if (leader != nullptr) {
      const double gap = (leader->x - 0.5 * leader->length) -
                         (follower.x + 0.5 * follower.length);
      const double room = std::max(gap - kJamGap, 0.0);
      a = std::min(a, kGapGain * (room / kTimeGap - follower.vx));
      const double v_allow = std::sqrt(leader->vx * leader->vx +
                                       2.0 * kBrakeComfort * room);
      a = std::min(a, kGapGain * (v_allow - follower.vx));
    }
    accel[i] = std::clamp(a, kAccelMin, kAccelMax);
  }

  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    auto& v = world.vehicles[i];
    if (v.id == world.ego_id) continue;

    const double v0 = v.vx;
    v.vx = std::max(0.0, v0 + accel[i] * T);
    v.x += 0.5 * (v0 + v.vx) * T;  // exact under the velocity clamp

    if (v.script && !v.script_done) {
      const auto& s = *v.script;
      const double t_end = world.time + T;
      if (t_end >= s.time) {
        if (!v.script_started) {
          v.script_started = true;
          v.script_y_from = v.y;
          v.lane = s.target_lane;  // target-lane followers react immediately
        }
        const double progress =
            std::clamp((t_end - s.time) / s.duration, 0.0, 1.0);
        const double y_to = road.lane_center(s.target_lane);
        const double blend = progress * progress * (3.0 - 2.0 * progress);
        v.y = v.script_y_from + (y_to - v.script_y_from) * blend;
        v.vy = (y_to - v.script_y_from) * 6.0 * progress * (1.0 - progress) /
               s.duration;
        if (progress >= 1.0) {
          v.y = y_to;
          v.vy = 0.0;
          v.script_done = true;
        }
      }
    }
  }

  const double exit_x = config.despawn_x();
  world.vehicles.erase(
      std::remove_if(world.vehicles.begin(), world.vehicles.end(),
                     [&](const SimVehicle& v) {
                       return v.id != world.ego_id &&
                              v.x - 0.5 * v.length > exit_x;
                     }),
      world.vehicles.end());
}

/// Applies one planner control to the ego through the shared dynamics. The
/// control must already satisfy the state-dependent box, and the implied
/// one-step speed change must respect the command cap.
inline void actuate_ego(const ScenarioConfig& config, WorldState& world,
                        const ControlInput& u, const VehicleParams& params,
                        double command_cap = 1.0) {
  auto* ego = world.ego();
  if (ego == nullptr) {
    throw std::invalid_argument("actuate_ego: world has no ego");
  }
  const auto bounds =
      dynamics::control_bounds(ego->state(), params, config.road);
  const auto clamped = dynamics::clamp(u, bounds);
  if (std::abs(clamped.ux - u.ux) > 1e-9 ||
      std::abs(clamped.uy - u.uy) > 1e-9) {
    throw std::invalid_argument("actuate_ego: control outside feasible box");
  }
  if (std::abs(u.ux) * params.T > command_cap + 1e-9) {
    throw std::invalid_argument("actuate_ego: speed step exceeds command cap");
  }
  const VehicleState next = dynamics::step(ego->state(), u, params.T);
  ego->x = next.x;
  ego->y = next.y;
  ego->vx = next.vx;
  ego->vy = next.vy;
  ego->lane = config.road.lane_index_of(ego->y);
}

/// Id of a vehicle whose box currently overlaps the ego's (touching counts),
/// or std::nullopt. Realized overlap is what classifies an episode as a
/// collision; predicted overlap only gates planning.
inline std::optional<int> ego_overlap(const WorldState& world) {
  const auto* ego = world.ego();
  if (ego == nullptr) return std::nullopt;
  for (const auto& v : world.vehicles) {
    if (v.id == world.ego_id) continue;
    if (safety::boxes_intersect(ego->box(), v.box())) return v.id;
  }
  return std::nullopt;
}

/// First overlapping non-ego pair, if any: the car-following rule must never
/// create one.
inline std::optional<std::pair<int, int>> traffic_overlap(
    const WorldState& world) {
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    if (world.vehicles[i].id == world.ego_id) continue;
    for (std::size_t j = i + 1; j < world.vehicles.size(); ++j) {
      if (world.vehicles[j].id == world.ego_id) continue;
      if (safety::boxes_intersect(world.vehicles[i].box(),
                                  world.vehicles[j].box())) {
        return std::make_pair(world.vehicles[i].id, world.vehicles[j].id);
      }
    }
  }
  return std::nullopt;
}

/// The ground-truth leader of the ego: nearest vehicle ahead whose footprint
/// touches the ego's lane. Used for headway metrics.
struct LeaderInfo {
  int id = -1;
  double bumper_gap = 0.0;  // edge-to-edge longitudinal gap
  double speed = 0.0;
};

inline std::optional<LeaderInfo> ego_leader(const ScenarioConfig& config,
                                            const WorldState& world) {
  const auto* ego = world.ego();
  if (ego == nullptr) return std::nullopt;
  const int ego_lane = config.road.lane_index_of(ego->y);
  const SimVehicle* best = nullptr;
  for (const auto& v : world.vehicles) {
    if (v.id == world.ego_id) continue;
    if (v.x <= ego->x) continue;
    if (!v.occupies(ego_lane, config.road)) continue;
    if (best == nullptr || v.x < best->x) best = &v;
  }
  if (best == nullptr) return std::nullopt;
  LeaderInfo info;
  info.id = best->id;
  info.bumper_gap =
      (best->x - 0.5 * best->length) - (ego->x + 0.5 * ego->length);
  info.speed = best->vx;
  return info;
}

}  // namespace visiopath::sim

#endif  // VISIOPATH_SIM_HPP
