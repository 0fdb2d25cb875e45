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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "visiopath/rng.hpp"
#include "visiopath/scenario.hpp"
#include "visiopath/sim.hpp"
#include "visiopath/types.hpp"

using namespace visiopath;

namespace {

constexpr double kT = 0.1;

sim::ScenarioConfig empty_config(int lanes = 4) {
  sim::ScenarioConfig cfg;
  cfg.name = "test";
  cfg.road.lane_count = lanes;
  cfg.duration = 100.0;
  cfg.warmup = 10.0;
  cfg.types = {{"car", 5.0, 1.8, 10.0, 16.0}};
  return cfg;
}

sim::SimVehicle make_vehicle(int id, double x, int lane,
                             const sim::ScenarioConfig& cfg, double speed,
                             double v_desired) {
  sim::SimVehicle v;
  v.id = id;
  v.x = x;
  v.y = cfg.road.lane_center(lane);
  v.lane = lane;
  v.vx = speed;
  v.v_desired = v_desired;
  v.type = "car";
  return v;
}

/// Advances a world holding only background traffic for `seconds`.
void advance_for(const sim::ScenarioConfig& cfg, sim::WorldState& world,
                 double seconds) {
  const long steps = std::lround(seconds / kT);
  for (long s = 0; s < steps; ++s) {
    sim::advance_traffic(cfg, world, kT);
    world.time += kT;
  }
}

}  // namespace

TEST_CASE("poisson demand reproduces the configured hourly flows",
          "[sim]") {
  // Clearing the world after every call removes entry suppression, so the
  // spawn count measures the arrival process alone.
  auto cfg = scenario::medium_density();
  sim::WorldState world;
  Rng rng(123);
  std::map<std::string, long> spawned;
  const long steps = 360000;  // ten hours
  for (long s = 0; s < steps; ++s) {
    const double now = static_cast<double>(s) * kT;
    world.time = now;
    sim::spawn_traffic(cfg, now, world, rng);
    for (const auto& v : world.vehicles) ++spawned[v.type];
    world.vehicles.clear();
  }
  long total = 0;
  for (const auto& d : cfg.demand) {
    const double expected = d.flow * 10.0;  // veh/hour over ten hours
    const double got = static_cast<double>(spawned[d.type]);
    // A Poisson count with mean n has standard deviation sqrt(n); allow
    // 4.5 sigma so the check fails on rate bugs, not on ordinary variance.
    const double band = std::max(0.05 * expected, 4.5 * std::sqrt(expected));
    INFO(d.type << ": expected " << expected << ", spawned " << got);
    CHECK(std::abs(got - expected) <= band);
    total += spawned[d.type];
  }
  CHECK(std::abs(static_cast<double>(total) - 36000.0) <=
        4.5 * std::sqrt(36000.0));
}

TEST_CASE("zero demand spawns nothing", "[sim]") {
  auto cfg = empty_config();
  cfg.demand = {{"car", 0.0}};
  sim::WorldState world;
  Rng rng(1);
  for (long s = 0; s < 1000; ++s) {
    sim::spawn_traffic(cfg, static_cast<double>(s) * kT, world, rng);
  }
  CHECK(world.vehicles.empty());
}

TEST_CASE("identical seeds give bitwise identical worlds", "[sim]") {
  auto cfg = scenario::high_density();
  auto run = [&](std::uint64_t seed) {
    sim::WorldState world;
    Rng rng(seed);
    for (long s = 0; s < 600; ++s) {
      const double now = static_cast<double>(s) * kT;
      world.time = now;
      sim::spawn_traffic(cfg, now, world, rng);
      sim::advance_traffic(cfg, world, kT);
    }
    return world;
  };
  const auto a = run(42);
  const auto b = run(42);
  REQUIRE(a.vehicles.size() == b.vehicles.size());
  REQUIRE_FALSE(a.vehicles.empty());
  for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
    CHECK(a.vehicles[i].id == b.vehicles[i].id);
    CHECK(a.vehicles[i].x == b.vehicles[i].x);
    CHECK(a.vehicles[i].y == b.vehicles[i].y);
    CHECK(a.vehicles[i].vx == b.vehicles[i].vx);
    CHECK(a.vehicles[i].v_desired == b.vehicles[i].v_desired);
    CHECK(a.vehicles[i].type == b.vehicles[i].type);
  }
  const auto c = run(43);
  bool changed = c.vehicles.size() != a.vehicles.size();
  for (std::size_t i = 0; !changed && i < a.vehicles.size(); ++i) {
    changed = c.vehicles[i].x != a.vehicles[i].x;
  }
  CHECK(changed);
}

TEST_CASE("free road speed approaches the desired speed monotonically",
          "[sim]") {
  auto cfg = empty_config();
  sim::WorldState world;
  world.vehicles.push_back(make_vehicle(0, 0.0, 0, cfg, 0.0, 15.0));
  double previous = 0.0;
  for (int s = 0; s < 400; ++s) {
    sim::advance_traffic(cfg, world, kT);
    const double v = world.vehicles[0].vx;
    CHECK(v >= previous);
    CHECK(v <= 15.0 + 1e-12);
    previous = v;
  }
  CHECK(previous == Catch::Approx(15.0).margin(1e-6));
}

TEST_CASE("vehicle at its desired speed coasts", "[sim]") {
  auto cfg = empty_config();
  sim::WorldState world;
  world.vehicles.push_back(make_vehicle(0, 10.0, 1, cfg, 12.0, 12.0));
  advance_for(cfg, world, 5.0);
  CHECK(world.vehicles[0].vx == Catch::Approx(12.0).margin(1e-12));
  CHECK(world.vehicles[0].x ==
        Catch::Approx(10.0 + 12.0 * 5.0).margin(1e-9));
}

TEST_CASE("car following settles at the time-gap fixed point", "[sim]") {
  // Leader holds 10 m/s; the follower's desired 15 m/s is unreachable, so
  // the gap term governs: equilibrium bumper gap = 2 m + v * 1.2 s = 14 m.
  auto cfg = empty_config();
  sim::WorldState world;
  world.vehicles.push_back(make_vehicle(0, 80.0, 0, cfg, 10.0, 10.0));
  world.vehicles.push_back(make_vehicle(1, 0.0, 0, cfg, 15.0, 15.0));
  advance_for(cfg, world, 60.0);
  const auto& leader = world.vehicles[0];
  const auto& follower = world.vehicles[1];
  const double gap =
      (leader.x - 0.5 * leader.length) - (follower.x + 0.5 * follower.length);
  CHECK(follower.vx == Catch::Approx(10.0).margin(0.2));
  CHECK(gap == Catch::Approx(14.0).margin(1.2));
}

TEST_CASE("a fast follower queues behind a stopped leader", "[sim]") {
  auto cfg = empty_config();
  sim::WorldState world;
  // Stopped leader, fast follower: braking may clamp speed to zero, never
  // below, and the follower must come to rest near the jam gap.
  world.vehicles.push_back(make_vehicle(0, 40.0, 0, cfg, 0.0, 0.0));
  world.vehicles.push_back(make_vehicle(1, 0.0, 0, cfg, 16.0, 16.0));
  for (int s = 0; s < 900; ++s) {
    sim::advance_traffic(cfg, world, kT);
    CHECK(world.vehicles[0].vx == 0.0);
    CHECK(world.vehicles[1].vx >= 0.0);
    CHECK_FALSE(sim::traffic_overlap(world).has_value());
  }
  const double gap = (world.vehicles[0].x - 2.5) - (world.vehicles[1].x + 2.5);
  CHECK(world.vehicles[1].vx <= 0.2);  // settled behind the stopped leader
  CHECK(gap >= 1.0);
  CHECK(gap <= 3.0);
}

TEST_CASE("scripted lane change follows the smoothstep exactly", "[sim]") {
  auto cfg = empty_config();
  cfg.scripted = {{"car", 0.0, 50.0, 0, 12.0,
                   sim::ScriptedLaneChange{2.0, 1, 2.0}}};
  sim::WorldState world;
  Rng rng(1);
  sim::spawn_traffic(cfg, 0.0, world, rng);
  REQUIRE(world.vehicles.size() == 1);
  auto& v = world.vehicles[0];
  CHECK(v.y == cfg.road.lane_center(0));
  CHECK(v.lane == 0);

  advance_for(cfg, world, 1.9);  // still before the scripted start
  CHECK(world.vehicles[0].y == cfg.road.lane_center(0));
  CHECK(world.vehicles[0].vy == 0.0);
  CHECK(world.vehicles[0].lane == 0);

  advance_for(cfg, world, 0.2);  // change under way
  CHECK(world.vehicles[0].lane == 1);  // target lane adopted at the start
  CHECK(world.vehicles[0].y > cfg.road.lane_center(0));
  CHECK(world.vehicles[0].y < cfg.road.lane_center(1));
  CHECK(world.vehicles[0].vy > 0.0);

  // Halfway point of the smoothstep: y is exactly between the centers.
  sim::WorldState half;
  Rng rng2(1);
  sim::spawn_traffic(cfg, 0.0, half, rng2);
  advance_for(cfg, half, 3.0);  // one second into the two-second change
  CHECK(half.vehicles[0].y ==
        Catch::Approx(0.5 * (cfg.road.lane_center(0) +
                             cfg.road.lane_center(1)))
            .margin(1e-9));

  advance_for(cfg, world, 2.0);  // well past the end
  CHECK(world.vehicles[0].y == cfg.road.lane_center(1));  // exact landing
  CHECK(world.vehicles[0].vy == 0.0);
  CHECK(world.vehicles[0].script_done);
}

TEST_CASE("followers react to a vehicle entering their lane mid-change",
          "[sim]") {
  auto cfg = empty_config();
  cfg.scripted = {{"car", 0.0, 30.0, 1, 8.0,
                   sim::ScriptedLaneChange{1.0, 0, 2.0}}};
  sim::WorldState world;
  Rng rng(1);
  sim::spawn_traffic(cfg, 0.0, world, rng);
  world.vehicles.push_back(make_vehicle(99, 0.0, 0, cfg, 15.0, 15.0));

  advance_for(cfg, world, 0.9);
  const double v_before = world.find(99)->vx;
  CHECK(v_before == Catch::Approx(15.0).margin(1e-9));  // lane still clear

  // Once the change starts, the mover counts as a lane-0 leader and the
  // follower brakes toward the time gap.
  advance_for(cfg, world, 2.0);
  CHECK(world.find(99)->vx < 15.0 - 0.5);
}

TEST_CASE("spawns pick the emptiest lane with enough clearance", "[sim]") {
  auto cfg = empty_config();
  sim::WorldState world;
  world.next_id = 100;
  // Lanes 0 and 1 hold one vehicle each, lane 2 holds two, lane 3 blocked
  // near the entry.
  world.vehicles.push_back(make_vehicle(world.next_id++, 50.0, 0, cfg, 12, 12));
  world.vehicles.push_back(make_vehicle(world.next_id++, 50.0, 1, cfg, 12, 12));
  world.vehicles.push_back(make_vehicle(world.next_id++, 50.0, 2, cfg, 12, 12));
  world.vehicles.push_back(make_vehicle(world.next_id++, 90.0, 2, cfg, 12, 12));
  world.vehicles.push_back(make_vehicle(world.next_id++, 5.0, 3, cfg, 12, 12));

  const auto* type = cfg.find_type("car");
  REQUIRE(type != nullptr);
  const int id =
      sim::detail::place_at_entry(cfg, world, *type, 14.0, 10.0);
  REQUIRE(id >= 0);
  const auto* spawned = world.find(id);
  REQUIRE(spawned != nullptr);
  // Lane 3 is the emptiest by population ahead of the entry test, but its
  // clearance (5 - 2.5 - 2.5 = 0) fails; lane 0 wins as the lowest-index
  // lane among the singly occupied ones.
  CHECK(spawned->lane == 0);
  CHECK(spawned->x == 0.0);
  CHECK(spawned->vx == 14.0);  // clearance supports the full desired speed
}

TEST_CASE("entry speed is capped by the available gap", "[sim]") {
  auto cfg = empty_config(1);
  sim::WorldState world;
  world.next_id = 10;
  world.vehicles.push_back(make_vehicle(1000, 18.0, 0, cfg, 12, 12));
  const auto* type = cfg.find_type("car");
  const int id = sim::detail::place_at_entry(cfg, world, *type, 15.0, 10.0);
  REQUIRE(id >= 0);
  // Clearance = 18 - 2.5 (leader rear) - 2.5 (new front) = 13 m; the entry
  // speed is (clearance - jam gap) / 1.2 s, below the desired 15.
  CHECK(world.find(id)->vx == Catch::Approx(11.0 / 1.2).margin(1e-12));
}

TEST_CASE("blocked arrivals stay queued and drain later", "[sim]") {
  auto cfg = empty_config(1);
  cfg.demand = {{"car", 3600.0}};  // one arrival per second
  sim::WorldState world;
  Rng rng(9);
  // A stopped wall at the entry suppresses every placement.
  world.vehicles.push_back(make_vehicle(1000, 3.0, 0, cfg, 0.0, 0.0));

  for (long s = 0; s <= 300; ++s) {
    const double now = static_cast<double>(s) * kT;
    world.time = now;
    sim::spawn_traffic(cfg, now, world, rng);
  }
  CHECK(world.vehicles.size() == 1);  // nothing spawned past the wall
  REQUIRE(world.next_arrival.size() == 1);
  CHECK(world.next_arrival[0] <= 30.0);  // backlog is queued, not dropped

  // Remove the wall: the backlog drains as fast as spacing allows.
  world.vehicles.clear();
  const int before = world.next_id;
  for (long s = 301; s <= 900; ++s) {
    const double now = static_cast<double>(s) * kT;
    world.time = now;
    sim::spawn_traffic(cfg, now, world, rng);
    sim::advance_traffic(cfg, world, kT);
  }
  CHECK(world.next_id - before >= 25);
}

TEST_CASE("vehicles past the exit bound are retired", "[sim]") {
  auto cfg = empty_config();
  cfg.ego_segment = 100.0;  // despawn bound at 300 m
  sim::WorldState world;
  // Retirement needs the rear bumper (half a length behind center) past the
  // bound; start far enough that one step of motion clears it.
  world.vehicles.push_back(
      make_vehicle(0, cfg.despawn_x() + 4.0, 0, cfg, 12, 12));
  world.vehicles.push_back(make_vehicle(1, 50.0, 0, cfg, 12, 12));
  sim::advance_traffic(cfg, world, kT);
  REQUIRE(world.vehicles.size() == 1);
  CHECK(world.vehicles[0].id == 1);
}

TEST_CASE("random traffic never overlaps", "[sim]") {
  auto cfg = scenario::high_density();
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    sim::WorldState world;
    Rng rng(seed);
    for (long s = 0; s < 600; ++s) {
      const double now = static_cast<double>(s) * kT;
      world.time = now;
      sim::spawn_traffic(cfg, now, world, rng);
      sim::advance_traffic(cfg, world, kT);
      if (s % 5 == 0) {
        const auto overlap = sim::traffic_overlap(world);
        INFO("seed " << seed << " step " << s);
        if (overlap) {
          INFO("vehicles " << overlap->first << " and " << overlap->second);
        }
        REQUIRE_FALSE(overlap.has_value());
      }
    }
  }
}

TEST_CASE("ego actuation applies the shared dynamics", "[sim]") {
  auto cfg = empty_config();
  sim::WorldState world;
  auto ego = make_vehicle(7, 100.0, 0, cfg, 15.0, 15.0);
  world.vehicles.push_back(ego);
  world.ego_id = 7;
  VehicleParams params;

  // A symmetric sixteen-step lateral push lands exactly one lane over:
  // 1.25 m/s^2 for 1.6 s then -1.25 m/s^2 for 1.6 s moves 3.2 m.
  for (int s = 0; s < 16; ++s) {
    sim::actuate_ego(cfg, world, {0.0, 1.25}, params);
  }
  for (int s = 0; s < 16; ++s) {
    sim::actuate_ego(cfg, world, {0.0, -1.25}, params);
  }
  const auto* moved = world.ego();
  CHECK(moved->y == Catch::Approx(cfg.road.lane_center(1)).margin(1e-9));
  CHECK(moved->vy == 0.0);
  CHECK(moved->lane == 1);
  CHECK(moved->vx == 15.0);
  CHECK(moved->x == Catch::Approx(100.0 + 15.0 * 3.2).margin(1e-9));
}

TEST_CASE("ego actuation rejects controls outside the feasible box",
          "[sim]") {
  auto cfg = empty_config();
  sim::WorldState world;
  world.vehicles.push_back(make_vehicle(7, 100.0, 0, cfg, 15.0, 15.0));
  world.ego_id = 7;
  VehicleParams params;
  CHECK_THROWS_AS(sim::actuate_ego(cfg, world, {4.0, 0.0}, params),
                  std::invalid_argument);
  CHECK_THROWS_AS(sim::actuate_ego(cfg, world, {0.0, 5.0}, params),
                  std::invalid_argument);
  // Within the box but beyond a tightened per-step speed-change cap.
  CHECK_THROWS_AS(sim::actuate_ego(cfg, world, {3.0, 0.0}, params, 0.05),
                  std::invalid_argument);
  sim::WorldState empty;
  CHECK_THROWS_AS(sim::actuate_ego(cfg, empty, {0.0, 0.0}, params),
                  std::invalid_argument);
}

TEST_CASE("ego overlap and leader queries see the footprint", "[sim]") {
  auto cfg = empty_config();
  sim::WorldState world;
  world.vehicles.push_back(make_vehicle(0, 100.0, 1, cfg, 15.0, 15.0));
  world.ego_id = 0;
  // A vehicle straddling the lane 1/2 boundary ahead counts as a leader.
  auto straddler = make_vehicle(1, 130.0, 2, cfg, 10.0, 10.0);
  straddler.y = 2.0 * cfg.road.lane_width;  // boundary between lanes 1 and 2
  world.vehicles.push_back(straddler);
  // A nearer vehicle fully in lane 0 does not.
  world.vehicles.push_back(make_vehicle(2, 110.0, 0, cfg, 10.0, 10.0));

  const auto leader = sim::ego_leader(cfg, world);
  REQUIRE(leader.has_value());
  CHECK(leader->id == 1);
  CHECK(leader->bumper_gap == Catch::Approx(30.0 - 5.0).margin(1e-12));
  CHECK(leader->speed == 10.0);

  CHECK_FALSE(sim::ego_overlap(world).has_value());
  world.vehicles[1].x = 104.0;  // boxes meet: gap 4 - 2.5 - 2.5 < 0
  world.vehicles[1].y = world.vehicles[0].y;
  CHECK(sim::ego_overlap(world).has_value());
  CHECK(sim::ego_overlap(world).value() == 1);
}

TEST_CASE("ego spawn needs a larger clearance", "[sim]") {
  auto cfg = empty_config(1);
  sim::WorldState world;
  VehicleParams params;
  world.vehicles.push_back(make_vehicle(50, 20.0, 0, cfg, 12.0, 12.0));
  // Clearance 20 - 2.5 - 2.5 = 15 m: enough for traffic, not for the ego.
  CHECK_FALSE(sim::spawn_ego(cfg, world, params, 15.0));
  CHECK(world.ego_id == -1);
  world.vehicles[0].x = 35.0;  // clearance 30 m
  CHECK(sim::spawn_ego(cfg, world, params, 15.0));
  REQUIRE(world.has_ego());
  CHECK(world.ego()->vx == 15.0);
  CHECK(world.ego()->type == "ego");
}

TEST_CASE("scenario validation rejects malformed configurations", "[sim]") {
  auto good = empty_config();
  CHECK_NOTHROW(good.validate());

  auto bad = good;
  bad.warmup = bad.duration;  // need duration > warmup
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.demand = {{"phantom", 100.0}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.demand = {{"car", -1.0}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.scripted = {{"car", 0.0, 0.0, 9, 10.0, std::nullopt}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.scripted = {{"car", 0.0, 0.0, 0, 10.0,
                   sim::ScriptedLaneChange{1.0, 1, 0.0}}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.types[0].speed_min = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
