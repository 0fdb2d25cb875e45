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

#include <filesystem>
#include <string>

#include "visiopath/scenario.hpp"

using namespace visiopath;

namespace {

/// Field-by-field scenario equality (the structs carry no operator==).
void require_same(const sim::ScenarioConfig& a, const sim::ScenarioConfig& b) {
  CHECK(a.name == b.name);
  CHECK(a.road.lane_width == b.road.lane_width);
  CHECK(a.road.lane_count == b.road.lane_count);
  CHECK(a.duration == b.duration);
  CHECK(a.warmup == b.warmup);
  CHECK(a.ego_segment == b.ego_segment);
  CHECK(a.sensing_range == b.sensing_range);
  CHECK(a.seed == b.seed);
  REQUIRE(a.types.size() == b.types.size());
  for (std::size_t i = 0; i < a.types.size(); ++i) {
    CHECK(a.types[i].name == b.types[i].name);
    CHECK(a.types[i].length == b.types[i].length);
    CHECK(a.types[i].width == b.types[i].width);
    CHECK(a.types[i].speed_min == b.types[i].speed_min);
    CHECK(a.types[i].speed_max == b.types[i].speed_max);
  }
  REQUIRE(a.demand.size() == b.demand.size());
  for (std::size_t i = 0; i < a.demand.size(); ++i) {
    CHECK(a.demand[i].type == b.demand[i].type);
    CHECK(a.demand[i].flow == b.demand[i].flow);
  }
  REQUIRE(a.scripted.size() == b.scripted.size());
  for (std::size_t i = 0; i < a.scripted.size(); ++i) {
    CHECK(a.scripted[i].type == b.scripted[i].type);
    CHECK(a.scripted[i].spawn_time == b.scripted[i].spawn_time);
    CHECK(a.scripted[i].x == b.scripted[i].x);
    CHECK(a.scripted[i].lane == b.scripted[i].lane);
    CHECK(a.scripted[i].speed == b.scripted[i].speed);
    CHECK(a.scripted[i].lane_change.has_value() ==
          b.scripted[i].lane_change.has_value());
    if (a.scripted[i].lane_change && b.scripted[i].lane_change) {
      CHECK(a.scripted[i].lane_change->time == b.scripted[i].lane_change->time);
      CHECK(a.scripted[i].lane_change->target_lane ==
            b.scripted[i].lane_change->target_lane);
      CHECK(a.scripted[i].lane_change->duration ==
            b.scripted[i].lane_change->duration);
    }
  }
}

std::string scenario_dir() {
  // Tests run from build/tests; the scenario files live in the source tree.
  for (auto dir = std::filesystem::current_path();;
       dir = dir.parent_path()) {
    if (std::filesystem::exists(dir / "scenarios" / "medium.json")) {
      return (dir / "scenarios").string();
    }
    if (dir == dir.root_path()) break;
  }
  return "scenarios";
}

}  // namespace

TEST_CASE("shipped density scenarios match the built-in presets",
          "[scenario]") {
  const auto dir = scenario_dir();
  require_same(scenario::load(dir + "/medium.json"),
               scenario::medium_density());
  require_same(scenario::load(dir + "/high.json"), scenario::high_density());
}

TEST_CASE("every shipped scenario file loads and validates", "[scenario]") {
  const auto dir = scenario_dir();
  for (const char* name :
       {"medium.json", "high.json", "slow_leader.json", "cut_in.json"}) {
    const auto config = scenario::load(dir + "/" + name);
    CHECK_FALSE(config.name.empty());
    CHECK(config.duration > config.warmup);
  }
}

TEST_CASE("scenarios survive a to_json/from_json round trip", "[scenario]") {
  auto original = scenario::high_density();
  sim::ScriptedVehicle cutter;
  cutter.type = "medium_car";
  cutter.spawn_time = 3.0;
  cutter.x = 42.0;
  cutter.lane = 1;
  cutter.speed = 9.5;
  sim::ScriptedLaneChange change;
  change.time = 8.0;
  change.target_lane = 0;
  change.duration = 0.75;
  cutter.lane_change = change;
  original.scripted.push_back(cutter);
  original.seed = 99;

  const auto j = scenario::to_json(original);
  require_same(scenario::from_json(j), original);
}

TEST_CASE("scenarios survive a save/load round trip", "[scenario]") {
  const auto dir = std::filesystem::temp_directory_path() / "vp_scn_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "roundtrip.json").string();
  const auto original = scenario::medium_density();
  scenario::save(path, original);
  require_same(scenario::load(path), original);
  std::filesystem::remove_all(dir);
}

TEST_CASE("syntax errors carry the source name, line, and column",
          "[scenario]") {
  try {
    scenario::parse("{\n  \"name\": \"x\",\n  !!\n}", "broken.json");
    FAIL("expected a parse failure");
  } catch (const scenario::ScenarioError& e) {
    const std::string message = e.what();
    CHECK(message.find("broken.json") != std::string::npos);
    CHECK(message.find("line 3") != std::string::npos);
    CHECK(message.find("column") != std::string::npos);
  }
}

TEST_CASE("semantic errors point at the offending JSON path", "[scenario]") {
  auto expect_error = [](nlohmann::json j, const std::string& needle) {
    try {
      scenario::from_json(j, "s.json");
      FAIL("expected rejection, wanted message containing: " + needle);
    } catch (const scenario::ScenarioError& e) {
      const std::string message = e.what();
      INFO(message);
      CHECK(message.find("s.json") != std::string::npos);
      CHECK(message.find(needle) != std::string::npos);
    }
  };

  expect_error(nlohmann::json::object(), "name");
  expect_error({{"name", "x"}, {"bogus", 1}}, "/bogus");
  expect_error({{"name", "x"}, {"seed", -1}}, "/seed");
  expect_error({{"name", "x"}, {"seed", 1.5}}, "/seed");
  expect_error({{"name", "x"}, {"types", {{{"name", "t"}, {"width", 1.8}}}}},
               "/types/0");
  expect_error({{"name", "x"},
                {"types", nlohmann::json::array(
                              {{{"name", "t"},
                                {"length", "long"},
                                {"width", 1.8},
                                {"speed_min", 10.0},
                                {"speed_max", 12.0}}})}},
               "/types/0/length");
  expect_error({{"name", "x"}, {"road", {{"lanes", 4}}}}, "/road/lanes");
  expect_error(
      {{"name", "x"},
       {"scripted",
        nlohmann::json::array({{{"type", "t"},
                                {"spawn_time", 0.0},
                                {"x", 0.0},
                                {"lane", 0},
                                {"speed", 10.0},
                                {"lane_change",
                                 {{"time", 1.0}, {"target_lane", 1}}}}})}},
      "/scripted/0/lane_change");
}

TEST_CASE("content validation failures name the source", "[scenario]") {
  auto expect_invalid = [](nlohmann::json j) {
    CHECK_THROWS_AS(scenario::from_json(j, "s.json"),
                    scenario::ScenarioError);
  };

  // Warm-up must end before the run does.
  expect_invalid({{"name", "x"}, {"duration", 10.0}, {"warmup", 10.0}});
  // Demand must reference a cataloged type.
  expect_invalid({{"name", "x"},
                  {"demand",
                   nlohmann::json::array({{{"type", "ghost"},
                                           {"flow", 100.0}}})}});
  // Scripted vehicles must fit the road.
  expect_invalid(
      {{"name", "x"},
       {"types", nlohmann::json::array({{{"name", "t"},
                                         {"length", 5.0},
                                         {"width", 1.8},
                                         {"speed_min", 10.0},
                                         {"speed_max", 12.0}}})},
       {"scripted", nlohmann::json::array({{{"type", "t"},
                                            {"spawn_time", 0.0},
                                            {"x", 0.0},
                                            {"lane", 9},
                                            {"speed", 10.0}}})}});
}

TEST_CASE("missing scenario files raise a clear error", "[scenario]") {
  try {
    scenario::load("/nonexistent/path/s.json");
    FAIL("expected a load failure");
  } catch (const scenario::ScenarioError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/path/s.json") !=
          std::string::npos);
  }
}
