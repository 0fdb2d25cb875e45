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

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "visiopath/perception.hpp"
#include "visiopath/types.hpp"

namespace visiopath::safety {

/// Parameters of the post-optimization check. The verification horizon must
/// not exceed the planner's horizon; the check samples at the planner rate.
struct SafetyConfig {
  double horizon = 3.0;      // verification window (s)
  double ttc_min = 2.0;      // minimum acceptable time-to-collision (s)
  double d_lat_min = 0.5;    // minimum acceptable lateral clearance (m)
  double T = 0.1;            // sampling period (s)

  int steps() const { return static_cast<int>(std::floor(horizon / T)); }

  void validate() const {
    if (!(horizon > 0.0) || !(ttc_min > 0.0) || !(d_lat_min > 0.0) ||
        !(T > 0.0)) {
      throw std::invalid_argument("SafetyConfig: all fields must be positive");
    }
  }
};

/// Axis-aligned box, the collision footprint of one vehicle.
struct BoundingBox {
  double center_x = 0.0;
  double center_y = 0.0;
  double half_length = 1.0;
  double half_width = 1.0;

  void validate() const {
    if (!(half_length > 0.0) || !(half_width > 0.0)) {
      throw std::invalid_argument("BoundingBox: non-positive half extents");
    }
  }
};

/// Constant-velocity prediction of an obstacle center m steps ahead.
inline Vec2 predict_obstacle(const Vec2& position, const Vec2& velocity,
                             int m, double T) {
  return position + m * T * velocity;
}

/// Closed-box overlap: boxes that merely touch count as intersecting.
inline bool boxes_intersect(const BoundingBox& a, const BoundingBox& b) {
  return std::abs(a.center_x - b.center_x) <= a.half_length + b.half_length &&
         std::abs(a.center_y - b.center_y) <= a.half_width + b.half_width;
}

/// Bumper-to-bumper time to collision against an obstacle ahead. Returns
/// infinity when the gap is not closing. Callers gate on obs_x > ego_x;
/// the gap itself may already be negative for overlapping boxes.
inline double ttc(double ego_x, double ego_vx, double ego_half_len,
                  double obs_x, double obs_vx, double obs_half_len) {
  const double gap = (obs_x - obs_half_len) - (ego_x + ego_half_len);
  if (ego_vx > obs_vx) return gap / (ego_vx - obs_vx);
  return std::numeric_limits<double>::infinity();
}

/// Edge-to-edge lateral clearance between two vehicles; negative when the
/// lateral footprints overlap.
inline double lateral_clearance(double ego_y, double obs_y, double ego_width,
                                double obs_width) {
  return std::abs(ego_y - obs_y) - (ego_width + obs_width) / 2.0;
}

/// Everything the verification pass found, with per-step flags kept for
/// the trace. Per-obstacle flags are stored row-major: index j * steps +
/// (m - 1) for obstacle j at step m.
struct SafetyReport {
  int steps = 0;
  int obstacle_count = 0;
  std::vector<std::uint8_t> collision;           // box overlap
  std::vector<std::uint8_t> ttc_violation;       // closing too fast ahead
  std::vector<std::uint8_t> lateral_violation;   // side clearance too small
  std::vector<std::uint8_t> off_road;            // per step, size = steps

  bool unsafe = false;     // any collision or road-boundary exit
  bool high_risk = false;  // any TTC or lateral-clearance violation

  int first_unsafe_step = -1;      // 1-based step of the first unsafe hit
  int first_unsafe_obstacle = -1;  // obstacle id, -1 for a boundary exit
  int first_risk_step = -1;
  int first_risk_obstacle = -1;

  bool flag(const std::vector<std::uint8_t>& grid, int j, int m) const {
    return grid[static_cast<std::size_t>(j) * steps + (m - 1)] != 0;
  }
};

/// Checks a planned ego trajectory against constant-velocity predictions of
/// every observed obstacle: box overlap and road containment decide unsafe;
/// time-to-collision and lateral clearance decide high-risk. The trajectory
/// must cover at least config.steps() transitions.
inline SafetyReport verify(
    const std::vector<VehicleState>& trajectory,
    const std::vector<perception::ObstacleObservation>& obstacles,
    const RoadGeometry& road, const VehicleParams& params,
    const SafetyConfig& config = {}) {
  config.validate();
  params.validate();
  road.validate();
  const int M = config.steps();
  if (static_cast<int>(trajectory.size()) < M + 1) {
    throw std::invalid_argument(
        "verify: trajectory shorter than the verification horizon");
  }

  const int J = static_cast<int>(obstacles.size());
  SafetyReport report;
  report.steps = M;
  report.obstacle_count = J;
  report.off_road.assign(M, 0);
  report.collision.assign(static_cast<std::size_t>(J) * M, 0);
  report.ttc_violation.assign(static_cast<std::size_t>(J) * M, 0);
  report.lateral_violation.assign(static_cast<std::size_t>(J) * M, 0);

  const double ego_hl = params.length / 2.0;
  const double ego_hw = params.width / 2.0;

  auto note_unsafe = [&](int m, int id) {
    report.unsafe = true;
    if (report.first_unsafe_step < 0) {
      report.first_unsafe_step = m;
      report.first_unsafe_obstacle = id;
    }
  };
  auto note_risk = [&](int m, int id) {
    report.high_risk = true;
    if (report.first_risk_step < 0) {
      report.first_risk_step = m;
      report.first_risk_obstacle = id;
    }
  };

  for (int m = 1; m <= M; ++m) {
    const VehicleState& ego = trajectory[m];
    BoundingBox ego_box{ego.x, ego.y, ego_hl, ego_hw};

    // Road containment: the whole footprint must stay inside the lateral
    // extent of the road; the segment is open-ended longitudinally.
    if (ego.y - ego_hw < 0.0 || ego.y + ego_hw > road.width()) {
      report.off_road[m - 1] = 1;
      note_unsafe(m, -1);
    }

    for (int j = 0; j < J; ++j) {
      const auto& obs = obstacles[j];
      const Vec2 p = predict_obstacle(Vec2(obs.x, obs.y), obs.velocity, m,
                                      config.T);
      const std::size_t idx = static_cast<std::size_t>(j) * M + (m - 1);

      BoundingBox obs_box{p.x(), p.y(), obs.length / 2.0, obs.width / 2.0};
      if (boxes_intersect(ego_box, obs_box)) {
        report.collision[idx] = 1;
        note_unsafe(m, obs.id);
      }

      if (p.x() > ego.x) {
        // Planned ego speed at this step against the obstacle's current
        // speed; the obstacle is not re-accelerated over the window.
        const double t = ttc(ego.x, ego.vx, ego_hl, p.x(),
                             obs.velocity.x(), obs.length / 2.0);
        if (t < config.ttc_min) {
          report.ttc_violation[idx] = 1;
          note_risk(m, obs.id);
        }
      }

      if (lateral_clearance(ego.y, p.y(), params.width, obs.width) <
          config.d_lat_min) {
        report.lateral_violation[idx] = 1;
        note_risk(m, obs.id);
      }
    }
  }
  return report;
}

}  // namespace visiopath::safety
