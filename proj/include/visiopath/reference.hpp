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

#ifndef VISIOPATH_REFERENCE_HPP
#define VISIOPATH_REFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "visiopath/perception.hpp"
#include "visiopath/types.hpp"

namespace visiopath::reference {

/// A time-stamped planar position sample. Waypoint lists are consumed by the
/// control initializer, which spline-smooths them and differentiates twice.
struct Waypoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// How each lane looks from the ego's position: nearest vehicle ahead and
/// behind (center distances) plus the speed of the vehicle ahead.
struct LaneView {
  double front_gap = std::numeric_limits<double>::infinity();
  double front_speed = 0.0;
  double rear_gap = std::numeric_limits<double>::infinity();
};

struct ReferencePlan {
  std::vector<Waypoint> waypoints;  // K + 2 samples at T spacing from t = 0
  int target_lane = 0;
  double target_speed = 0.0;
  bool lane_change = false;
};

inline std::vector<LaneView> survey_lanes(
    const VehicleState& ego,
    const std::vector<perception::ObstacleObservation>& observations,
    const RoadGeometry& road) {
  std::vector<LaneView> lanes(static_cast<std::size_t>(road.lane_count));
  for (const auto& obs : observations) {
    auto& view = lanes[static_cast<std::size_t>(obs.lane_index)];
    if (obs.x >= ego.x) {
      const double gap = obs.x - ego.x;
      if (gap < view.front_gap) {
        view.front_gap = gap;
        view.front_speed = obs.velocity.x();
      }
    } else {
      view.rear_gap = std::min(view.rear_gap, ego.x - obs.x);
    }
  }
  return lanes;
}

namespace detail {

/// Speed the ego could realistically hold in a lane: free flow when the lane
/// is open, a fraction of the leading vehicle's speed when one is close.
inline double achievable_speed(const LaneView& view, double cruise_speed) {
  if (view.front_gap > 50.0) return cruise_speed;
  const double follow = 0.95 * std::max(view.front_speed, 0.0);
  if (view.front_gap <= 20.0) return std::min(cruise_speed, follow);
  const double w = 1.0 - (view.front_gap - 20.0) / 30.0;
  return std::min(cruise_speed, w * follow + (1.0 - w) * cruise_speed);
}

// Smoothstep blend for the lateral transition: zero slope at both ends, so
// the resampled reference carries no lateral velocity jump.
inline double smoothstep(double s) {
  const double c = std::clamp(s, 0.0, 1.0);
  return c * c * (3.0 - 2.0 * c);
}

}  // namespace detail

/// Builds a gap-seeking polyline: pick the adjacent (or current) lane with
/// the best achievable speed and open room, ramp the longitudinal speed
/// toward that lane's achievable speed, and blend laterally to its center.
/// The output is a dense waypoint list at the control period, suitable for
/// the initializer's spline-and-differentiate pipeline.
inline ReferencePlan generate(
    const VehicleState& ego,
    const std::vector<perception::ObstacleObservation>& observations,
    const RoadGeometry& road, const VehicleParams& params,
    double cruise_speed, int K) {
  if (!ego.finite()) {
    throw std::invalid_argument("reference::generate: non-finite state");
  }
  if (K < 1) throw std::invalid_argument("reference::generate: K < 1");
  road.validate();
  params.validate();
  if (!(cruise_speed >= 0.0) || !std::isfinite(cruise_speed)) {
    throw std::invalid_argument("reference::generate: bad cruise speed");
  }

  const auto lanes = survey_lanes(ego, observations, road);
  const int current = road.lane_index_of(ego.y);
  const auto& here = lanes[static_cast<std::size_t>(current)];

  // Candidate lanes: stay, or move one lane either way when the slot is
  // open. Entering a lane needs room ahead and a clear rear quarter.
  int best = current;
  double best_speed = detail::achievable_speed(here, cruise_speed);
  const double keep_margin = 0.3;  // required gain before leaving the lane
  for (const int lane : {current - 1, current + 1}) {
    if (lane < 0 || lane >= road.lane_count) continue;
    const auto& view = lanes[static_cast<std::size_t>(lane)];
    if (view.rear_gap < 10.0 || view.front_gap < 15.0) continue;
    const double speed = detail::achievable_speed(view, cruise_speed);
    const bool faster = speed > best_speed + keep_margin;
    const bool roomier = speed > best_speed - 1e-9 &&
                         view.front_gap >
                             lanes[static_cast<std::size_t>(best)].front_gap +
                                 20.0;
    if (faster || roomier) {
      best = lane;
      best_speed = speed;
    }
  }

  ReferencePlan plan;
  plan.target_lane = best;
  plan.target_speed = best_speed;
  plan.lane_change = best != current;

  const double T = params.T;
  const double horizon = K * T;
  // Longitudinal: constant-rate ramp from the current speed to the target,
  // kept inside the actuation envelope with headroom for the lateral motion.
  const double dv = plan.target_speed - ego.vx;
  const double rate_cap = dv >= 0.0 ? 0.5 * params.ux_max : 0.5 * -params.ux_min;
  const double ramp_time =
      std::max(std::abs(dv) / std::max(rate_cap, 1e-9), 1e-9);
  // Lateral: smoothstep to the target lane center. Peak acceleration of the
  // blend is 6*|dy|/t_lc^2; the duration keeps it under the comfort cap.
  const double y_target = road.lane_center(best);
  const double dy = y_target - ego.y;
  double t_lc = horizon;
  if (std::abs(dy) > 1e-12) {
    t_lc = std::clamp(std::sqrt(6.0 * std::abs(dy) / (0.8 * params.uy_cap)),
                      0.5, horizon);
  }

  plan.waypoints.reserve(static_cast<std::size_t>(K) + 2);
  double x = ego.x;
  double v = ego.vx;
  for (int k = 0; k <= K + 1; ++k) {
    const double t = k * T;
    Waypoint w;
    w.t = t;
    w.x = x;
    w.y = ego.y + dy * detail::smoothstep(t / t_lc);
    plan.waypoints.push_back(w);
    const double v_next =
        ego.vx + dv * std::min(1.0, (t + T) / ramp_time);
    x += 0.5 * (v + v_next) * T;
    v = v_next;
  }
  return plan;
}

}  // namespace visiopath::reference

#endif  // VISIOPATH_REFERENCE_HPP
