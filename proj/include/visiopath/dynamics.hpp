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

#ifndef VISIOPATH_DYNAMICS_HPP
#define VISIOPATH_DYNAMICS_HPP

#include <algorithm>
#include <stdexcept>

#include "visiopath/types.hpp"

namespace visiopath::dynamics {

/// Discrete double-integrator step:
///   p' = p + v*T + u*T^2/2,  v' = v + u*T  (per axis).
inline VehicleState step(const VehicleState& state, const ControlInput& u,
                         double T) {
  if (!state.finite() || !u.finite() || !std::isfinite(T) || T <= 0.0) {
    throw std::invalid_argument("dynamics::step: non-finite input");
  }
  VehicleState next;
  next.x = state.x + state.vx * T + 0.5 * u.ux * T * T;
  next.y = state.y + state.vy * T + 0.5 * u.uy * T * T;
  next.vx = state.vx + u.ux * T;
  next.vy = state.vy + u.uy * T;
  return next;
}

/// State transition Jacobian d(next)/d(state). Constant: dynamics are linear.
inline Mat4 state_jacobian(double T) {
  Mat4 A = Mat4::Identity();
  A(0, 2) = T;
  A(1, 3) = T;
  return A;
}

/// Control Jacobian d(next)/d(u). Constant.
inline Mat42 control_jacobian(double T) {
  Mat42 B = Mat42::Zero();
  B(0, 0) = 0.5 * T * T;
  B(1, 1) = 0.5 * T * T;
  B(2, 0) = T;
  B(3, 1) = T;
  return B;
}

/// State-dependent control box at one step.
///
/// Longitudinal: ux in [max(-vx/T, ux_min), ux_max]; the velocity branch
/// forbids reversing within one step. Lateral: the one-step boundary-landing
/// accelerations toward the left/right usable edges
///   uy_upper_raw = 2*(y_left  - y - vy*T)/T^2
///   uy_lower_raw = 2*(y_right - y - vy*T)/T^2
/// with y_left = r_w - width/2 and y_right = width/2, intersected with the
/// comfort cap [-uy_cap, +uy_cap]. An empty intersection (vehicle pinched at
/// a boundary with outward velocity) is reported degenerate and carries the
/// unclipped values.
struct ControlBounds {
  ControlInput lower;
  ControlInput upper;
  bool degenerate = false;
  double raw_uy_lower = 0.0;
  double raw_uy_upper = 0.0;
};

inline ControlBounds control_bounds(const VehicleState& state,
                                    const VehicleParams& params,
                                    const RoadGeometry& road) {
  if (!state.finite()) {
    throw std::invalid_argument("dynamics::control_bounds: non-finite state");
  }
  const double T = params.T;
  const double y_left = road.width() - 0.5 * params.width;
  const double y_right = 0.5 * params.width;

  ControlBounds b;
  b.raw_uy_upper = 2.0 * (y_left - state.y - state.vy * T) / (T * T);
  b.raw_uy_lower = 2.0 * (y_right - state.y - state.vy * T) / (T * T);

  b.lower.ux = std::max(-state.vx / T, params.ux_min);
  b.upper.ux = params.ux_max;
  b.lower.uy = std::max(b.raw_uy_lower, -params.uy_cap);
  b.upper.uy = std::min(b.raw_uy_upper, params.uy_cap);
  b.degenerate = b.lower.uy > b.upper.uy;
  return b;
}

/// Clamp a control into the feasible box. When the capped lateral interval is
/// degenerate the raw boundary interval wins: staying on the road outranks
/// the comfort cap.
inline ControlInput clamp(const ControlInput& u, const ControlBounds& b) {
  ControlInput out;
  out.ux = std::clamp(u.ux, b.lower.ux, b.upper.ux);
  if (b.degenerate) {
    out.uy = std::clamp(u.uy, b.raw_uy_lower, b.raw_uy_upper);
  } else {
    out.uy = std::clamp(u.uy, b.lower.uy, b.upper.uy);
  }
  return out;
}

/// Gradients of the active bound expressions with respect to the state,
/// rows ordered [ux; uy]. A bound pinned at a constant branch (ux_max,
/// ux_min, or the comfort cap) has a zero row.
struct BoundJacobians {
  Mat24 lower = Mat24::Zero();
  Mat24 upper = Mat24::Zero();
};

inline BoundJacobians bound_jacobians(const VehicleState& state,
                                      const VehicleParams& params,
                                      const RoadGeometry& road) {
  const double T = params.T;
  const ControlBounds b = control_bounds(state, params, road);
  BoundJacobians J;
  if (-state.vx / T > params.ux_min) {
    J.lower(0, 2) = -1.0 / T;
  }
  // d/dy = -2/T^2, d/dvy = -2/T for the boundary-landing expressions.
  if (b.raw_uy_upper < params.uy_cap) {
    J.upper(1, 1) = -2.0 / (T * T);
    J.upper(1, 3) = -2.0 / T;
  }
  if (b.raw_uy_lower > -params.uy_cap) {
    J.lower(1, 1) = -2.0 / (T * T);
    J.lower(1, 3) = -2.0 / T;
  }
  return J;
}

}  // namespace visiopath::dynamics

#endif  // VISIOPATH_DYNAMICS_HPP
