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

#ifndef VISIOPATH_POTENTIAL_HPP
#define VISIOPATH_POTENTIAL_HPP

#include <cmath>
#include <stdexcept>

#include "visiopath/types.hpp"

namespace visiopath::potential {

/// Distance from the ellipse center below which the field is evaluated with
/// the singular-center surrogate instead of the true (cusped) derivatives.
inline constexpr double kCenterEpsilon = 1e-6;

/// One repulsive ellipse: center, axis scales and cost weight (lambda).
struct ObstacleEllipse {
  double center_x = 0.0;
  double center_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double weight = 0.0;

  void validate() const {
    if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) {
      throw std::invalid_argument("ObstacleEllipse: non-positive sigma");
    }
    if (!(weight >= 0.0)) {
      throw std::invalid_argument("ObstacleEllipse: negative weight");
    }
  }
};

/// Longitudinal scale of the repulsive ellipse. While the ego is behind the
/// obstacle the scale grows with the ego's own speed (reaction headroom for
/// the approach); once ahead, with the obstacle's speed.
inline double build_sigma_x(const VehicleState& ego, double obstacle_x,
                            double obstacle_vx, double tau,
                            double obstacle_length) {
  if (!(tau > 0.0) || !(obstacle_length > 0.0)) {
    throw std::invalid_argument("build_sigma_x: non-positive tau or length");
  }
  const double v = (ego.x <= obstacle_x) ? ego.vx : obstacle_vx;
  return v * tau + obstacle_length;
}

/// phi = exp(-sqrt((x-cx)^2/sx^2 + (y-cy)^2/sy^2)); 1 at the center,
/// decaying along every ray.
inline double phi(const ObstacleEllipse& e, double x, double y) {
  e.validate();
  const double ax = (x - e.center_x) / e.sigma_x;
  const double ay = (y - e.center_y) / e.sigma_y;
  return std::exp(-std::sqrt(ax * ax + ay * ay));
}

/// Analytic spatial derivatives of phi. The field has a cusp at the center;
/// within kCenterEpsilon the surrogate (zero gradient, repulsive curvature
/// diag(-1/sx^2, -1/sy^2)) is returned and flagged.
struct PhiDerivatives {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();
  Mat2 hessian = Mat2::Zero();
  bool singular = false;
};

inline PhiDerivatives phi_derivatives(const ObstacleEllipse& e, double x,
                                      double y) {
  e.validate();
  const double dx = x - e.center_x;
  const double dy = y - e.center_y;
  const double sx2 = e.sigma_x * e.sigma_x;
  const double sy2 = e.sigma_y * e.sigma_y;

  PhiDerivatives d;
  if (std::sqrt(dx * dx + dy * dy) < kCenterEpsilon) {
    d.value = 1.0;
    d.gradient = Vec2::Zero();
    d.hessian << -1.0 / sx2, 0.0, 0.0, -1.0 / sy2;
    d.singular = true;
    return d;
  }

  const double s = std::sqrt(dx * dx / sx2 + dy * dy / sy2);
  const double value = std::exp(-s);
  // s_x, s_y: first partials of the scaled distance.
  const double s_x = dx / (sx2 * s);
  const double s_y = dy / (sy2 * s);
  const double s3 = s * s * s;
  const double s_xx = 1.0 / (sx2 * s) - dx * dx / (sx2 * sx2 * s3);
  const double s_yy = 1.0 / (sy2 * s) - dy * dy / (sy2 * sy2 * s3);
  const double s_xy = -dx * dy / (sx2 * sy2 * s3);

  d.value = value;
  d.gradient << -value * s_x, -value * s_y;
  d.hessian(0, 0) = value * (s_x * s_x - s_xx);
  d.hessian(1, 1) = value * (s_y * s_y - s_yy);
  d.hessian(0, 1) = value * (s_x * s_y - s_xy);
  d.hessian(1, 0) = d.hessian(0, 1);
  return d;
}

}  // namespace visiopath::potential

#endif  // VISIOPATH_POTENTIAL_HPP
