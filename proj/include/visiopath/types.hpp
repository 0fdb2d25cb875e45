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

#ifndef VISIOPATH_TYPES_HPP
#define VISIOPATH_TYPES_HPP

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace visiopath {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat24 = Eigen::Matrix<double, 2, 4>;
using Mat42 = Eigen::Matrix<double, 4, 2>;

inline constexpr int kStateDim = 4;
inline constexpr int kControlDim = 2;

/// Planar vehicle state: longitudinal/lateral position and velocity.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  Vec4 vec() const { return Vec4(x, y, vx, vy); }
  static VehicleState FromVec(const Vec4& v) { return {v(0), v(1), v(2), v(3)}; }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(vx) &&
           std::isfinite(vy);
  }
};

/// Longitudinal and lateral acceleration command.
struct ControlInput {
  double ux = 0.0;
  double uy = 0.0;

  Vec2 vec() const { return Vec2(ux, uy); }
  static ControlInput FromVec(const Vec2& v) { return {v(0), v(1)}; }

  bool finite() const { return std::isfinite(ux) && std::isfinite(uy); }
};

/// Ego geometry, actuation limits and the control period.
struct VehicleParams {
  double length = 5.0;
  double width = 1.8;
  double ux_max = 3.0;   // max longitudinal acceleration [m/s^2]
  double ux_min = -6.0;  // max braking [m/s^2]
  double uy_cap = 3.0;   // symmetric lateral comfort cap [m/s^2]
  double T = 0.1;        // control period [s]

  void validate() const {
    if (!(length > 0.0) || !(width > 0.0)) {
      throw std::invalid_argument("VehicleParams: non-positive dimensions");
    }
    if (!(T > 0.0)) {
      throw std::invalid_argument("VehicleParams: non-positive step time");
    }
    if (!(ux_max > 0.0) || !(ux_min < 0.0) || !(uy_cap > 0.0)) {
      throw std::invalid_argument("VehicleParams: malformed control limits");
    }
  }
};

/// Straight multi-lane road segment. Lateral coordinate y runs from 0 at the
/// right edge to width() at the left edge; lane 0 is the rightmost lane.
struct RoadGeometry {
  double lane_width = 3.2;
  int lane_count = 4;

  double width() const { return lane_width * static_cast<double>(lane_count); }
  double lane_center(int lane) const {
    return (static_cast<double>(lane) + 0.5) * lane_width;
  }
  int lane_index_of(double y) const {
    const int idx = static_cast<int>(std::floor(y / lane_width));
    if (idx < 0) return 0;
    if (idx >= lane_count) return lane_count - 1;
    return idx;
  }

  void validate() const {
    if (!(lane_width > 0.0) || lane_count < 1) {
      throw std::invalid_argument("RoadGeometry: malformed lanes");
    }
  }
};

}  // namespace visiopath

#endif  // VISIOPATH_TYPES_HPP
