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

#ifndef VISIOPATH_OCP_HPP
#define VISIOPATH_OCP_HPP

#include <stdexcept>
#include <vector>

#include "visiopath/dynamics.hpp"
#include "visiopath/potential.hpp"
#include "visiopath/types.hpp"

namespace visiopath::ocp {

using potential::ObstacleEllipse;

/// Quadratic stage-cost weights. v_des is the tracked longitudinal speed.
struct CostWeights {
  double p1 = 0.5;  // ux^2
  double p2 = 0.5;  // uy^2
  double p3 = 1.0;  // (vx - v_des)^2
  double p4 = 2.0;  // vy^2
  double v_des = 15.0;

  void validate() const {
    if (!(p1 >= 0.0 && p2 >= 0.0 && p3 >= 0.0 && p4 >= 0.0)) {
      throw std::invalid_argument("CostWeights: negative weight");
    }
    if (!(p1 > 0.0 || p2 > 0.0 || p3 > 0.0 || p4 > 0.0)) {
      throw std::invalid_argument("CostWeights: all weights zero");
    }
    if (!std::isfinite(v_des)) {
      throw std::invalid_argument("CostWeights: non-finite v_des");
    }
  }
};

/// Constant-velocity obstacle track feeding the repulsive ellipses. Keeping
/// the source motion around (rather than only baked ellipses) lets the solver
/// re-freeze the speed-dependent longitudinal scale on its current nominal
/// trajectory at each iteration.
struct ObstacleTrack {
  double x0 = 0.0;  // center at stage 0
  double y0 = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double length = 5.0;
  double weight = 50.0;

  double center_x(int k, double T) const { return x0 + k * T * vx; }
  double center_y(int k, double T) const { return y0 + k * T * vy; }
};

/// Finite-horizon problem: K stage costs over states 0..K, no terminal cost.
struct OcpProblem {
  int K = 30;
  VehicleState x0;
  CostWeights weights;
  VehicleParams params;
  RoadGeometry road;
  double tau = 1.0;  // reaction-time scale in sigma_x

  std::vector<ObstacleTrack> tracks;
  // Per-stage ellipse lists, size K. For track-built problems these hold the
  // most recent freeze; for directly specified problems they are the data.
  std::vector<std::vector<ObstacleEllipse>> ellipses;

  void validate() const {
    if (K < 1) throw std::invalid_argument("OcpProblem: K < 1");
    if (!x0.finite()) throw std::invalid_argument("OcpProblem: non-finite x0");
    weights.validate();
    params.validate();
    road.validate();
    if (static_cast<int>(ellipses.size()) != K) {
      throw std::invalid_argument("OcpProblem: ellipse list size != K");
    }
    for (const auto& stage : ellipses) {
      for (const auto& e : stage) e.validate();
    }
  }
};

/// Freeze per-stage ellipses from the obstacle tracks against a nominal ego
/// trajectory: sigma_x uses the nominal ego state at the matching stage,
/// sigma_y is the lane width. Problems without tracks keep their ellipses.
inline std::vector<std::vector<ObstacleEllipse>> freeze_ellipses(
    const OcpProblem& problem, const std::vector<VehicleState>& nominal) {
  if (problem.tracks.empty()) return problem.ellipses;
  if (static_cast<int>(nominal.size()) < problem.K) {
    throw std::invalid_argument("freeze_ellipses: nominal shorter than K");
  }
  std::vector<std::vector<ObstacleEllipse>> out(problem.K);
  const double T = problem.params.T;
  for (int k = 0; k < problem.K; ++k) {
    out[k].reserve(problem.tracks.size());
    for (const auto& tr : problem.tracks) {
      ObstacleEllipse e;
      e.center_x = tr.center_x(k, T);
      e.center_y = tr.center_y(k, T);
      e.sigma_x = potential::build_sigma_x(nominal[k], e.center_x, tr.vx,
                                           problem.tau, tr.length);
      // A stopped obstacle ahead would otherwise collapse the scale to the
      // bare length; that is exactly the intended minimum.
      e.sigma_x = std::max(e.sigma_x, tr.length);
      e.sigma_y = problem.road.lane_width;
      e.weight = tr.weight;
      out[k].push_back(e);
    }
  }
  return out;
}

/// Builds a problem from tracks, freezing the initial ellipses on the
/// constant-speed extrapolation of x0 (the zero-control nominal).
inline OcpProblem make_problem(int K, const VehicleState& x0,
                               const CostWeights& weights,
                               const VehicleParams& params,
                               const RoadGeometry& road,
                               std::vector<ObstacleTrack> tracks,
                               double tau = 1.0) {
  OcpProblem p;
  p.K = K;
  p.x0 = x0;
  p.weights = weights;
  p.params = params;
  p.road = road;
  p.tau = tau;
  p.tracks = std::move(tracks);
  std::vector<VehicleState> nominal(K);
  for (int k = 0; k < K; ++k) {
    nominal[k] = x0;
    nominal[k].x = x0.x + k * params.T * x0.vx;
    nominal[k].y = x0.y + k * params.T * x0.vy;
  }
  p.ellipses.assign(K, {});
  p.ellipses = freeze_ellipses(p, nominal);
  p.validate();
  return p;
}

inline double stage_cost_core(const std::vector<ObstacleEllipse>& obstacles,
                              const CostWeights& w, const VehicleState& x,
                              const ControlInput& u) {
  if (!x.finite() || !u.finite()) {
    throw std::invalid_argument("stage_cost: non-finite input");
  }
  const double dv = x.vx - w.v_des;
  double cost = w.p1 * u.ux * u.ux + w.p2 * u.uy * u.uy + w.p3 * dv * dv +
                w.p4 * x.vy * x.vy;
  for (const auto& e : obstacles) {
    cost += e.weight * potential::phi(e, x.x, x.y);
  }
  return cost;
}

/// First and second derivatives of the stage cost in (x, u). The cross block
/// Lux is identically zero for this cost but kept for the solver's shape.
struct StageDerivatives {
  Vec4 Lx = Vec4::Zero();
  Vec2 Lu = Vec2::Zero();
  Mat4 Lxx = Mat4::Zero();
  Mat2 Luu = Mat2::Zero();
  Mat24 Lux = Mat24::Zero();
  bool singular_potential = false;
};

inline StageDerivatives stage_derivatives_core(
    const std::vector<ObstacleEllipse>& obstacles, const CostWeights& w,
    const VehicleState& x, const ControlInput& u) {
  if (!x.finite() || !u.finite()) {
    throw std::invalid_argument("stage_cost_derivatives: non-finite input");
  }
  StageDerivatives d;
  d.Lu << 2.0 * w.p1 * u.ux, 2.0 * w.p2 * u.uy;
  d.Luu << 2.0 * w.p1, 0.0, 0.0, 2.0 * w.p2;
  d.Lx(2) = 2.0 * w.p3 * (x.vx - w.v_des);
  d.Lx(3) = 2.0 * w.p4 * x.vy;
  d.Lxx(2, 2) = 2.0 * w.p3;
  d.Lxx(3, 3) = 2.0 * w.p4;
  for (const auto& e : obstacles) {
    const auto pd = potential::phi_derivatives(e, x.x, x.y);
    d.Lx.head<2>() += e.weight * pd.gradient;
    d.Lxx.topLeftCorner<2, 2>() += e.weight * pd.hessian;
    d.singular_potential = d.singular_potential || pd.singular;
  }
  return d;
}

inline void check_stage(const OcpProblem& problem, int k) {
  if (k < 0 || k >= problem.K) {
    throw std::invalid_argument("ocp: stage index out of range");
  }
}

inline double stage_cost(const OcpProblem& problem, int k,
                         const VehicleState& x, const ControlInput& u) {
  check_stage(problem, k);
  return stage_cost_core(problem.ellipses[k], problem.weights, x, u);
}

inline StageDerivatives stage_cost_derivatives(const OcpProblem& problem,
                                               int k, const VehicleState& x,
                                               const ControlInput& u) {
  check_stage(problem, k);
  return stage_derivatives_core(problem.ellipses[k], problem.weights, x, u);
}

/// Sum of the K stage costs along a trajectory. With check_dynamics the
/// state sequence must be the exact rollout of the controls.
inline double total_cost(const OcpProblem& problem,
                         const std::vector<VehicleState>& states,
                         const std::vector<ControlInput>& controls,
                         bool check_dynamics = false) {
  if (static_cast<int>(controls.size()) != problem.K ||
      static_cast<int>(states.size()) != problem.K + 1) {
    throw std::invalid_argument("total_cost: length mismatch");
  }
  if (check_dynamics) {
    for (int k = 0; k < problem.K; ++k) {
      const VehicleState next =
          dynamics::step(states[k], controls[k], problem.params.T);
      const double err = (next.vec() - states[k + 1].vec()).lpNorm<Eigen::Infinity>();
      if (err > 1e-9) {
        throw std::invalid_argument("total_cost: states not dynamics-consistent");
      }
    }
  }
  double total = 0.0;
  for (int k = 0; k < problem.K; ++k) {
    total += stage_cost(problem, k, states[k], controls[k]);
  }
  return total;
}

}  // namespace visiopath::ocp

#endif  // VISIOPATH_OCP_HPP
