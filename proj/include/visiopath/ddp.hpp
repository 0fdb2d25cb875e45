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

#ifndef VISIOPATH_DDP_HPP
#define VISIOPATH_DDP_HPP

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "visiopath/dynamics.hpp"
#include "visiopath/ocp.hpp"
#include "visiopath/types.hpp"

namespace visiopath::ddp {

struct SolverConfig {
  double mu_min = 1e-6;
  double mu_max = 1e6;
  double gamma = 5.0;  // regularization ladder factor
  std::vector<double> step_sizes = {1.0, 0.5, 0.1, 0.05, 0.01};
  double epsilon_1 = 1e-3;  // control-change convergence threshold
  int max_iterations = 100;
  int qp_max_changes = 20;  // active-set changes per step QP

  void validate() const {
    if (!(mu_min > 0.0) || !(mu_max > mu_min) || !(gamma > 1.0)) {
      throw std::invalid_argument("SolverConfig: malformed mu schedule");
    }
    if (step_sizes.empty()) {
      throw std::invalid_argument("SolverConfig: empty step-size ladder");
    }
    if (!(epsilon_1 > 0.0) || max_iterations < 1) {
      throw std::invalid_argument("SolverConfig: malformed termination");
    }
  }
};

enum class SolveStatus { kConverged, kMaxIterations, kIllConditioned };

/// Local quadratic model of the Q-function at one step. Quu is stored
/// already regularized (Quu + mu*I), matching the schedule's substitution.
struct QCoefficients {
  Vec4 Qx = Vec4::Zero();
  Vec2 Qu = Vec2::Zero();
  Mat4 Qxx = Mat4::Zero();
  Mat2 Quu = Mat2::Zero();
  Mat24 Qux = Mat24::Zero();
};

/// Affine control law du = k_ff + K_fb * dx. Rows of K_fb for components
/// clamped at a bound are zero; the forward pass's clipping at the rolled-out
/// state realizes the bound tracking exactly.
struct FeedbackLaw {
  Vec2 k_ff = Vec2::Zero();
  Mat24 K_fb = Mat24::Zero();
};

/// Per-component activity of the box solution: -1 lower, 0 free, +1 upper.
using ActiveSet = std::array<int, 2>;

struct BoxQpResult {
  Vec2 u = Vec2::Zero();
  Vec2 multipliers = Vec2::Zero();  // >= 0 on active bounds, 0 when free
  ActiveSet active = {0, 0};
  Mat2 free_inverse = Mat2::Zero();  // inverse on the free subspace
  int changes = 0;
  bool failed = false;
};

/// min 0.5 u'Quu u + Qu'u subject to lo <= u <= hi, by projected coordinate
/// descent with exact free-subspace Newton solves and a multiplier sign
/// check. Fails when Quu is not positive definite on the free subspace or
/// the active-set change cap is exceeded.
inline BoxQpResult solve_box_qp(const Mat2& Quu, const Vec2& Qu,
                                const Vec2& lo, const Vec2& hi,
                                int max_changes = 20) {
  if (!(lo(0) <= hi(0)) || !(lo(1) <= hi(1))) {
    throw std::invalid_argument("solve_box_qp: empty box");
  }
  BoxQpResult r;
  Vec2 u = Vec2::Zero().cwiseMax(lo).cwiseMin(hi);
  ActiveSet active = {9, 9};  // sentinel, forces first classification change

  const double scale = std::max({1.0, std::abs(Qu(0)), std::abs(Qu(1))});
  const double kkt_tol = 1e-8 * scale;

  for (int guard = 0; guard < 4 * (max_changes + 2); ++guard) {
    const Vec2 g = Qu + Quu * u;
    ActiveSet next{};
    for (int i = 0; i < 2; ++i) {
      const bool at_lo = u(i) <= lo(i);
      const bool at_hi = u(i) >= hi(i);
      if (at_lo && at_hi) {
        next[i] = g(i) > 0.0 ? -1 : +1;  // pinned component
      } else if (at_lo && g(i) > 0.0) {
        next[i] = -1;
      } else if (at_hi && g(i) < 0.0) {
        next[i] = +1;
      } else {
        next[i] = 0;
      }
    }
    if (next != active) {
      active = next;
      if (++r.changes > max_changes) {
        r.failed = true;
        break;
      }
    }

    // Exact Newton solve on the free subspace, active components at bounds.
    Vec2 u_new = u;
    for (int i = 0; i < 2; ++i) {
      if (active[i] == -1) u_new(i) = lo(i);
      if (active[i] == +1) u_new(i) = hi(i);
    }
    const bool f0 = active[0] == 0;
    const bool f1 = active[1] == 0;
    if (f0 && f1) {
      const double det = Quu(0, 0) * Quu(1, 1) - Quu(0, 1) * Quu(1, 0);
      if (!(Quu(0, 0) > 0.0) || !(det > 0.0)) {
        r.failed = true;
        break;
      }
      u_new(0) = (-Qu(0) * Quu(1, 1) + Qu(1) * Quu(0, 1)) / det;
      u_new(1) = (-Qu(1) * Quu(0, 0) + Qu(0) * Quu(1, 0)) / det;
    } else if (f0 || f1) {
      const int i = f0 ? 0 : 1;
      const int j = 1 - i;
      if (!(Quu(i, i) > 0.0)) {
        r.failed = true;
        break;
      }
      u_new(i) = -(Qu(i) + Quu(i, j) * u_new(j)) / Quu(i, i);
    }
    u_new = u_new.cwiseMax(lo).cwiseMin(hi);

    if ((u_new - u).lpNorm<Eigen::Infinity>() == 0.0) {
      // Stationary point for this active set; verify KKT before accepting.
      const Vec2 gs = Qu + Quu * u;
      bool ok = true;
      for (int i = 0; i < 2; ++i) {
        if (active[i] == 0) {
          ok = ok && std::abs(gs(i)) <= kkt_tol;
        } else {
          ok = ok && (active[i] == -1 ? gs(i) : -gs(i)) >= -kkt_tol;
        }
      }
      if (ok) {
        u = u_new;
        break;
      }
      // Wrong-sign multiplier: reclassification next pass counts a change.
      u = u_new;
      continue;
    }
    u = u_new;
  }

  r.u = u;
  if (!r.failed) {
    const Vec2 g = Qu + Quu * u;
    for (int i = 0; i < 2; ++i) {
      if (active[i] == -1) r.multipliers(i) = std::max(0.0, g(i));
      if (active[i] == +1) r.multipliers(i) = std::max(0.0, -g(i));
    }
    r.active = active;
    const bool f0 = active[0] == 0;
    const bool f1 = active[1] == 0;
    if (f0 && f1) {
      const double det = Quu(0, 0) * Quu(1, 1) - Quu(0, 1) * Quu(1, 0);
      r.free_inverse << Quu(1, 1) / det, -Quu(0, 1) / det, -Quu(1, 0) / det,
          Quu(0, 0) / det;
    } else if (f0) {
      r.free_inverse(0, 0) = 1.0 / Quu(0, 0);
    } else if (f1) {
      r.free_inverse(1, 1) = 1.0 / Quu(1, 1);
    }
  }
  return r;
}

/// Gain assembly for one step. X rows carry the state gradients of whichever
/// bound each active component sits on; they enter the value recursion (the
/// active constraint stays valid to first order as the state perturbs) while
/// the stored feedback keeps zero rows for clamped components.
struct StepLaw {
  FeedbackLaw law;
  Mat24 K_recursion = Mat24::Zero();
  BoxQpResult qp;
};

inline StepLaw assemble_step_law(const QCoefficients& q, const Vec2& lo,
                                 const Vec2& hi, const Mat24& x_lower,
                                 const Mat24& x_upper, int max_changes = 20) {
  StepLaw s;
  s.qp = solve_box_qp(q.Quu, q.Qu, lo, hi, max_changes);
  if (s.qp.failed) return s;

  Mat24 x_active = Mat24::Zero();
  for (int i = 0; i < 2; ++i) {
    if (s.qp.active[i] == -1) x_active.row(i) = x_lower.row(i);
    if (s.qp.active[i] == +1) x_active.row(i) = x_upper.row(i);
  }
  s.law.k_ff = s.qp.u;
  // Free rows react to the state directly and to the active components'
  // bound tracking; active rows of free_inverse are zero, so clamped rows
  // of the stored feedback vanish.
  s.law.K_fb = -s.qp.free_inverse * (q.Qux + q.Quu * x_active);
  s.K_recursion = s.law.K_fb + x_active;
  return s;
}

struct BackwardPassResult {
  bool success = false;
  std::vector<StepLaw> steps;  // size K on success
  int failure_step = -1;
  int active_count = 0;  // clamped components across the horizon
};

/// One backward sweep at fixed regularization mu over a nominal trajectory,
/// using the given frozen per-stage ellipse sets.
inline BackwardPassResult backward_pass(
    const ocp::OcpProblem& problem,
    const std::vector<std::vector<ocp::ObstacleEllipse>>& ellipses,
    const std::vector<VehicleState>& states,
    const std::vector<ControlInput>& controls, double mu,
    const SolverConfig& config = {}) {
  if (static_cast<int>(states.size()) != problem.K + 1 ||
      static_cast<int>(controls.size()) != problem.K) {
    throw std::invalid_argument("backward_pass: trajectory length mismatch");
  }
  if (!(mu >= 0.0) || !std::isfinite(mu)) {
    throw std::invalid_argument("backward_pass: bad mu");
  }

  const Mat4 A = dynamics::state_jacobian(problem.params.T);
  const Mat42 B = dynamics::control_jacobian(problem.params.T);

  BackwardPassResult result;
  result.steps.assign(problem.K, {});

  Vec4 Vx = Vec4::Zero();
  Mat4 Vxx = Mat4::Zero();  // no terminal cost

  for (int k = problem.K - 1; k >= 0; --k) {
    const auto d = ocp::stage_derivatives_core(ellipses[k], problem.weights,
                                               states[k], controls[k]);
    QCoefficients q;
    q.Qx = d.Lx + A.transpose() * Vx;
    q.Qu = d.Lu + B.transpose() * Vx;
    q.Qxx = d.Lxx + A.transpose() * Vxx * A;
    q.Qux = d.Lux + B.transpose() * Vxx * A;
    q.Quu = d.Luu + B.transpose() * Vxx * B;
    q.Qxx = 0.5 * (q.Qxx + q.Qxx.transpose()).eval();
    q.Quu = 0.5 * (q.Quu + q.Quu.transpose()).eval();
    q.Quu += mu * Mat2::Identity();

    const auto bounds =
        dynamics::control_bounds(states[k], problem.params, problem.road);
    Vec2 lo(bounds.lower.ux, bounds.lower.uy);
    Vec2 hi(bounds.upper.ux, bounds.upper.uy);
    if (bounds.degenerate) {
      lo(1) = bounds.raw_uy_lower;  // boundary interval outranks comfort
      hi(1) = bounds.raw_uy_upper;
    }
    const Vec2 ubar = controls[k].vec();
    const auto J = dynamics::bound_jacobians(states[k], problem.params,
                                             problem.road);
    StepLaw step = assemble_step_law(q, lo - ubar, hi - ubar, J.lower, J.upper,
                                     config.qp_max_changes);
    if (step.qp.failed) {
      result.failure_step = k;
      return result;
    }
    result.active_count += (step.qp.active[0] != 0) + (step.qp.active[1] != 0);

    const Mat24& Kr = step.K_recursion;
    const Vec2& kf = step.law.k_ff;
    Vx = q.Qx + Kr.transpose() * (q.Qu + q.Quu * kf) + q.Qux.transpose() * kf;
    Mat4 Vxx_new = q.Qxx + Kr.transpose() * q.Qux +
                   q.Qux.transpose() * Kr + Kr.transpose() * q.Quu * Kr;
    Vxx = 0.5 * (Vxx_new + Vxx_new.transpose());

    result.steps[k] = std::move(step);
  }
  result.success = true;
  return result;
}

struct Candidate {
  std::vector<VehicleState> states;
  std::vector<ControlInput> controls;
  double cost = std::numeric_limits<double>::infinity();
  bool ok = false;
};

/// Rollout of the affine laws at step size alpha, clipping every control to
/// the state-dependent bounds evaluated at the rolled-out state. alpha scales
/// the feedforward only.
inline Candidate forward_pass(
    const ocp::OcpProblem& problem,
    const std::vector<std::vector<ocp::ObstacleEllipse>>& ellipses,
    const std::vector<VehicleState>& nominal_states,
    const std::vector<ControlInput>& nominal_controls,
    const std::vector<StepLaw>& laws, double alpha) {
  Candidate c;
  c.states.reserve(problem.K + 1);
  c.controls.reserve(problem.K);
  c.states.push_back(problem.x0);
  double cost = 0.0;
  for (int k = 0; k < problem.K; ++k) {
    const VehicleState& x = c.states.back();
    const Vec4 dx = x.vec() - nominal_states[k].vec();
    const Vec2 u_raw = nominal_controls[k].vec() + alpha * laws[k].law.k_ff +
                       laws[k].law.K_fb * dx;
    ControlInput u = ControlInput::FromVec(u_raw);
    if (!u.finite()) return c;
    const auto bounds = dynamics::control_bounds(x, problem.params, problem.road);
    u = dynamics::clamp(u, bounds);
    cost += ocp::stage_cost_core(ellipses[k], problem.weights, x, u);
    c.controls.push_back(u);
    c.states.push_back(dynamics::step(x, u, problem.params.T));
    if (!c.states.back().finite() || !std::isfinite(cost)) return c;
  }
  c.cost = cost;
  c.ok = true;
  return c;
}

/// Clipped rollout of a raw control sequence from the problem's start state.
inline Candidate rollout(const ocp::OcpProblem& problem,
                         const std::vector<std::vector<ocp::ObstacleEllipse>>&
                             ellipses,
                         const std::vector<ControlInput>& controls) {
  Candidate c;
  c.states.push_back(problem.x0);
  double cost = 0.0;
  for (int k = 0; k < problem.K; ++k) {
    const VehicleState& x = c.states.back();
    if (!controls[k].finite()) {
      throw std::invalid_argument("rollout: non-finite initial control");
    }
    const auto bounds = dynamics::control_bounds(x, problem.params, problem.road);
    const ControlInput u = dynamics::clamp(controls[k], bounds);
    cost += ocp::stage_cost_core(ellipses[k], problem.weights, x, u);
    c.controls.push_back(u);
    c.states.push_back(dynamics::step(x, u, problem.params.T));
  }
  c.cost = cost;
  c.ok = true;
  return c;
}

/// Events recorded per outer iteration: every mu the backward retry ladder
/// attempted, the accepted step size (0 when none), and the resulting cost.
struct IterationTelemetry {
  int iteration = 0;
  std::vector<double> mu_attempts;
  double alpha = 0.0;
  double cost = 0.0;
  bool accepted = false;
  double control_change = std::numeric_limits<double>::infinity();
  int active_count = 0;
};

struct SolverResult {
  std::vector<VehicleState> states;
  std::vector<ControlInput> controls;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  SolveStatus status = SolveStatus::kMaxIterations;
  double final_mu = 0.0;
  std::vector<double> cost_log;  // initial cost, then each accepted cost
  std::vector<IterationTelemetry> telemetry;

  bool converged() const { return status == SolveStatus::kConverged; }
};

inline double control_change_norm(const std::vector<ControlInput>& a,
                                  const std::vector<ControlInput>& b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sq += (a[k].vec() - b[k].vec()).squaredNorm();
  }
  return std::sqrt(sq);
}

/// Full solve: backward pass with the retry-and-increase schedule, forward
/// line search over the step-size ladder, convergence on the control-change
/// norm. Returns the best-so-far trajectory on every exit path.
inline SolverResult solve(const ocp::OcpProblem& problem,
                          const std::vector<ControlInput>& initial_controls,
                          const SolverConfig& config = {}) {
  problem.validate();
  config.validate();
  if (static_cast<int>(initial_controls.size()) != problem.K) {
    throw std::invalid_argument("solve: initial controls size != K");
  }

  SolverResult out;
  double mu = config.mu_min;

  auto ellipses = problem.ellipses;
  const auto cost_under_frozen = [&](const Candidate& c) {
    double total = 0.0;
    for (int k = 0; k < problem.K; ++k) {
      total += ocp::stage_cost_core(ellipses[k], problem.weights, c.states[k],
                                    c.controls[k]);
    }
    return total;
  };

  Candidate nominal = rollout(problem, ellipses, initial_controls);
  if (!problem.tracks.empty()) {
    // Track-built problems re-freeze the speed-dependent scales on the
    // actual clipped nominal before the first backward pass.
    ellipses = ocp::freeze_ellipses(problem, nominal.states);
    nominal.cost = cost_under_frozen(nominal);
  }
  out.cost_log.push_back(nominal.cost);

  auto finish = [&](SolveStatus status, int iterations) {
    out.states = nominal.states;
    out.controls = nominal.controls;
    out.cost = nominal.cost;
    out.iterations = iterations;
    out.status = status;
    out.final_mu = mu;
    return out;
  };

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    IterationTelemetry tel;
    tel.iteration = iter;

    if (!problem.tracks.empty() && iter > 1) {
      ellipses = ocp::freeze_ellipses(problem, nominal.states);
      nominal.cost = cost_under_frozen(nominal);
    }

    // Backward pass with the retry ladder: on failure mu <- min(gamma*mu,
    // mu_max); reaching mu_max terminates as ill-conditioned.
    BackwardPassResult bp;
    while (true) {
      tel.mu_attempts.push_back(mu);
      bp = backward_pass(problem, ellipses, nominal.states, nominal.controls,
                         mu, config);
      if (bp.success) break;
      mu = std::min(config.gamma * mu, config.mu_max);
      if (mu >= config.mu_max) {
        tel.cost = nominal.cost;
        out.telemetry.push_back(std::move(tel));
        return finish(SolveStatus::kIllConditioned, iter);
      }
    }
    tel.active_count = bp.active_count;

    bool accepted = false;
    double full_step_change = std::numeric_limits<double>::infinity();
    for (double alpha : config.step_sizes) {
      Candidate cand = forward_pass(problem, ellipses, nominal.states,
                                    nominal.controls, bp.steps, alpha);
      if (!cand.ok) continue;
      const double change = control_change_norm(cand.controls,
                                                nominal.controls);
      if (alpha == config.step_sizes.front()) full_step_change = change;
      if (cand.cost < nominal.cost) {
        nominal = std::move(cand);
        mu = std::max(mu / config.gamma, config.mu_min);
        accepted = true;
        out.cost_log.push_back(nominal.cost);
        tel.alpha = alpha;
        tel.cost = nominal.cost;
        tel.accepted = true;
        tel.control_change = change;
        out.telemetry.push_back(std::move(tel));
        if (change < config.epsilon_1) {
          return finish(SolveStatus::kConverged, iter);
        }
        break;
      }
    }
    if (accepted) continue;

    tel.cost = nominal.cost;
    tel.control_change = full_step_change;
    out.telemetry.push_back(std::move(tel));
    // No improving step. A full-step candidate that barely moves the
    // controls means the current nominal is stationary; otherwise treat the
    // line-search failure like a conditioning problem.
    if (full_step_change < config.epsilon_1) {
      return finish(SolveStatus::kConverged, iter);
    }
    mu = std::min(config.gamma * mu, config.mu_max);
    if (mu >= config.mu_max) {
      return finish(SolveStatus::kIllConditioned, iter);
    }
  }
  return finish(SolveStatus::kMaxIterations, config.max_iterations);
}

}  // namespace visiopath::ddp

#endif  // VISIOPATH_DDP_HPP
