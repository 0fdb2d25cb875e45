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

#ifndef VISIOPATH_MPC_HPP
#define VISIOPATH_MPC_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "visiopath/ddp.hpp"
#include "visiopath/dynamics.hpp"
#include "visiopath/ocp.hpp"
#include "visiopath/perception.hpp"
#include "visiopath/reference.hpp"
#include "visiopath/safety.hpp"
#include "visiopath/spline.hpp"
#include "visiopath/types.hpp"

namespace visiopath::mpc {

// ---------------------------------------------------------------------------
// Replan triggers
// ---------------------------------------------------------------------------

/// Obstacle snapshot captured at the last replan: the base of the
/// constant-velocity prediction that the deviation trigger measures against.
struct TrackedObstacle {
  int id = -1;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  int lane_index = 0;
};

/// Trigger bookkeeping carried between control cycles.
struct TriggerState {
  bool has_plan = false;
  double t_last = 0.0;   // time of the last replan
  double horizon = 3.0;  // planning horizon duration T_h [s]
  double dt_min = 1.0;   // minimum interval between triggered replans [s]
  double deviation_threshold = 2.0;  // prediction deviation that fires [m]
  std::vector<TrackedObstacle> previous;  // observation snapshot at t_last

  void validate() const {
    if (!(horizon > 0.0) || !(dt_min > 0.0) || !(deviation_threshold > 0.0)) {
      throw std::invalid_argument("TriggerState: non-positive threshold");
    }
  }

  void record_replan(double now, const perception::ObservationSet& set) {
    has_plan = true;
    t_last = now;
    previous.clear();
    previous.reserve(set.observations.size());
    for (const auto& obs : set.observations) {
      previous.push_back(
          {obs.id, Vec2(obs.x, obs.y), obs.velocity, obs.lane_index});
    }
  }
};

/// One trigger evaluation. The individual criteria are reported raw, before
/// the minimum-interval suppression, so callers can see what would have
/// fired; `replan` is the actionable verdict.
struct ReplanDecision {
  bool replan = false;
  bool first_cycle = false;  // no previous plan exists yet
  bool c1_horizon = false;   // elapsed time reached the planning horizon
  bool c2_count = false;     // observation count strictly increased
  bool c3_deviation = false;  // prediction deviation above threshold
  bool c4_lane = false;       // a tracked obstacle changed lane
  bool suppressed = false;    // criteria fired inside the minimum interval
  double max_deviation = 0.0;  // largest measured prediction deviation [m]
};

/// Event-trigger evaluation: elapsed horizon, obstacle-count growth,
/// prediction deviation beyond the threshold, and lane changes, with the
/// whole disjunction suppressed inside the minimum replan interval. Matching
/// between frames is by observation id; obstacles without history only
/// influence the count criterion.
inline ReplanDecision should_replan(double now, const TriggerState& trigger,
                                    const perception::ObservationSet& current) {
  trigger.validate();
  ReplanDecision d;
  if (!trigger.has_plan) {
    d.replan = true;
    d.first_cycle = true;
    return d;
  }
  if (now < trigger.t_last - 1e-12) {
    throw std::invalid_argument("should_replan: time moved backwards");
  }
  const double dt = now - trigger.t_last;
  d.c1_horizon = dt >= trigger.horizon;
  d.c2_count = current.observations.size() > trigger.previous.size();
  for (const auto& obs : current.observations) {
    for (const auto& prev : trigger.previous) {
      if (prev.id != obs.id) continue;
      const Vec2 predicted = prev.position + dt * prev.velocity;
      const double deviation = (Vec2(obs.x, obs.y) - predicted).norm();
      d.max_deviation = std::max(d.max_deviation, deviation);
      if (std::abs(obs.lane_index - prev.lane_index) >= 1) d.c4_lane = true;
      break;
    }
  }
  d.c3_deviation = d.max_deviation > trigger.deviation_threshold;
  const bool any = d.c1_horizon || d.c2_count || d.c3_deviation || d.c4_lane;
  d.suppressed = any && dt < trigger.dt_min;
  d.replan = any && !d.suppressed;
  return d;
}

// ---------------------------------------------------------------------------
// Obstacle prioritization
// ---------------------------------------------------------------------------

/// Criticality score: longitudinal offset for vehicles at or ahead of the
/// ego, the same offset pushed down by 1000 for vehicles behind.
inline double priority_score(double ego_x, double obstacle_x) {
  const double offset = obstacle_x - ego_x;
  return obstacle_x >= ego_x ? offset : offset - 1000.0;
}

/// Orders observations by criticality and truncates to the cap: vehicles
/// ahead come first, nearest first; vehicles behind follow, nearest first.
/// Equal positions tie-break on observation id for determinism.
inline std::vector<perception::ObstacleObservation> prioritize(
    double ego_x, const std::vector<perception::ObstacleObservation>& observations,
    int cap) {
  if (cap < 1) throw std::invalid_argument("prioritize: cap < 1");
  std::vector<perception::ObstacleObservation> out = observations;
  std::sort(out.begin(), out.end(),
            [ego_x](const auto& a, const auto& b) {
              const double sa = std::abs(priority_score(ego_x, a.x));
              const double sb = std::abs(priority_score(ego_x, b.x));
              if (sa != sb) return sa < sb;
              return a.id < b.id;
            });
  if (static_cast<int>(out.size()) > cap) out.resize(static_cast<std::size_t>(cap));
  return out;
}

inline std::vector<perception::ObstacleObservation> prioritize(
    double ego_x, const perception::ObservationSet& set, int cap) {
  return prioritize(ego_x, set.observations, cap);
}

// ---------------------------------------------------------------------------
// Control-sequence initialization
// ---------------------------------------------------------------------------

namespace detail {

/// Extends a trajectory with coasting (zero commanded acceleration, clipped
/// to the feasible box) until it covers `target_size` states, so safety
/// verification always has a full window to inspect.
inline std::vector<VehicleState> extend_with_coast(
    std::vector<VehicleState> trajectory, int target_size,
    const VehicleParams& params, const RoadGeometry& road) {
  while (static_cast<int>(trajectory.size()) < target_size) {
    const auto bounds =
        dynamics::control_bounds(trajectory.back(), params, road);
    const ControlInput u = dynamics::clamp({0.0, 0.0}, bounds);
    trajectory.push_back(dynamics::step(trajectory.back(), u, params.T));
  }
  return trajectory;
}

}  // namespace detail

struct InitializationResult {
  std::vector<ControlInput> controls;
  bool used_reference = false;
  bool rejected_reference = false;  // reference present but unusable
};

/// Converts an optional waypoint reference into an initial control sequence:
/// fit natural cubic splines through the waypoints, resample at the control
/// period, differentiate positions twice, and clip each sample to the
/// state-dependent bounds along the implied rollout. A missing reference
/// yields zeros; a malformed reference, or one whose rollout the safety
/// check finds unsafe against the given obstacles, is rejected in favor of
/// zeros with the rejection flagged. The safety configuration's sampling
/// period must match the vehicle's control period.
inline InitializationResult initialize_controls(
    const std::optional<std::vector<reference::Waypoint>>& reference,
    const VehicleState& current, int K, const VehicleParams& params,
    const RoadGeometry& road,
    const std::vector<perception::ObstacleObservation>& obstacles,
    const safety::SafetyConfig& safety_cfg = {}) {
  if (K < 1) throw std::invalid_argument("initialize_controls: K < 1");
  if (!current.finite()) {
    throw std::invalid_argument("initialize_controls: non-finite state");
  }
  params.validate();
  road.validate();

  InitializationResult out;
  out.controls.assign(static_cast<std::size_t>(K), ControlInput{});
  if (!reference.has_value()) return out;

  const auto& wp = *reference;
  bool well_formed = wp.size() >= 2;
  for (std::size_t i = 0; well_formed && i < wp.size(); ++i) {
    well_formed = std::isfinite(wp[i].t) && std::isfinite(wp[i].x) &&
                  std::isfinite(wp[i].y) && (i == 0 || wp[i].t > wp[i - 1].t);
  }
  if (!well_formed) {
    out.rejected_reference = true;
    return out;
  }

  std::vector<double> ts(wp.size()), xs(wp.size()), ys(wp.size());
  for (std::size_t i = 0; i < wp.size(); ++i) {
    ts[i] = wp[i].t;
    xs[i] = wp[i].x;
    ys[i] = wp[i].y;
  }
  const spline::NaturalCubic sx(ts, xs);
  const spline::NaturalCubic sy(std::move(ts), std::move(ys));

  // Resample positions at the control period, then difference twice:
  // velocities between consecutive samples, accelerations between
  // consecutive velocities.
  const double T = params.T;
  std::vector<Vec2> p(static_cast<std::size_t>(K) + 2);
  for (int k = 0; k <= K + 1; ++k) {
    p[static_cast<std::size_t>(k)] = Vec2(sx.value(k * T), sy.value(k * T));
  }
  std::vector<Vec2> v(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) {
    v[static_cast<std::size_t>(k)] =
        (p[static_cast<std::size_t>(k) + 1] - p[static_cast<std::size_t>(k)]) / T;
  }

  // Clip along the rollout so the sequence is feasible from the real state.
  std::vector<VehicleState> trajectory;
  trajectory.reserve(static_cast<std::size_t>(K) + 1);
  trajectory.push_back(current);
  std::vector<ControlInput> controls(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const Vec2 a = (v[static_cast<std::size_t>(k) + 1] -
                    v[static_cast<std::size_t>(k)]) / T;
    const auto bounds =
        dynamics::control_bounds(trajectory.back(), params, road);
    controls[static_cast<std::size_t>(k)] =
        dynamics::clamp(ControlInput::FromVec(a), bounds);
    trajectory.push_back(dynamics::step(
        trajectory.back(), controls[static_cast<std::size_t>(k)], T));
  }

  const auto report = safety::verify(
      detail::extend_with_coast(std::move(trajectory), safety_cfg.steps() + 1,
                                params, road),
      obstacles, road, params, safety_cfg);
  if (report.unsafe) {
    out.rejected_reference = true;
    return out;
  }
  out.controls = std::move(controls);
  out.used_reference = true;
  return out;
}

// ---------------------------------------------------------------------------
// Speed management
// ---------------------------------------------------------------------------

/// Adaptive speed-management parameters: nominal cruise target, the
/// progressive ramp, leader-following ranges, and the command delta limit.
struct SpeedPolicy {
  double v_nominal = 15.0;          // free-flow target [m/s]
  double ramp_step = 0.5;           // progressive increment [m/s]
  double ramp_period = 4.0;         // seconds between increments
  double follow_near = 20.0;        // full leader-following inside this [m]
  double follow_far = 50.0;         // leader influence ends beyond this [m]
  double leader_factor = 0.95;      // fraction of leader speed to track
  double command_delta_limit = 1.0;  // speed-command change cap [m/s]

  void validate() const {
    if (!(v_nominal > 0.0) || !(ramp_step > 0.0) || !(ramp_period > 0.0) ||
        !(follow_near > 0.0) || !(follow_far > 0.0) ||
        !(leader_factor > 0.0) || !(command_delta_limit > 0.0)) {
      throw std::invalid_argument("SpeedPolicy: non-positive field");
    }
    if (!(follow_near < follow_far)) {
      throw std::invalid_argument("SpeedPolicy: follow ranges out of order");
    }
  }
};

/// Nearest vehicle ahead in the ego's lane: center distance and speed.
struct Leader {
  double distance = 0.0;  // center-to-center [m], > 0
  double speed = 0.0;     // leader longitudinal speed [m/s]
};

/// Picks the nearest vehicle strictly ahead whose lateral offset from the
/// ego is under half a lane width (same-lane membership).
inline std::optional<Leader> find_leader(
    const VehicleState& ego,
    const std::vector<perception::ObstacleObservation>& observations,
    const RoadGeometry& road) {
  std::optional<Leader> best;
  for (const auto& obs : observations) {
    if (std::abs(obs.y - ego.y) >= 0.5 * road.lane_width) continue;
    const double d = obs.x - ego.x;
    if (d <= 0.0) continue;
    if (!best || d < best->distance) best = Leader{d, obs.velocity.x()};
  }
  return best;
}

struct SpeedDecision {
  double value = 0.0;
  bool leader_binding = false;  // the leader branch lowered the target
};

/// Desired-speed selection with leader awareness. Without a leader in range
/// the target is the progressive ramp: the current speed plus one increment
/// per elapsed ramp period, capped at nominal. Inside the far range the
/// leader's speed takes over, blended with the current speed between the
/// near and far distances. `elapsed` is the time since the ramp was last
/// anchored (negative values are treated as zero).
inline SpeedDecision desired_speed_detail(const SpeedPolicy& policy,
                                          const std::optional<Leader>& leader,
                                          double v_current, double elapsed) {
  policy.validate();
  if (!std::isfinite(v_current)) {
    throw std::invalid_argument("desired_speed: non-finite speed");
  }
  if (leader && !(leader->distance > 0.0)) {
    throw std::invalid_argument("desired_speed: leader distance must be > 0");
  }
  const double steps = std::floor(std::max(elapsed, 0.0) / policy.ramp_period);
  const double ramp =
      std::min(policy.v_nominal, v_current + policy.ramp_step * steps);
  if (!leader || leader->distance > policy.follow_far) {
    return {ramp, false};
  }
  const double follow_speed = policy.leader_factor * leader->speed;
  double value;
  if (leader->distance <= policy.follow_near) {
    value = std::min(policy.v_nominal, follow_speed);
  } else {
    const double w = 1.0 - (leader->distance - policy.follow_near) /
                               (policy.follow_far - policy.follow_near);
    value = std::min(policy.v_nominal,
                     w * follow_speed + (1.0 - w) * v_current);
  }
  return {value, value < ramp - 1e-12};
}

inline double desired_speed(const SpeedPolicy& policy,
                            const std::optional<Leader>& leader,
                            double v_current, double elapsed) {
  return desired_speed_detail(policy, leader, v_current, elapsed).value;
}

/// Saturated speed command: moves from the current speed toward the target
/// by at most the delta limit per invocation.
inline double shape_speed_command(double v_current, double v_target,
                                  double delta_limit = 1.0) {
  if (!std::isfinite(v_current) || !std::isfinite(v_target)) {
    throw std::invalid_argument("shape_speed_command: non-finite speed");
  }
  if (!(delta_limit > 0.0)) {
    throw std::invalid_argument("shape_speed_command: non-positive limit");
  }
  return v_current +
         std::clamp(v_target - v_current, -delta_limit, delta_limit);
}

// ---------------------------------------------------------------------------
// Coordinator
// ---------------------------------------------------------------------------

struct MpcConfig {
  int K = 30;  // planning horizon steps; T_h = K * params.T
  VehicleParams params;
  RoadGeometry road;
  ocp::CostWeights weights;  // v_des is overwritten each replan
  ddp::SolverConfig solver;
  safety::SafetyConfig safety;
  SpeedPolicy speed;

  double dt_min = 1.0;               // minimum triggered-replan interval [s]
  double deviation_threshold = 2.0;  // prediction-deviation trigger [m]
  int obstacle_cap = 6;              // prioritized obstacles in the OCP
  int escalation_attempts = 3;       // weight-doubling re-solves after the first
  double lambda_default = 50.0;      // obstacle weight at the first attempt
  double tau = 1.0;                  // reaction-time scale for the ellipses
  bool safety_gate = true;    // escalation/emergency on; off keeps telemetry only
  bool fixed_interval = false;  // replan every cycle, bypassing the triggers

  enum class Initializer { kZero, kReference };
  Initializer initializer = Initializer::kZero;

  double horizon() const { return K * params.T; }

  void validate() const {
    if (K < 1) throw std::invalid_argument("MpcConfig: K < 1");
    params.validate();
    road.validate();
    weights.validate();
    solver.validate();
    safety.validate();
    speed.validate();
    if (std::abs(safety.T - params.T) > 1e-12) {
      throw std::invalid_argument(
          "MpcConfig: safety sampling period must equal the control period");
    }
    if (!(dt_min > 0.0) || !(deviation_threshold > 0.0)) {
      throw std::invalid_argument("MpcConfig: non-positive trigger threshold");
    }
    if (obstacle_cap < 1 || escalation_attempts < 0) {
      throw std::invalid_argument("MpcConfig: malformed attempt limits");
    }
    if (!(lambda_default > 0.0) || !(tau > 0.0)) {
      throw std::invalid_argument("MpcConfig: non-positive weight or tau");
    }
  }
};

/// Everything one control cycle produced, in trace-ready form.
struct CycleResult {
  double now = 0.0;
  ControlInput applied;
  double v_desired = 0.0;  // speed target handed to the OCP / policy value
  double v_command = 0.0;  // shaped speed command for the actuation layer

  ReplanDecision decision;
  bool replanned = false;
  bool continuation_replan = false;  // forced by failed continuation check
  bool emergency = false;            // maximum-braking fallback engaged
  bool dangerous = false;            // applied plan still flagged high-risk
  bool used_reference = false;
  bool reference_rejected = false;

  int attempts = 0;           // solver invocations this cycle
  int solve_iterations = 0;   // iterations of the accepted solve
  int cycle_iterations = 0;   // iterations summed over all invocations
  std::optional<ddp::SolverResult> solve;  // accepted (or last) solve
  safety::SafetyReport report;             // verification of the applied plan
  std::vector<ControlInput> warm_start;    // sequence handed to the solver
  int plan_cursor = 0;  // index of the applied control within the cached plan
};

/// Event-triggered receding-horizon coordinator. Each cycle consumes an
/// immutable perception snapshot plus the measured ego state, decides
/// whether to replan, runs the solver with escalated obstacle weights until
/// the safety check passes (or falls back to maximum braking), and hands out
/// exactly one control. Strictly sequential: one cycle at a time.
class Coordinator {
 public:
  using ReferenceProvider =
      std::function<std::optional<std::vector<reference::Waypoint>>(
          const VehicleState&, const perception::ObservationSet&)>;

  explicit Coordinator(MpcConfig config, ReferenceProvider provider = {})
      : cfg_(std::move(config)), provider_(std::move(provider)) {
    cfg_.validate();
    trigger_.horizon = cfg_.horizon();
    trigger_.dt_min = cfg_.dt_min;
    trigger_.deviation_threshold = cfg_.deviation_threshold;
  }

  CycleResult cycle(double now, const VehicleState& ego,
                    const perception::ObservationSet& observations) {
    if (!ego.finite() || !std::isfinite(now)) {
      throw std::invalid_argument("cycle: non-finite input");
    }
    CycleResult out;
    out.now = now;

    // Speed-policy bookkeeping runs every cycle so the progressive ramp
    // anchors to the moment the leader constraint was last binding.
    if (!started_) {
      ramp_start_ = now;
      started_ = true;
    }
    const auto leader = find_leader(ego, observations.observations, cfg_.road);
    const auto speed = desired_speed_detail(cfg_.speed, leader, ego.vx,
                                            now - ramp_start_);
    if (speed.leader_binding) ramp_start_ = now;
    out.v_desired = speed.value;

    if (cfg_.fixed_interval) {
      out.decision.replan = true;
      out.decision.first_cycle = !trigger_.has_plan;
    } else {
      out.decision = should_replan(now, trigger_, observations);
    }

    bool do_replan = out.decision.replan;
    if (!do_replan) {
      if (try_continuation(ego, observations, out)) return out;
      do_replan = true;
      out.continuation_replan = true;
    }
    replan(now, ego, observations, speed.value, out);
    return out;
  }

  const std::vector<ControlInput>& plan() const { return plan_; }
  const std::vector<VehicleState>& plan_states() const { return plan_states_; }
  int plan_cursor() const { return cursor_; }
  const TriggerState& trigger() const { return trigger_; }
  const MpcConfig& config() const { return cfg_; }

  long total_solves() const { return total_solves_; }
  long total_iterations() const { return total_iterations_; }
  int replan_count() const { return replans_; }

 private:
  // Continuation path: verify the remaining cached plan from the measured
  // state; on success apply its next control. Returns false when the plan is
  // exhausted or (with the gate on) predicted unsafe, forcing a replan that
  // bypasses the minimum-interval constraint.
  bool try_continuation(const VehicleState& ego,
                        const perception::ObservationSet& observations,
                        CycleResult& out) {
    if (cursor_ >= static_cast<int>(plan_.size())) return false;

    std::vector<VehicleState> tail;
    tail.reserve(plan_.size() - static_cast<std::size_t>(cursor_) + 1);
    tail.push_back(ego);
    for (std::size_t j = static_cast<std::size_t>(cursor_); j < plan_.size();
         ++j) {
      const auto bounds =
          dynamics::control_bounds(tail.back(), cfg_.params, cfg_.road);
      tail.push_back(dynamics::step(
          tail.back(), dynamics::clamp(plan_[j], bounds), cfg_.params.T));
    }
    out.report = safety::verify(
        detail::extend_with_coast(std::move(tail), cfg_.safety.steps() + 1,
                                  cfg_.params, cfg_.road),
        observations.observations, cfg_.road, cfg_.params, cfg_.safety);
    if (out.report.unsafe && cfg_.safety_gate) return false;

    out.dangerous = out.report.unsafe || out.report.high_risk;
    apply_from_plan(ego, out);
    return true;
  }

  void replan(double now, const VehicleState& ego,
              const perception::ObservationSet& observations, double v_des,
              CycleResult& out) {
    out.replanned = true;
    const auto prioritized =
        prioritize(ego.x, observations.observations, cfg_.obstacle_cap);

    // Warm start: a pure horizon-elapsed replan continues the shifted
    // previous solution; environment novelty re-initializes with the
    // configured method, since the cached plan reflects stale obstacles.
    const bool novelty = out.decision.first_cycle || out.decision.c2_count ||
                         out.decision.c3_deviation || out.decision.c4_lane ||
                         out.continuation_replan;
    std::vector<ControlInput> warm;
    if (!novelty && trigger_.has_plan) {
      warm = shifted_plan();
    } else {
      warm = initial_sequence(ego, observations, v_des, out);
    }
    out.warm_start = warm;

    // Solve, verify, and escalate the weights of flagged obstacles.
    std::map<int, double> lambda;
    std::set<int> prioritized_ids;
    for (const auto& obs : prioritized) prioritized_ids.insert(obs.id);

    const int max_attempts =
        1 + (cfg_.safety_gate ? cfg_.escalation_attempts : 0);
    ddp::SolverResult chosen;
    safety::SafetyReport report;
    std::vector<ControlInput> seed = warm;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      auto weights = cfg_.weights;
      weights.v_des = v_des;
      const auto problem =
          ocp::make_problem(cfg_.K, ego, weights, cfg_.params, cfg_.road,
                            make_tracks(prioritized, lambda), cfg_.tau);
      chosen = ddp::solve(problem, seed, cfg_.solver);
      ++out.attempts;
      ++total_solves_;
      total_iterations_ += chosen.iterations;
      out.cycle_iterations += chosen.iterations;

      report = safety::verify(
          detail::extend_with_coast(chosen.states, cfg_.safety.steps() + 1,
                                    cfg_.params, cfg_.road),
          observations.observations, cfg_.road, cfg_.params, cfg_.safety);
      if (!report.unsafe && !report.high_risk) break;
      if (!cfg_.safety_gate) break;
      if (attempt + 1 >= max_attempts) break;

      // Double the repulsive weight of every flagged prioritized obstacle.
      // Flags on obstacles outside the OCP (or boundary-only unsafety)
      // cannot be escalated away, so stop early in that case.
      std::set<int> flagged;
      for (int j = 0; j < report.obstacle_count; ++j) {
        for (int m = 1; m <= report.steps; ++m) {
          if (report.flag(report.collision, j, m) ||
              report.flag(report.ttc_violation, j, m) ||
              report.flag(report.lateral_violation, j, m)) {
            const int id = observations.observations[static_cast<std::size_t>(j)].id;
            if (prioritized_ids.count(id)) flagged.insert(id);
            break;
          }
        }
      }
      if (flagged.empty()) break;
      for (const int id : flagged) {
        auto it = lambda.find(id);
        const double current =
            it == lambda.end() ? cfg_.lambda_default : it->second;
        lambda[id] = 2.0 * current;
      }
      seed = chosen.controls;
    }

    const bool clean = !report.unsafe && !report.high_risk;
    if (!clean && cfg_.safety_gate && report.unsafe) {
      engage_emergency(ego, out);
      out.solve = std::move(chosen);
      out.solve_iterations = out.solve->iterations;
    } else {
      // Accept: either clean, gate off, or high-risk-only after exhausting
      // escalation (most conservative candidate, logged as dangerous).
      plan_ = chosen.controls;
      plan_states_ = chosen.states;
      out.dangerous = !clean;
      out.solve_iterations = chosen.iterations;
      out.solve = std::move(chosen);
    }
    out.report = report;
    if (out.emergency) {
      out.report = safety::verify(
          detail::extend_with_coast(plan_states_, cfg_.safety.steps() + 1,
                                    cfg_.params, cfg_.road),
          observations.observations, cfg_.road, cfg_.params, cfg_.safety);
    }

    trigger_.record_replan(now, observations);
    ++replans_;
    cursor_ = 0;
    apply_from_plan(ego, out);
  }

  void apply_from_plan(const VehicleState& ego, CycleResult& out) {
    const auto bounds = dynamics::control_bounds(ego, cfg_.params, cfg_.road);
    out.applied = dynamics::clamp(plan_[static_cast<std::size_t>(cursor_)], bounds);
    out.plan_cursor = cursor_;
    const double v_target =
        plan_states_[static_cast<std::size_t>(cursor_) + 1].vx;
    out.v_command = shape_speed_command(ego.vx, v_target,
                                        cfg_.speed.command_delta_limit);
    ++cursor_;
  }

  std::vector<ControlInput> shifted_plan() const {
    std::vector<ControlInput> warm(static_cast<std::size_t>(cfg_.K));
    const std::size_t rem =
        plan_.size() - std::min<std::size_t>(plan_.size(),
                                             static_cast<std::size_t>(cursor_));
    for (std::size_t i = 0; i < warm.size(); ++i) {
      warm[i] = i < rem ? plan_[static_cast<std::size_t>(cursor_) + i]
                        : plan_.back();
    }
    return warm;
  }

  std::vector<ControlInput> initial_sequence(
      const VehicleState& ego, const perception::ObservationSet& observations,
      double v_des, CycleResult& out) {
    if (cfg_.initializer == MpcConfig::Initializer::kZero) {
      return std::vector<ControlInput>(static_cast<std::size_t>(cfg_.K));
    }
    std::optional<std::vector<reference::Waypoint>> waypoints;
    if (provider_) {
      waypoints = provider_(ego, observations);
    } else {
      waypoints = reference::generate(ego, observations.observations,
                                      cfg_.road, cfg_.params, v_des, cfg_.K)
                      .waypoints;
    }
    auto init = initialize_controls(waypoints, ego, cfg_.K, cfg_.params,
                                    cfg_.road, observations.observations,
                                    cfg_.safety);
    out.used_reference = init.used_reference;
    out.reference_rejected = init.rejected_reference;
    return std::move(init.controls);
  }

  std::vector<ocp::ObstacleTrack> make_tracks(
      const std::vector<perception::ObstacleObservation>& prioritized,
      const std::map<int, double>& lambda) const {
    std::vector<ocp::ObstacleTrack> tracks;
    tracks.reserve(prioritized.size());
    for (const auto& obs : prioritized) {
      ocp::ObstacleTrack tr;
      tr.x0 = obs.x;
      tr.y0 = obs.y;
      tr.vx = obs.velocity.x();
      tr.vy = obs.velocity.y();
      tr.length = obs.length;
      const auto it = lambda.find(obs.id);
      tr.weight = it == lambda.end() ? cfg_.lambda_default : it->second;
      tracks.push_back(tr);
    }
    return tracks;
  }

  // Maximum braking that also arrests any lateral drift, clipped to the
  // feasible box at every rolled state (so a stopped vehicle stays stopped).
  // Commanding zero lateral acceleration instead would carry the current
  // lateral velocity across lane boundaries for the whole stop.
  void engage_emergency(const VehicleState& ego, CycleResult& out) {
    out.emergency = true;
    plan_.assign(static_cast<std::size_t>(cfg_.K), ControlInput{});
    plan_states_.assign(1, ego);
    plan_states_.reserve(static_cast<std::size_t>(cfg_.K) + 1);
    for (int k = 0; k < cfg_.K; ++k) {
      const VehicleState& s = plan_states_.back();
      const auto bounds = dynamics::control_bounds(s, cfg_.params, cfg_.road);
      const double uy_cancel = -s.vy / cfg_.params.T;
      plan_[static_cast<std::size_t>(k)] =
          dynamics::clamp({cfg_.params.ux_min, uy_cancel}, bounds);
      plan_states_.push_back(dynamics::step(
          plan_states_.back(), plan_[static_cast<std::size_t>(k)],
          cfg_.params.T));
    }
  }

  MpcConfig cfg_;
  ReferenceProvider provider_;
  TriggerState trigger_;
  std::vector<ControlInput> plan_;
  std::vector<VehicleState> plan_states_;
  int cursor_ = 0;
  bool started_ = false;
  double ramp_start_ = 0.0;
  long total_solves_ = 0;
  long total_iterations_ = 0;
  int replans_ = 0;
};

}  // namespace visiopath::mpc

#endif  // VISIOPATH_MPC_HPP
