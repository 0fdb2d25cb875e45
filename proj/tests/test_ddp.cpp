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
#include <vector>

#include "oracles.hpp"
#include "visiopath/ddp.hpp"
#include "visiopath/rng.hpp"

namespace {

using namespace visiopath;

ocp::OcpProblem obstacle_free_problem(int K, const VehicleState& x0,
                                      const ocp::CostWeights& w) {
  ocp::OcpProblem p;
  p.K = K;
  p.x0 = x0;
  p.weights = w;
  p.ellipses.assign(K, {});
  p.validate();
  return p;
}

// Quadratic-cost data matching the stage cost with no obstacle term, in the
// convention used by the Riccati oracle (x'Qx + q'x + u'Ru + c0 per stage).
struct LqrData {
  Eigen::MatrixXd A, B, Q, R;
  Eigen::VectorXd q;
  double c0;
};

LqrData lqr_data(const ocp::OcpProblem& p) {
  LqrData d;
  d.A = dynamics::state_jacobian(p.params.T);
  d.B = dynamics::control_jacobian(p.params.T);
  d.Q = Eigen::MatrixXd::Zero(4, 4);
  d.Q(2, 2) = p.weights.p3;
  d.Q(3, 3) = p.weights.p4;
  d.q = Eigen::VectorXd::Zero(4);
  d.q(2) = -2.0 * p.weights.p3 * p.weights.v_des;
  d.R = Eigen::MatrixXd::Zero(2, 2);
  d.R(0, 0) = p.weights.p1;
  d.R(1, 1) = p.weights.p2;
  d.c0 = p.weights.p3 * p.weights.v_des * p.weights.v_des;
  return d;
}

// Total cost of an unclipped rollout of a stacked control vector. Quadratic
// in U for obstacle-free problems, which is what the condensing oracle needs.
double unclipped_cost(const ocp::OcpProblem& p, const Eigen::VectorXd& U) {
  VehicleState x = p.x0;
  double cost = 0.0;
  for (int k = 0; k < p.K; ++k) {
    const ControlInput u{U(2 * k), U(2 * k + 1)};
    cost += ocp::stage_cost_core(p.ellipses[k], p.weights, x, u);
    x = dynamics::step(x, u, p.params.T);
  }
  return cost;
}

// Strictly-interior check against the state-dependent bounds, as evidence
// that clipping never engaged along the returned trajectory.
void require_unclamped(const ocp::OcpProblem& p,
                       const std::vector<VehicleState>& xs,
                       const std::vector<ControlInput>& us) {
  for (int k = 0; k < p.K; ++k) {
    const auto b = dynamics::control_bounds(xs[k], p.params, p.road);
    REQUIRE_FALSE(b.degenerate);
    REQUIRE(us[k].ux > b.lower.ux + 1e-9);
    REQUIRE(us[k].ux < b.upper.ux - 1e-9);
    REQUIRE(us[k].uy > b.lower.uy + 1e-9);
    REQUIRE(us[k].uy < b.upper.uy - 1e-9);
  }
}

TEST_CASE("backward pass at zero regularization reproduces Riccati gains",
          "[ddp]") {
  Rng rng(2301);
  for (int trial = 0; trial < 12; ++trial) {
    ocp::CostWeights w;
    w.p1 = rng.uniform(0.3, 2.0);
    w.p2 = rng.uniform(0.3, 2.0);
    w.p3 = rng.uniform(0.3, 2.0);
    w.p4 = rng.uniform(0.3, 2.0);
    w.v_des = rng.uniform(10.0, 20.0);
    VehicleState x0{0.0, rng.uniform(5.0, 7.8),
                    w.v_des + rng.uniform(-1.0, 1.0),
                    rng.uniform(-0.2, 0.2)};
    const int K = 5 + rng.uniform_int(0, 10);
    const auto p = obstacle_free_problem(K, x0, w);

    std::vector<ControlInput> us(K);
    for (auto& u : us) {
      u = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
    }
    const auto nominal = ddp::rollout(p, p.ellipses, us);
    REQUIRE(ddp::control_change_norm(nominal.controls, us) == 0.0);

    const auto bp = ddp::backward_pass(p, p.ellipses, nominal.states,
                                       nominal.controls, 0.0);
    REQUIRE(bp.success);
    REQUIRE(bp.active_count == 0);

    const auto d = lqr_data(p);
    const auto ric = oracles::riccati_solve(K, d.A, d.B, d.Q, d.q, d.R, d.c0);

    for (int k = 0; k < K; ++k) {
      const Mat24& Kfb = bp.steps[k].law.K_fb;
      CHECK((Kfb - ric.K[k]).lpNorm<Eigen::Infinity>() <
            1e-9 * std::max(1.0, ric.K[k].lpNorm<Eigen::Infinity>()));
      // Affine part of the policy around the nominal must match the global
      // affine term of the LQR law.
      const Vec2 affine = nominal.controls[k].vec() + bp.steps[k].law.k_ff -
                          Kfb * nominal.states[k].vec();
      CHECK((affine - ric.d[k]).lpNorm<Eigen::Infinity>() <
            1e-8 * std::max(1.0, ric.d[k].lpNorm<Eigen::Infinity>()));
    }
  }
}

TEST_CASE("solver matches the condensed-QP optimum when bounds stay inactive",
          "[ddp]") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    ocp::CostWeights w;
    w.p1 = rng.uniform(0.3, 2.0);
    w.p2 = rng.uniform(0.3, 2.0);
    w.p3 = rng.uniform(0.3, 2.0);
    w.p4 = rng.uniform(0.3, 2.0);
    w.v_des = rng.uniform(10.0, 20.0);
    VehicleState x0{0.0, rng.uniform(4.5, 8.3),
                    w.v_des + rng.uniform(-1.5, 1.5),
                    rng.uniform(-0.3, 0.3)};
    const int K = 8 + rng.uniform_int(0, 12);
    const auto p = obstacle_free_problem(K, x0, w);

    const auto qp = oracles::condense(
        [&](const Eigen::VectorXd& U) { return unclipped_cost(p, U); }, 2 * K);
    const double oracle_value = oracles::condensed_min_value(qp);

    // Cross-check the two oracles against each other before using either.
    const auto d = lqr_data(p);
    const auto ric = oracles::riccati_solve(K, d.A, d.B, d.Q, d.q, d.R, d.c0);
    CHECK(oracles::riccati_cost(ric, x0.vec()) ==
          Catch::Approx(oracle_value).epsilon(1e-8).margin(1e-8));

    const auto result =
        ddp::solve(p, std::vector<ControlInput>(K, ControlInput{}));
    REQUIRE(result.converged());
    require_unclamped(p, result.states, result.controls);
    CHECK(result.cost ==
          Catch::Approx(oracle_value).epsilon(1e-6).margin(1e-9));
  }
}

TEST_CASE("already-optimal start converges in one iteration", "[ddp]") {
  ocp::CostWeights w;
  w.v_des = 15.0;
  RoadGeometry road;
  VehicleState x0{0.0, road.lane_center(1), w.v_des, 0.0};
  const auto p = obstacle_free_problem(30, x0, w);

  const auto result =
      ddp::solve(p, std::vector<ControlInput>(30, ControlInput{}));
  REQUIRE(result.converged());
  CHECK(result.iterations == 1);
  CHECK(result.cost == Catch::Approx(0.0).margin(1e-12));
  for (const auto& u : result.controls) {
    CHECK(u.ux == 0.0);
    CHECK(u.uy == 0.0);
  }
}

TEST_CASE("accepted-cost log never increases on a fixed-ellipse problem",
          "[ddp]") {
  ocp::CostWeights w;
  w.v_des = 15.0;
  ocp::OcpProblem p;
  p.K = 30;
  p.x0 = {0.0, 6.4, 14.0, 0.0};
  p.weights = w;
  ocp::ObstacleEllipse e;
  e.center_x = 25.0;
  e.center_y = 6.4;
  e.sigma_x = 15.0;
  e.sigma_y = 3.2;
  e.weight = 50.0;
  p.ellipses.assign(p.K, {e});
  p.validate();

  const auto result =
      ddp::solve(p, std::vector<ControlInput>(p.K, ControlInput{}));
  REQUIRE(result.status != ddp::SolveStatus::kIllConditioned);
  REQUIRE(result.cost_log.size() >= 2);
  for (std::size_t i = 1; i < result.cost_log.size(); ++i) {
    CHECK(result.cost_log[i] <= result.cost_log[i - 1]);
  }
  CHECK(result.cost == result.cost_log.back());

  // Returned controls respect the bounds at their own states.
  for (int k = 0; k < p.K; ++k) {
    const auto b = dynamics::control_bounds(result.states[k], p.params, p.road);
    CHECK(result.controls[k].ux >= b.lower.ux - 1e-9);
    CHECK(result.controls[k].ux <= b.upper.ux + 1e-9);
    CHECK(result.controls[k].uy >= b.lower.uy - 1e-9);
    CHECK(result.controls[k].uy <= b.upper.uy + 1e-9);
  }

  // Returned states are exactly the rollout of the returned controls, and
  // the reported cost matches an independent recomputation.
  VehicleState x = p.x0;
  for (int k = 0; k < p.K; ++k) {
    CHECK((result.states[k].vec() - x.vec()).lpNorm<Eigen::Infinity>() <
          1e-12);
    x = dynamics::step(x, result.controls[k], p.params.T);
  }
  CHECK((result.states[p.K].vec() - x.vec()).lpNorm<Eigen::Infinity>() <
        1e-12);
  CHECK(ocp::total_cost(p, result.states, result.controls) ==
        Catch::Approx(result.cost).epsilon(1e-9));
}

TEST_CASE("regularization ladder climbs by its growth factor to the cap",
          "[ddp]") {
  // A potential term pinned on the nominal trajectory with an enormous
  // weight makes the surrogate curvature dominate: Quu stays indefinite for
  // every regularization value below the cap, so the solver must walk the
  // whole ladder and stop as ill-conditioned with its best-so-far result.
  ocp::CostWeights w;
  w.p1 = 0.0;
  w.p2 = 0.0;
  w.p3 = 1e-9;
  w.p4 = 0.0;
  w.v_des = 15.0;

  ocp::OcpProblem p;
  p.K = 3;
  p.x0 = {0.0, 6.4, 15.0, 0.0};
  p.weights = w;
  p.ellipses.assign(p.K, {});
  for (int k = 0; k < p.K; ++k) {
    ocp::ObstacleEllipse e;
    e.center_x = p.x0.x + k * p.params.T * p.x0.vx;  // exactly on the nominal
    e.center_y = p.x0.y;
    e.sigma_x = 1.0;
    e.sigma_y = 1.0;
    e.weight = 1e13;
    p.ellipses[k] = {e};
  }
  p.validate();

  ddp::SolverConfig config;
  const auto result =
      ddp::solve(p, std::vector<ControlInput>(p.K, ControlInput{}), config);

  CHECK(result.status == ddp::SolveStatus::kIllConditioned);
  CHECK(result.iterations == 1);
  CHECK(result.final_mu == config.mu_max);
  REQUIRE(result.telemetry.size() == 1);
  const auto& attempts = result.telemetry[0].mu_attempts;

  // mu_min * gamma^n for n = 0..17 stays below mu_max; the 18th failure
  // saturates at the cap and terminates.
  REQUIRE(attempts.size() == 18);
  CHECK(attempts.front() == config.mu_min);
  for (std::size_t i = 1; i < attempts.size(); ++i) {
    CHECK(attempts[i] == Catch::Approx(attempts[i - 1] * config.gamma));
    CHECK(attempts[i] >= config.mu_min);
    CHECK(attempts[i] < config.mu_max);
  }
  CHECK(attempts.back() ==
        Catch::Approx(config.mu_min * std::pow(config.gamma, 17.0)));

  // Best-so-far is the initial rollout: zero controls survive clipping here.
  CHECK(result.cost == result.cost_log.front());
  for (const auto& u : result.controls) {
    CHECK(u.ux == 0.0);
    CHECK(u.uy == 0.0);
  }
}

TEST_CASE("every attempted regularization stays inside the configured range",
          "[ddp]") {
  Rng rng(4242);
  ddp::SolverConfig config;
  for (int trial = 0; trial < 5; ++trial) {
    ocp::CostWeights w;
    w.v_des = 15.0;
    std::vector<ocp::ObstacleTrack> tracks;
    ocp::ObstacleTrack t;
    t.x0 = rng.uniform(15.0, 40.0);
    t.y0 = 6.4;
    t.vx = rng.uniform(8.0, 12.0);
    tracks.push_back(t);
    const auto p = ocp::make_problem(30, {0.0, 6.4, 14.0, 0.0}, w, {}, {},
                                     std::move(tracks));
    const auto result =
        ddp::solve(p, std::vector<ControlInput>(p.K, ControlInput{}), config);
    for (const auto& tel : result.telemetry) {
      for (double mu : tel.mu_attempts) {
        CHECK(mu >= config.mu_min);
        CHECK(mu <= config.mu_max);
      }
    }
    CHECK(result.final_mu >= config.mu_min);
    CHECK(result.final_mu <= config.mu_max);
  }
}

TEST_CASE("solver input validation", "[ddp]") {
  ocp::CostWeights w;
  const auto p = obstacle_free_problem(10, {0.0, 6.4, 15.0, 0.0}, w);

  CHECK_THROWS_AS(ddp::solve(p, std::vector<ControlInput>(9, ControlInput{})),
                  std::invalid_argument);

  std::vector<ControlInput> bad(10, ControlInput{});
  bad[3].ux = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ddp::solve(p, bad), std::invalid_argument);

  ddp::SolverConfig bad_config;
  bad_config.gamma = 0.5;  // must be > 1
  CHECK_THROWS_AS(ddp::solve(p, std::vector<ControlInput>(10, ControlInput{}),
                             bad_config),
                  std::invalid_argument);
}

TEST_CASE("iteration cap returns the best trajectory found so far", "[ddp]") {
  ocp::CostWeights w;
  w.v_des = 15.0;
  ocp::OcpProblem p;
  p.K = 30;
  p.x0 = {0.0, 6.4, 10.0, 0.5};
  p.weights = w;
  ocp::ObstacleEllipse e;
  e.center_x = 20.0;
  e.center_y = 6.4;
  e.sigma_x = 16.0;
  e.sigma_y = 3.2;
  e.weight = 50.0;
  p.ellipses.assign(p.K, {e});
  p.validate();

  ddp::SolverConfig config;
  config.max_iterations = 1;
  const std::vector<ControlInput> init(p.K, ControlInput{});
  const auto result = ddp::solve(p, init, config);

  CHECK(result.status == ddp::SolveStatus::kMaxIterations);
  CHECK(result.iterations == 1);
  // The returned cost is the minimum the log ever saw, and it matches an
  // independent recomputation of the returned trajectory.
  for (double c : result.cost_log) {
    CHECK(result.cost <= c + 1e-12);
  }
  CHECK(ocp::total_cost(p, result.states, result.controls) ==
        Catch::Approx(result.cost).epsilon(1e-9));

  // The same instance given room to iterate improves on the capped run.
  const auto full = ddp::solve(p, init);
  CHECK(full.cost <= result.cost + 1e-12);
}

}  // namespace
