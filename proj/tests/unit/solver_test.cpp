#include "doctest.h"

#include "oracles.hpp"
#include "safedensity/errors.hpp"
#include "safedensity/solver.hpp"

#include <cmath>

using namespace safedensity;

namespace {

// One robot with only the speed ball active and an inert CBF row.
ConvexProgram open_program(const Vec2 &g, double b_v, double gamma) {
  ConvexProgram p;
  p.n_robots = 1;
  p.gamma = gamma;
  p.clf_g = g;
  p.clf_b = b_v;
  p.cbf_a = Vector::Zero(2);
  p.cbf_b = 1.0;
  RobotConstraint r;
  r.u_max = 1.0;
  r.c1 = 0.1;
  r.beta = 1.0; // ball of radius sqrt(10) around 0
  p.robots = {r};
  return p;
}

} // namespace

TEST_CASE("a satisfied CLF row gives the zero command") {
  const auto p = open_program(Vec2(1.0, -2.0), -0.5, 10.0);
  const auto sol = solve(p);
  CHECK(sol.status == SolveStatus::Optimal);
  CHECK(sol.u.norm() <= 1e-9);
  CHECK(sol.s == 0.0);
}

TEST_CASE("a single active CLF row has the closed-form minimum-norm solution") {
  const Vec2 g(1.0, 2.0);
  const double b = 0.1;
  const auto sol = solve(open_program(g, b, 100.0));
  const Vec2 expect = -(b / g.squaredNorm()) * g;
  CHECK(sol.status == SolveStatus::Optimal);
  CHECK((sol.u - expect).norm() <= 1e-7);
  CHECK(sol.s <= 1e-9);
}

TEST_CASE("a cheap slack is used instead of control effort") {
  // Multiplier 2 b / |g|^2 = 0.04 exceeds gamma, so the row stays violated
  // and u = -gamma g / 2.
  const Vec2 g(1.0, 2.0);
  const auto sol = solve(open_program(g, 0.1, 0.01));
  CHECK((sol.u + 0.005 * g).norm() <= 1e-7);
  CHECK(sol.s == doctest::Approx(g.dot(sol.u) + 0.1).epsilon(1e-9));
}

TEST_CASE("solutions agree with the barrier oracle on random programs") {
  RngStream rng = RngStream(2024).split(7);
  double worst_gap = 0.0, worst_viol = 0.0;
  for (int k = 0; k < 60; ++k) {
    const int n = 1 + k % 3;
    const auto rp = oracle::random_program(n, rng);
    const auto sol = solve(rp.program);
    const auto ref = oracle::barrier_oracle(rp.program, rp.interior);
    REQUIRE(sol.status == SolveStatus::Optimal);
    worst_gap = std::max(worst_gap, std::abs(sol.objective - ref.objective) /
                                        std::max(1.0, std::abs(ref.objective)));
    worst_viol = std::max(worst_viol, oracle::violation(rp.program, sol.u, sol.s));
  }
  CHECK(worst_gap <= 1e-6);
  CHECK(worst_viol <= 1e-7);
}

TEST_CASE("single-robot programs agree with the polar grid oracle") {
  RngStream rng = RngStream(99).split(3);
  for (int k = 0; k < 10; ++k) {
    const auto rp = oracle::random_program(1, rng);
    const auto sol = solve(rp.program);
    const auto ref = oracle::polar_grid_oracle(rp.program);
    CHECK(sol.objective <= ref.objective + 1e-6 * std::max(1.0, std::abs(ref.objective)));
    CHECK(oracle::violation(rp.program, sol.u, sol.s) <= 1e-7);
  }
}

TEST_CASE("a warm start does not change the solution") {
  RngStream rng = RngStream(5).split(1);
  for (int k = 0; k < 20; ++k) {
    const auto rp = oracle::random_program(3, rng);
    const auto cold = solve(rp.program);
    const auto warm = solve(rp.program, &cold);
    CHECK(warm.status == SolveStatus::Optimal);
    CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-6));
    CHECK(warm.iterations <= cold.iterations);
  }
}

TEST_CASE("raising the slack weight never increases the slack") {
  RngStream rng = RngStream(11).split(2);
  for (int k = 0; k < 20; ++k) {
    auto p = oracle::random_program(2, rng).program;
    double prev = INFINITY;
    for (double gamma : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
      p.gamma = gamma;
      const auto sol = solve(p);
      CHECK(sol.s <= prev + 1e-7);
      prev = sol.s;
    }
  }
}

TEST_CASE("projection lands in both the speed and the energy ball") {
  RobotConstraint r;
  r.u_max = 1.0;
  r.dir = Vec2(1.0, 0.0);
  r.kappa = 0.5;
  r.c1 = 0.5;
  r.beta = 0.1; // centre (0.5, 0), radius sqrt(0.45)
  CHECK(r.ball_center().isApprox(Vec2(0.5, 0.0)));
  CHECK(r.ball_radius_sq() == doctest::Approx(0.45));
  RngStream rng = RngStream(3).split(0);
  for (int k = 0; k < 200; ++k) {
    const Vec2 q(6.0 * rng.uniform() - 3.0, 6.0 * rng.uniform() - 3.0);
    const Vec2 u = r.project(q);
    CHECK(u.norm() <= r.u_max + 1e-12);
    CHECK((u - r.ball_center()).squaredNorm() <= r.ball_radius_sq() + 1e-12);
    CHECK(r.violation(u) <= 1e-12);
    if (r.violation(q) == 0.0)
      CHECK((u - q).norm() <= 1e-12);
  }
}

TEST_CASE("feasible point follows the path at full speed") {
  auto p = open_program(Vec2(1.0, 0.0), 0.2, 1.0);
  p.robots[0].dir = Vec2(0.0, 1.0);
  p.robots[0].u_max = 0.4;
  const auto [u, s] = feasible_point(p);
  CHECK(u.isApprox(Vector(Vec2(0.0, 0.4))));
  CHECK(s == doctest::Approx(0.2));

  p.robots[0].dir = Vec2::Zero();
  CHECK(feasible_point(p).first.norm() == 0.0);

  p.robots[0].fixed = Vec2(0.1, 0.0);
  CHECK(feasible_point(p).first.isApprox(Vector(Vec2(0.1, 0.0))));
}

TEST_CASE("an empty energy ball is reported with the robot index") {
  RngStream rng(1);
  auto p = oracle::random_program(3, rng).program;
  auto &r = p.robots[2];
  r.form = Consumption::Quadratic;
  r.beta = -(r.ball_center().squaredNorm() * r.c1) - 1.0;
  try {
    p.validate();
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError &e) {
    CHECK(e.robot == 2);
    CHECK(std::string(e.what()).find("robot 2") != std::string::npos);
  }
  CHECK_THROWS_AS(feasible_point(p), InfeasibleError);
}

TEST_CASE("dimension mismatches throw") {
  auto p = open_program(Vec2(1.0, 0.0), 0.0, 1.0);
  p.cbf_a = Vector::Zero(4);
  CHECK_THROWS_AS(p.validate(), DimensionError);
}

TEST_CASE("an unreachable CBF row is relaxed to the best recovery") {
  auto p = open_program(Vec2(0.0, 0.0), -1.0, 1.0);
  p.cbf_a = Vec2(2.0, 0.0);
  p.cbf_b = -5.0; // best a.u is 2
  CHECK(cbf_capacity(p) == doctest::Approx(2.0));
  const double removed = relax_cbf(p);
  CHECK(removed > 0.0);
  CHECK(cbf_capacity(p) + p.cbf_b >= 0.0);
  const auto sol = solve(p);
  CHECK(sol.status == SolveStatus::Optimal);
  CHECK(p.cbf_a.dot(sol.u) + p.cbf_b >= -1e-9);
  CHECK(sol.u(0) >= 0.99); // drives almost straight along a

  auto q = open_program(Vec2(0.0, 0.0), -1.0, 1.0);
  CHECK(relax_cbf(q) == 0.0);
}
