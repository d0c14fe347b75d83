#include "doctest.h"

#include "safedensity/controller.hpp"
#include "safedensity/errors.hpp"

#include <cmath>
#include <numbers>

using namespace safedensity;

namespace {

struct Setup {
  Grid grid{64, 64, 0.0625};
  LocalizationModel loc = LocalizationModel::isotropic(kDefaultKernelSigma);
  std::vector<Vec2> pos{Vec2(1.2, 1.9), Vec2(2.3, 2.05)};
  RegionMask danger = mask_from_geometry(grid, std::vector<Shape>{Disc{Vec2(2.6, 2.1), 0.3}});
  DensityField field;
  DensityOperators ops;
  std::vector<PlannedPath> paths;
  std::vector<RobotState> robots;
  ControllerGains gains;
  EnergyParams energy;
  double T = 0.0045;
  double u_max = 0.3;

  Setup() {
    field = evaluate_kernels(grid, pos, loc);
    field.target = build_target(
        grid, TargetSpec{{GaussianComponent{Vec2(2.0, 2.5), 1.0, Eigen::Matrix2d::Identity() / 0.16}},
                         2.0 * single_kernel_mass(grid, loc)});
    ops.laplacian = build_laplacian(grid);
    ops.advection = build_advection_all(grid, field);
    const double kappa = energy_per_meter(energy, u_max);
    paths = {PlannedPath::from_waypoints({pos[0], Vec2(0.5, 0.5)}, kappa),
             PlannedPath::from_waypoints({pos[1], Vec2(2.3, 0.5)}, kappa)};
    robots.resize(2);
    robots[0].battery = 0.6;
    robots[1].battery = 0.4;
    gains.epsilon = default_epsilon(grid, loc);
  }

  ConstraintRows rows() const {
    return assemble(field, grid, ops, danger, AssemblyInputs{paths, robots, {}, T, u_max}, gains, energy);
  }

  // Density rate under command u, built from the same discrete operators.
  Vector rate(const Vector &u) const {
    Vector r = T * (ops.laplacian * field.team);
    for (std::size_t i = 0; i < ops.advection.size(); ++i)
      r += ops.advection[i].x * u(2 * i) + ops.advection[i].y * u(2 * i + 1);
    return r;
  }
};

double V_of(const Grid &g, const Vector &target, const Vector &rho) {
  return integrate(g, (target - rho).cwiseAbs2());
}
double masked_sq(const Grid &g, const RegionMask &m, const Vector &rho) {
  return integrate(g, rho.cwiseAbs2(), &m);
}

} // namespace

TEST_CASE("lyapunov value") {
  const Setup s;
  DensityField f = s.field;
  f.target = f.team;
  CHECK(lyapunov(f, s.grid) == 0.0);

  // Empty team against a unit-peak kernel: V = integral of k^2 = pi sigma^2.
  DensityField empty;
  empty.target = evaluate_kernel(s.grid, Vec2(2.0, 2.0), s.loc);
  empty.team = Vector::Zero(s.grid.size());
  const double sig = kDefaultKernelSigma;
  CHECK(lyapunov(empty, s.grid) == doctest::Approx(std::numbers::pi * sig * sig).epsilon(0.01));

  DensityField twice = s.field;
  twice.target = s.field.team + 2.0 * (s.field.target - s.field.team);
  CHECK(lyapunov(twice, s.grid) == doctest::Approx(4.0 * lyapunov(s.field, s.grid)).epsilon(1e-12));
}

TEST_CASE("spatial barrier value") {
  const Setup s;
  const double eps = s.gains.epsilon;
  CHECK(spatial_barrier(s.field, RegionMask{}, s.grid, eps) == eps);

  const auto far = evaluate_kernels(s.grid, std::vector<Vec2>{Vec2(0.8, 0.8)}, s.loc);
  const auto disc = mask_from_geometry(s.grid, std::vector<Shape>{Disc{Vec2(2.5, 2.5), 0.5}});
  CHECK(spatial_barrier(far, disc, s.grid, eps) >= eps - 1e-6);

  const auto inside = evaluate_kernels(s.grid, std::vector<Vec2>{Vec2(2.5, 2.5)}, s.loc);
  CHECK(spatial_barrier(inside, disc, s.grid, eps) < 0.0);
}

TEST_CASE("default epsilon is 5% of the kernel mass") {
  const Setup s;
  CHECK(default_epsilon(s.grid, s.loc) == doctest::Approx(0.05 * single_kernel_mass(s.grid, s.loc)));
}

TEST_CASE("a converged noiseless robot has a zero CLF row") {
  Setup s;
  s.pos.resize(1);
  s.field = evaluate_kernels(s.grid, s.pos, s.loc);
  s.field.target = s.field.team;
  s.ops.advection = build_advection_all(s.grid, s.field);
  s.paths.resize(1);
  s.robots.resize(1);
  s.T = 0.0;
  const auto r = s.rows();
  CHECK(r.clf_b == 0.0);
  CHECK(r.clf_g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a robot far from the danger region has no CBF coefficients") {
  Setup s;
  s.danger = mask_from_geometry(s.grid, std::vector<Shape>{Disc{Vec2(3.5, 3.5), 0.2}});
  const auto r = s.rows();
  // Robot 0 sits more than 4 sigma from the region.
  CHECK(r.cbf_a.segment<2>(0).norm() <= 1e-8);
}

TEST_CASE("CLF and CBF rows match finite differences of the discrete dynamics") {
  const Setup s;
  const auto rows = s.rows();
  const Vector u0 = (Vector(4) << 0.1, -0.05, 0.2, 0.15).finished();
  const double tau = 1e-3;
  // Both values are quadratic in rho, so the central difference along an
  // Euler step is exact up to rounding.
  auto vdot = [&](const Vector &u) {
    const Vector d = s.rate(u);
    return (V_of(s.grid, s.field.target, s.field.team + tau * d) -
            V_of(s.grid, s.field.target, s.field.team - tau * d)) / (2.0 * tau);
  };
  auto hdot = [&](const Vector &u) {
    const Vector d = s.rate(u);
    return -(masked_sq(s.grid, s.danger, s.field.team + tau * d) -
             masked_sq(s.grid, s.danger, s.field.team - tau * d)) / (2.0 * tau);
  };

  const double delta = 1e-5;
  for (int j = 0; j < 4; ++j) {
    Vector up = u0, dn = u0;
    up(j) += delta;
    dn(j) -= delta;
    const double g_fd = (vdot(up) - vdot(dn)) / (2.0 * delta);
    const double a_fd = (hdot(up) - hdot(dn)) / (2.0 * delta);
    CHECK(rows.clf_g(j) == doctest::Approx(g_fd).epsilon(1e-4));
    CHECK(rows.cbf_a(j) == doctest::Approx(a_fd).epsilon(1e-4));
  }
  const Vector zero = Vector::Zero(4);
  CHECK(rows.clf_b - s.gains.alpha_v * rows.V == doctest::Approx(vdot(zero)).epsilon(1e-6));
  CHECK(rows.cbf_b - s.gains.alpha_s * rows.h_s == doctest::Approx(hdot(zero)).epsilon(1e-6));
  CHECK(rows.V == doctest::Approx(V_of(s.grid, s.field.target, s.field.team)));
}

TEST_CASE("one-sided Euler steps reproduce g.delta to first order") {
  const Setup s;
  const auto rows = s.rows();
  const Vector u0 = Vector::Zero(4);
  const double dt = 1e-4, delta = 1e-3;
  for (int j = 0; j < 4; ++j) {
    Vector u = u0;
    u(j) = delta;
    const double v0 = V_of(s.grid, s.field.target, s.field.team);
    const double with = (V_of(s.grid, s.field.target, s.field.team + dt * s.rate(u)) - v0) / dt;
    const double without = (V_of(s.grid, s.field.target, s.field.team + dt * s.rate(u0)) - v0) / dt;
    CHECK(with - without == doctest::Approx(rows.clf_g(j) * delta).epsilon(1e-3));
  }
}

TEST_CASE("scaling both densities scales the CLF row quadratically") {
  const Setup s;
  const auto base = s.rows();
  Setup t;
  const double lam = 3.0;
  t.field.team *= lam;
  t.field.target *= lam;
  for (auto &k : t.field.per_robot)
    k *= lam;
  t.ops.advection = build_advection_all(t.grid, t.field);
  const auto scaled = t.rows();
  CHECK(scaled.V == doctest::Approx(lam * lam * base.V).epsilon(1e-12));
  CHECK(scaled.clf_b - t.gains.alpha_v * scaled.V ==
        doctest::Approx(lam * lam * (base.clf_b - s.gains.alpha_v * base.V)).epsilon(1e-10));
  for (int j = 0; j < 4; ++j)
    CHECK(scaled.clf_g(j) == doctest::Approx(lam * lam * base.clf_g(j)).epsilon(1e-10));
}

TEST_CASE("energy rows at full speed along the path give exactly alpha_E h_E") {
  const Setup s;
  const auto rows = s.rows();
  REQUIRE(rows.energy.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto &e = rows.energy[i];
    CHECK(e.h_e == doctest::Approx(s.robots[i].battery - s.energy.e_min - s.paths[i].energy_to_charge));
    const double at = energy_cbf_value(e, s.u_max * e.dir, s.gains.alpha_e);
    CHECK(at == doctest::Approx(s.gains.alpha_e * e.h_e).epsilon(1e-14));
  }
}

TEST_CASE("the margin tightens the CBF offset") {
  Setup s;
  const auto plain = s.rows();
  s.gains.cbf_margin = 0.5;
  const auto tight = s.rows();
  CHECK(tight.h_s == plain.h_s);
  CHECK(plain.cbf_b - tight.cbf_b == doctest::Approx(0.5 * s.gains.alpha_s * s.gains.epsilon));
}

TEST_CASE("program packaging and the solved CBF row") {
  const Setup s;
  const auto rows = s.rows();
  const auto p = make_program(rows, s.gains, s.u_max);
  CHECK(p.n_robots == 2);
  CHECK(p.robots[1].beta == doctest::Approx(s.gains.alpha_e * rows.energy[1].h_e - s.energy.c2));
  const auto sol = solve(p);
  CHECK(p.cbf_a.dot(sol.u) + p.cbf_b >= -1e-8);
}

TEST_CASE("assembly rejects inconsistent inputs") {
  Setup s;
  s.paths.pop_back();
  CHECK_THROWS_AS(s.rows(), DimensionError);
  Setup t;
  t.ops.advection.pop_back();
  CHECK_THROWS_AS(t.rows(), DimensionError);
}

TEST_CASE("gains validation") {
  ControllerGains g;
  CHECK_THROWS_AS(g.validate(), ConfigError); // epsilon unset
  g.epsilon = 0.01;
  CHECK_NOTHROW(g.validate());
  g.cbf_margin = 1.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.cbf_margin = 0.0;
  g.alpha_s = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}
