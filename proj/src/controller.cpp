#include "safedensity/controller.hpp"
#include "safedensity/errors.hpp"

#include <string>

namespace safedensity {

void ControllerGains::validate() const {
  if (!(alpha_v > 0.0 && alpha_s > 0.0 && alpha_e > 0.0 && gamma > 0.0 && epsilon > 0.0))
    throw ConfigError("controller gains and epsilon must be strictly positive");
  if (!(cbf_margin >= 0.0 && cbf_margin < 1.0))
    throw ConfigError("cbf_margin must lie in [0, 1)");
}

double default_epsilon(const Grid &grid, const LocalizationModel &loc) {
  return 0.05 * single_kernel_mass(grid, loc);
}

double lyapunov(const DensityField &field, const Grid &grid) {
  return integrate(grid, (field.target - field.team).cwiseAbs2());
}

double spatial_barrier(const DensityField &field, const RegionMask &danger,
                       const Grid &grid, double epsilon) {
  return epsilon - integrate(grid, field.team.cwiseAbs2(), &danger);
}

std::vector<AdvectionColumns> build_advection_all(const Grid &grid, const DensityField &field) {
  std::vector<AdvectionColumns> out;
  out.reserve(field.per_robot.size());
  for (const auto &k : field.per_robot)
    out.push_back(build_advection(grid, k));
  return out;
}

ConstraintRows assemble(const DensityField &field, const Grid &grid,
                        const DensityOperators &ops, const RegionMask &danger,
                        const AssemblyInputs &in, const ControllerGains &gains,
                        const EnergyParams &energy) {
  const std::size_t n = field.per_robot.size();
  if (!field.complete(grid))
    throw DimensionError("density field does not match the grid");
  if (ops.advection.size() != n || in.paths.size() != n || in.robots.size() != n ||
      (!in.holds.empty() && in.holds.size() != n))
    throw DimensionError("assembly inputs disagree on the robot count (" + std::to_string(n) + ")");
  if (ops.laplacian.rows() != grid.size() || ops.laplacian.cols() != grid.size())
    throw DimensionError("Laplacian does not match the grid");

  const double l2 = grid.cell_area();
  ConstraintRows rows;
  const Vector residual = field.target - field.team;
  rows.V = integrate(grid, residual.cwiseAbs2());
  rows.h_s = spatial_barrier(field, danger, grid, gains.epsilon);

  Vector diffusion = Vector::Zero(grid.size());
  if (in.diffusion != 0.0)
    diffusion = in.diffusion * (ops.laplacian * field.team);

  rows.clf_g.resize(static_cast<Eigen::Index>(2 * n));
  rows.cbf_a.resize(static_cast<Eigen::Index>(2 * n));
  rows.clf_b = gains.alpha_v * rows.V - 2.0 * l2 * residual.dot(diffusion);

  double masked_diffusion = 0.0;
  for (int k : danger.cells())
    masked_diffusion += field.team[k] * diffusion[k];
  rows.cbf_b = gains.alpha_s * (rows.h_s - gains.cbf_margin * gains.epsilon) - 2.0 * l2 * masked_diffusion;

  for (std::size_t i = 0; i < n; ++i) {
    const auto &cols = ops.advection[i];
    if (cols.x.size() != grid.size() || cols.y.size() != grid.size())
      throw DimensionError("advection column does not match the grid");
    const auto j = static_cast<Eigen::Index>(2 * i);
    rows.clf_g[j] = -2.0 * l2 * residual.dot(cols.x);
    rows.clf_g[j + 1] = -2.0 * l2 * residual.dot(cols.y);
    double ax = 0.0, ay = 0.0;
    for (int k : danger.cells()) {
      ax += field.team[k] * cols.x[k];
      ay += field.team[k] * cols.y[k];
    }
    rows.cbf_a[j] = -2.0 * l2 * ax;
    rows.cbf_a[j + 1] = -2.0 * l2 * ay;

    const auto &path = in.paths[i];
    EnergyRow e;
    e.h_e = in.robots[i].battery - energy.e_min - path.energy_to_charge;
    e.dir = path.first_dir;
    e.kappa = energy_per_meter(energy, in.u_max);
    e.c1 = energy.c1;
    e.c2 = energy.c2;
    e.form = energy.consumption;
    if (!in.holds.empty())
      e.hold = in.holds[i];
    rows.energy.push_back(e);
  }
  return rows;
}

ConvexProgram make_program(const ConstraintRows &rows, const ControllerGains &gains,
                           double u_max) {
  ConvexProgram p;
  p.n_robots = static_cast<int>(rows.energy.size());
  p.gamma = gains.gamma;
  p.clf_g = rows.clf_g;
  p.clf_b = rows.clf_b;
  p.cbf_a = rows.cbf_a;
  p.cbf_b = rows.cbf_b;
  for (const auto &e : rows.energy) {
    RobotConstraint r;
    r.u_max = u_max;
    r.dir = e.dir;
    r.kappa = e.kappa;
    r.c1 = e.c1;
    r.beta = gains.alpha_e * e.h_e - e.c2;
    r.form = e.form;
    r.fixed = e.hold;
    p.robots.push_back(r);
  }
  return p;
}

double energy_cbf_value(const EnergyRow &row, const Vec2 &u, double alpha_e) {
  const double draw = row.form == Consumption::Quadratic ? row.c1 * u.squaredNorm()
                                                         : row.c1 * u.norm();
  const double p_dot = -row.kappa * row.dir.dot(u);
  return alpha_e * row.h_e - draw - row.c2 - p_dot;
}

} // namespace safedensity
