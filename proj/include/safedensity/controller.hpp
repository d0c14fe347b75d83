#pragma once

/// @file controller.hpp
/// @brief Discrete CLF and spatial CBF rows over the flattened density, the
/// per-robot energy data, and their packaging as a ConvexProgram.
///
/// With residual r = rho_d - rho, diffusion D = T B rho and the advection
/// columns A_i of each robot, the density derivative is
/// rho_t = sum_i A_i u_i + D and
///
///   CLF:  g . u + b_v <= s,  g_i = -2 l^2 r^T A_i,
///         b_v = alpha_v V - 2 l^2 r^T D
///   CBF:  a . u + b_s >= 0,  a_i = -2 l^2 (rho|_A)^T A_i|_A,
///         b_s = alpha_s h_s - 2 l^2 (rho|_A)^T D|_A

#include "safedensity/density.hpp"
#include "safedensity/grid.hpp"
#include "safedensity/planner.hpp"
#include "safedensity/sim.hpp"
#include "safedensity/solver.hpp"

#include <optional>
#include <span>
#include <vector>

namespace safedensity {

struct ControllerGains {
  double alpha_v = 0.5;
  double alpha_s = 2.0; ///< shared by the spatial CBF and the discrete program
  double alpha_e = 0.05;
  double gamma = 1e4;
  double epsilon = 0.0;
  /// Fraction of epsilon held back by the CBF row: the controller enforces
  /// h_s >= cbf_margin * epsilon so that motion and measurement noise between
  /// steps does not carry h_s below zero. h_s itself is still reported
  /// against epsilon.
  double cbf_margin = 0.0;

  void validate() const;
};

/// Default epsilon: 5% of the single-kernel mass integrate(k).
double default_epsilon(const Grid &grid, const LocalizationModel &loc);

double lyapunov(const DensityField &field, const Grid &grid);
double spatial_barrier(const DensityField &field, const RegionMask &danger,
                       const Grid &grid, double epsilon);

struct EnergyRow {
  double h_e = 0.0; ///< E - E_min - P
  Vec2 dir = Vec2::Zero();
  double kappa = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  Consumption form = Consumption::Quadratic;
  std::optional<Vec2> hold;
};

struct ConstraintRows {
  Vector clf_g;
  double clf_b = 0.0;
  Vector cbf_a;
  double cbf_b = 0.0;
  std::vector<EnergyRow> energy;
  double V = 0.0;
  double h_s = 0.0;
};

/// Laplacian (cached across steps) and per-robot advection columns.
struct DensityOperators {
  SparseOperator laplacian;
  std::vector<AdvectionColumns> advection;
};

std::vector<AdvectionColumns> build_advection_all(const Grid &grid, const DensityField &field);

struct AssemblyInputs {
  std::span<const PlannedPath> paths;
  std::span<const RobotState> robots;
  /// Optional pinned commands (robots held at the charger); empty or one per
  /// robot.
  std::span<const std::optional<Vec2>> holds;
  double diffusion = 0.0; ///< T
  double u_max = 1.0;
};

/// Throws DimensionError when operators, paths or robots disagree with the
/// field.
ConstraintRows assemble(const DensityField &field, const Grid &grid,
                        const DensityOperators &ops, const RegionMask &danger,
                        const AssemblyInputs &in, const ControllerGains &gains,
                        const EnergyParams &energy);

ConvexProgram make_program(const ConstraintRows &rows, const ControllerGains &gains,
                           double u_max);

/// alpha_E h_E + h_E_dot at command u for one energy row.
double energy_cbf_value(const EnergyRow &row, const Vec2 &u, double alpha_e);

} // namespace safedensity
