#pragma once

/// @file solver.hpp
/// @brief The per-step convex program
///
///   min  |u|^2 + gamma s     over u in R^{2N}, s >= 0
///   s.t. g . u + b_v <= s                    (slacked CLF row)
///        a . u + b_s >= 0                    (spatial CBF row)
///        |u_i| <= u_max                      (speed ball)
///        c1 |u_i|^2 - kappa d_i . u_i <= beta_i  (energy row, beta_i = alpha_E h_E,i - c2)
///
/// The quadratic energy row is the ball |u_i - mu_i| <= r_i with
/// mu_i = kappa / (2 c1) d_i and r_i^2 = beta_i / c1 + |mu_i|^2.
///
/// The solver works on the two-multiplier dual. For fixed multipliers the
/// inner problem separates into one Euclidean projection per robot onto a
/// planar convex set, and both multipliers are found by bracketed root
/// finding on monotone residuals. The returned u always satisfies every
/// constraint to rounding.

#include "safedensity/grid.hpp"
#include "safedensity/sim.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace safedensity {

struct RobotConstraint {
  double u_max = 1.0;
  Vec2 dir = Vec2::Zero(); ///< first direction of the path to charge (or 0)
  double kappa = 0.0;
  double c1 = 1.0;
  double beta = 0.0; ///< alpha_E h_E - c2
  Consumption form = Consumption::Quadratic;
  /// When set, u_i is pinned to this command (robot held at the charger).
  std::optional<Vec2> fixed;

  Vec2 ball_center() const;
  double ball_radius_sq() const;

  /// Largest violation of this robot's constraints at u_i (0 when feasible).
  double violation(const Vec2 &u) const;
  /// Euclidean projection of p onto the robot's admissible set.
  Vec2 project(const Vec2 &p) const;
};

struct ConvexProgram {
  int n_robots = 0;
  double gamma = 1.0;
  Vector clf_g;
  double clf_b = 0.0;
  Vector cbf_a;
  double cbf_b = 0.0;
  std::vector<RobotConstraint> robots;

  /// Throws DimensionError on size mismatch and InfeasibleError naming the
  /// first robot whose admissible set is empty.
  void validate() const;

  double objective(const Vector &u, double s) const { return u.squaredNorm() + gamma * s; }
  /// Smallest slack compatible with u.
  double slack_for(const Vector &u) const;
  /// Largest violation over all constraints at (u, s).
  double violation(const Vector &u, double s) const;
};

enum class SolveStatus { Optimal, MaxIterations };

struct Solution {
  Vector u;
  double s = 0.0;
  SolveStatus status = SolveStatus::MaxIterations;
  double kkt_residual = 0.0; ///< duality gap of the returned point
  double objective = 0.0;
  int iterations = 0; ///< inner projection sweeps
  double lambda_clf = 0.0;
  double lambda_cbf = 0.0;
};

struct SolverOptions {
  double tol = 1e-7;
  int max_iter = 5000;
};

/// Largest value of cbf_a . u over the robots' admissible sets.
double cbf_capacity(const ConvexProgram &p);

/// When no admissible u satisfies the CBF row, raises cbf_b so the row asks
/// for (nearly) the best achievable recovery. Returns the amount removed from
/// the row, 0 when it was already satisfiable.
double relax_cbf(ConvexProgram &p);

Solution solve(const ConvexProgram &p, const Solution *warm_start = nullptr,
               const SolverOptions &opts = {});

/// u_i = u_max d_i (0 where d_i = 0, the pinned command where fixed) and
/// s = max(0, g . u + b_v). Throws InfeasibleError when a robot's energy
/// ball is empty.
std::pair<Vector, double> feasible_point(const ConvexProgram &p);

} // namespace safedensity
