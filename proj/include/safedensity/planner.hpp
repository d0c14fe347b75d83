#pragma once

/// @file planner.hpp
/// @brief Kinodynamic RRT to the charging region with a belief-mass
/// feasibility check on every steering segment, and the energy-to-charge it
/// implies.

#include "safedensity/density.hpp"
#include "safedensity/grid.hpp"
#include "safedensity/rng.hpp"
#include "safedensity/sim.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace safedensity {

enum class PlannerMode { FreeSpace, GridRestricted };

struct PlannerConfig {
  int max_iterations = 2000;
  double steer_step = 0.25; ///< metres
  double goal_bias = 0.1;
  PlannerMode mode = PlannerMode::FreeSpace;
  double feasibility_margin = 0.5; ///< fraction of the per-robot budget eps / N
  /// Greedy shortcutting of the raw tree branch (FreeSpace only). Every
  /// shortcut segment passes the same feasibility check.
  bool shortcut = true;

  void validate() const;
};

struct PlannedPath {
  std::vector<Vec2> waypoints;
  double length = 0.0;
  Vec2 first_dir = Vec2::Zero();
  double energy_to_charge = 0.0;

  /// Builds length, first_dir and energy_to_charge from the waypoints.
  static PlannedPath from_waypoints(std::vector<Vec2> waypoints, double kappa);
};

/// Energy per metre of path when traversed at u_max:
/// quadratic power c1 u^2 + c2 gives c1 u_max + c2 / u_max.
double energy_per_meter(const EnergyParams &energy, double u_max);

/// -kappa * first_dir . u
double path_direction_rate(const PlannedPath &path, const Vec2 &u, double kappa);

/// Per-robot share of the danger-zone belief budget.
struct SegmentBudget {
  double epsilon = 0.0;
  int n_robots = 1;
  double margin = 0.5;

  double per_robot() const { return margin * epsilon / std::max(n_robots, 1); }
};

/// Masked squared-kernel mass integrate(kernel(x)^2, A) with a cached
/// distance field that skips the exact sum when a rigorous upper bound
/// already clears the budget.
class DangerMap {
public:
  DangerMap(const Grid &grid, const RegionMask &danger, const LocalizationModel &loc);

  double masked_mass(const Vec2 &x) const;
  /// masked_mass(x) <= budget, evaluated lazily.
  bool within(const Vec2 &x, double budget) const;
  /// All samples along [a, b] at spacing <= l/2 (endpoints included) are
  /// within budget.
  bool segment_within(const Vec2 &a, const Vec2 &b, double budget) const;

  const Grid &grid() const { return grid_; }
  const RegionMask &danger() const { return danger_; }

private:
  double upper_bound(const Vec2 &x) const;

  Grid grid_;
  RegionMask danger_;
  LocalizationModel loc_;
  std::vector<int> ax_, ay_; // danger cell coordinates
  int ix_lo_ = 0, ix_hi_ = -1, iy_lo_ = 0, iy_hi_ = -1;
  std::vector<double> clearance_; // per cell: distance to nearest danger centre
};

/// Feasibility of the straight motion a -> b.
bool check_segment(const Vec2 &a, const Vec2 &b, const RegionMask &danger,
                   const Grid &grid, const LocalizationModel &loc,
                   const SegmentBudget &budget);

enum class PlanStatus { Success, Failure };

struct PlanResult {
  PlanStatus status = PlanStatus::Failure;
  PlannedPath path;
  int iterations = 0;
  int tree_size = 0;
};

class Planner {
public:
  Planner(const Grid &grid, const RegionMask &danger, const RegionMask &charger,
          const LocalizationModel &loc, SegmentBudget budget, PlannerConfig cfg,
          double kappa);

  /// Throws std::invalid_argument when start lies in the danger region, the
  /// charger is empty, or the charger overlaps the danger region.
  PlanResult plan(const Vec2 &start, RngStream &rng) const;

  /// The previous path re-anchored at x: waypoints already passed are
  /// dropped and x joins the first remaining one. nullopt when the joining
  /// segment fails the feasibility check.
  std::optional<PlannedPath> advance(const PlannedPath &previous, const Vec2 &x) const;

  /// True when every segment of the path passes the feasibility check
  /// against the budget effective for a path starting at its first waypoint.
  bool path_safe(const PlannedPath &path) const;

  bool in_charger(const Vec2 &x) const;
  const DangerMap &danger_map() const { return map_; }
  double kappa() const { return kappa_; }
  const PlannerConfig &config() const { return cfg_; }

private:
  double effective_budget(const Vec2 &start) const;
  PlanResult plan_free(const Vec2 &start, RngStream &rng) const;
  PlanResult plan_grid(const Vec2 &start, RngStream &rng) const;
  std::vector<Vec2> shortcut(const std::vector<Vec2> &raw, double budget) const;
  Vec2 sample_free(RngStream &rng) const;
  Vec2 sample_goal(RngStream &rng) const;

  Grid grid_;
  RegionMask charger_;
  DangerMap map_;
  SegmentBudget budget_;
  PlannerConfig cfg_;
  double kappa_;
};

} // namespace safedensity
