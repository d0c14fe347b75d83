#pragma once

/// @file sim.hpp
/// @brief Ground-truth robot world: Euler-Maruyama motion with additive
/// measurement noise, and the battery model with charging.

#include "safedensity/grid.hpp"
#include "safedensity/rng.hpp"

#include <optional>

namespace safedensity {

struct RobotState {
  Vec2 position = Vec2::Zero(); ///< measured; the only position the controller sees
  Vec2 true_position = Vec2::Zero();
  double battery = 1.0;
};

/// Actuation and measurement noise. Diffusion follows T = 0.045 c u_max
/// unless overridden.
struct NoiseModel {
  double c = 0.0;
  double u_max = 1.0;
  double diffusion = 0.0; ///< T, m^2/s
  double measurement_std = 0.0;
  bool diffusion_overridden = false;

  static constexpr double kDiffusionFactor = 0.045; // 0.3^2 / 2

  static NoiseModel from_actuation(double c, double u_max, double measurement_std);
  NoiseModel with_diffusion(double T) const;

  /// Throws ConfigError when T departs from 0.045 c u_max without override.
  void validate() const;
};

enum class Consumption { Quadratic, Linear };

struct EnergyParams {
  double c1 = 0.05;
  double c2 = 0.0055;
  double c3 = 0.05;
  double e_min = 0.1;
  Consumption consumption = Consumption::Quadratic;

  /// Power drawn at speed |u| outside the charger.
  double power(double speed) const {
    return consumption == Consumption::Quadratic ? c1 * speed * speed + c2
                                                 : c1 * speed + c2;
  }
  void validate() const;
};

/// Advances the true position by u dt + sqrt(2 T dt) xi, folds it back into
/// the domain and redraws the measurement. Throws CommandError when
/// |u| > u_max + 1e-9.
RobotState step_motion(const RobotState &state, const Vec2 &u, double dt,
                       const NoiseModel &noise, const Grid &grid, RngStream &rng);

struct BatteryStep {
  RobotState state;
  bool charging = false;
  /// E_min - E when the step ends below the threshold.
  std::optional<double> violation;
};

BatteryStep step_battery(const RobotState &state, const Vec2 &u, double dt,
                         const EnergyParams &params, const RegionMask &charger,
                         const Grid &grid);

} // namespace safedensity
