#pragma once

/// @file config.hpp
/// @brief Scenario configuration and its flat dotted-key text format.
///
/// One `key = value` pair per line, `#` starts a comment. Indexed entities
/// use `robot.<i>.x`, `danger.<i>.type`, ... with `<entity>.count` giving
/// the number of entries. See docs/formats.md for the full key list.

#include "safedensity/controller.hpp"
#include "safedensity/density.hpp"
#include "safedensity/grid.hpp"
#include "safedensity/planner.hpp"
#include "safedensity/sim.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace safedensity {

inline constexpr int kSchemaVersion = 1;

struct RobotInit {
  Vec2 position;
  double battery = 1.0;
};

struct TargetComponentConfig {
  Vec2 center;
  double sigma = 0.5;
  double weight = 1.0;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  Vec2 domain{4.0, 4.0};
  int nx = 64;
  int ny = 64;
  Boundary boundary = Boundary::Periodic;
  double kernel_sigma = kDefaultKernelSigma;

  std::vector<RobotInit> robots;
  std::vector<TargetComponentConfig> target;
  bool target_normalize = true;
  Vec2 target_velocity = Vec2::Zero();

  std::vector<Shape> danger;
  std::vector<Shape> charger;
  /// Rectangle the robots physically move in; true positions are reflected
  /// back into it. Unset: the whole domain.
  std::optional<Rect> workspace;

  ControllerGains gains; ///< epsilon <= 0 selects default_epsilon()
  EnergyParams energy;
  double resume_level = 0.95; ///< robots held at the charger until E reaches this
  /// Only robots entering the charger with E - E_min below this are held;
  /// fuller robots pass through without topping up.
  double hold_margin = 0.25;
  double hold_gain = 1.0;     ///< 1/s, station keeping towards the charger centre

  double noise_c = 0.1;
  double u_max = 0.3;
  double measurement_std = 0.01;
  std::optional<double> diffusion_override;

  double dt = 0.05;
  double duration = 87.0;
  std::uint64_t seed = 1;

  PlannerConfig planner;
  double solver_tol = 1e-7;
  int solver_max_iter = 5000;

  int snapshot_stride = 0;
  bool record_paths = false;

  Grid grid() const;
  LocalizationModel localization() const;
  NoiseModel noise() const;
  double epsilon() const;
  int steps() const;
  /// Copy with motion and measurement noise switched off.
  ScenarioConfig noise_off() const;

  /// Throws ConfigError on any violated invariant (robots inside the danger
  /// region, charger overlapping it, dt u_max >= l, ...).
  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string &text);
ScenarioConfig config_from_key_values(const KeyValues &kv);
ScenarioConfig load_config(const std::filesystem::path &path);
std::string to_text(const ScenarioConfig &cfg);

/// Built-in four-robot charging scenario. Shape sizes and positions are an
/// approximate reconstruction, not measured values.
ScenarioConfig reference_scenario();

} // namespace safedensity
