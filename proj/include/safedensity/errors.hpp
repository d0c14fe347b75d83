#pragma once

#include <stdexcept>
#include <string>

namespace safedensity {

/// Vector or operator sizes that do not agree with the grid.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid localisation model (precision not symmetric positive definite).
struct ModelError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Scenario or module configuration that violates a stated invariant.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A velocity command outside the admissible set reached the simulator.
struct CommandError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Infeasible program data, e.g. an energy ball with negative squared radius.
struct InfeasibleError : std::runtime_error {
  int robot = -1;
  InfeasibleError(const std::string &what, int robot_index)
      : std::runtime_error(what), robot(robot_index) {}
};

} // namespace safedensity
