#include "safedensity/sim.hpp"
#include "safedensity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace safedensity {

NoiseModel NoiseModel::from_actuation(double c, double u_max, double measurement_std) {
  NoiseModel n;
  n.c = c;
  n.u_max = u_max;
  n.diffusion = kDiffusionFactor * c * u_max;
  n.measurement_std = measurement_std;
  return n;
}

NoiseModel NoiseModel::with_diffusion(double T) const {
  NoiseModel n = *this;
  n.diffusion = T;
  n.diffusion_overridden = true;
  return n;
}

void NoiseModel::validate() const {
  if (!(u_max > 0.0))
    throw ConfigError("u_max must be positive");
  if (c < 0.0 || diffusion < 0.0 || measurement_std < 0.0)
    throw ConfigError("noise parameters must be non-negative");
  if (!diffusion_overridden &&
      std::abs(diffusion - kDiffusionFactor * c * u_max) > 1e-12 * std::max(1.0, diffusion))
    throw ConfigError("diffusion T must equal 0.045 c u_max unless overridden");
}

void EnergyParams::validate() const {
  if (!(c1 > 0.0 && c2 > 0.0 && c3 > 0.0))
    throw ConfigError("energy coefficients c1, c2, c3 must be positive");
  if (!(e_min > 0.0 && e_min < 1.0))
    throw ConfigError("E_min must lie in (0, 1)");
}

RobotState step_motion(const RobotState &state, const Vec2 &u, double dt,
                       const NoiseModel &noise, const Grid &grid, RngStream &rng) {
  if (!(dt > 0.0))
    throw CommandError("time step must be positive");
  if (u.norm() > noise.u_max + 1e-9) {
    std::ostringstream msg;
    msg << "command speed " << u.norm() << " exceeds u_max " << noise.u_max;
    throw CommandError(msg.str());
  }
  RobotState next = state;
  // Draw order is fixed (motion x, motion y, measurement x, measurement y) so
  // the stream advances identically whether or not noise is switched on.
  const double xi_x = rng.normal();
  const double xi_y = rng.normal();
  const double zeta_x = rng.normal();
  const double zeta_y = rng.normal();
  const double amp = std::sqrt(2.0 * noise.diffusion * dt);
  Vec2 p = state.true_position + u * dt;
  if (amp > 0.0)
    p += amp * Vec2(xi_x, xi_y);
  next.true_position = grid.fold(p);
  Vec2 m = next.true_position;
  if (noise.measurement_std > 0.0)
    m = grid.fold(m + noise.measurement_std * Vec2(zeta_x, zeta_y));
  next.position = m;
  return next;
}

BatteryStep step_battery(const RobotState &state, const Vec2 &u, double dt,
                         const EnergyParams &params, const RegionMask &charger,
                         const Grid &grid) {
  BatteryStep out{state, false, std::nullopt};
  const auto cell = grid.cell_of(state.true_position);
  if (cell && charger.contains(*cell)) {
    out.charging = true;
    out.state.battery = std::min(1.0, state.battery + params.c3 * dt);
  } else {
    out.state.battery = std::max(0.0, state.battery - params.power(u.norm()) * dt);
  }
  if (out.state.battery < params.e_min)
    out.violation = params.e_min - out.state.battery;
  return out;
}

} // namespace safedensity
