#pragma once

/// @file density.hpp
/// @brief Belief-weighted team density, per-robot Gaussian kernels and the
/// target density, all sampled at cell centres.

#include "safedensity/grid.hpp"

#include <Eigen/Core>

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace safedensity {

/// Shared localisation precision (inverse covariance, units m^-2).
class LocalizationModel {
public:
  /// Throws ModelError unless precision is symmetric positive definite.
  explicit LocalizationModel(const Eigen::Matrix2d &precision);

  static LocalizationModel isotropic(double sigma);

  const Eigen::Matrix2d &precision() const { return precision_; }
  bool diagonal() const { return precision_(0, 1) == 0.0; }
  /// Smallest eigenvalue of the precision; bounds kernel decay from below.
  double min_eigenvalue() const { return min_eig_; }

  /// exp(-0.5 d^T P d)
  double kernel(const Vec2 &d) const {
    return std::exp(-0.5 * d.dot(precision_ * d));
  }

private:
  Eigen::Matrix2d precision_;
  double min_eig_;
};

/// Module default localisation width.
inline constexpr double kDefaultKernelSigma = 0.15;

struct DensityField {
  Vector team;
  std::vector<Vector> per_robot;
  Vector target;

  bool complete(const Grid &grid) const;
};

/// Kernel of a single robot measured at x (minimum image on periodic grids).
Vector evaluate_kernel(const Grid &grid, const Vec2 &x,
                       const LocalizationModel &loc);

/// Fills per_robot and team; target is left empty. The team sum is reduced in
/// robot order.
DensityField evaluate_kernels(const Grid &grid, std::span<const Vec2> positions,
                              const LocalizationModel &loc);

struct GaussianComponent {
  Vec2 center;
  double weight = 1.0;
  Eigen::Matrix2d precision = Eigen::Matrix2d::Identity();
};

struct TargetSpec {
  std::vector<GaussianComponent> components;
  /// When set, the sampled target is rescaled so integrate(target) equals
  /// this value (unless every component has zero weight).
  std::optional<double> total_mass;
};

/// Throws ConfigError when a component centre lies outside the domain or a
/// weight is negative.
Vector build_target(const Grid &grid, const TargetSpec &spec);

/// integrate(kernel) and integrate(kernel^2) for one robot at the domain
/// centre.
double single_kernel_mass(const Grid &grid, const LocalizationModel &loc);
double single_kernel_sq_mass(const Grid &grid, const LocalizationModel &loc);

/// Binary 16-bit PGM, rows written from the top of the domain (largest y)
/// down, plus `<path>.meta` carrying grid metadata and the scale. Values are
/// mapped to [0, 65535] by value / scale_max, clamped. A non-positive
/// scale_max uses max(values).
void write_pgm(const std::filesystem::path &path, const Grid &grid,
               const Vector &values, double scale_max = 0.0);

} // namespace safedensity
