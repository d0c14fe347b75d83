#include "safedensity/density.hpp"
#include "safedensity/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>

namespace safedensity {

LocalizationModel::LocalizationModel(const Eigen::Matrix2d &precision)
    : precision_(precision) {
  if (!precision.allFinite())
    throw ModelError("localization precision has non-finite entries");
  if (std::abs(precision(0, 1) - precision(1, 0)) >
      1e-12 * std::max(1.0, precision.cwiseAbs().maxCoeff()))
    throw ModelError("localization precision is not symmetric");
  precision_(1, 0) = precision_(0, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(precision_);
  min_eig_ = es.eigenvalues().minCoeff();
  if (!(min_eig_ > 0.0))
    throw ModelError("localization precision is not positive definite");
}

LocalizationModel LocalizationModel::isotropic(double sigma) {
  if (!(sigma > 0.0))
    throw ModelError("kernel width must be positive");
  return LocalizationModel(Eigen::Matrix2d::Identity() / (sigma * sigma));
}

bool DensityField::complete(const Grid &grid) const {
  if (team.size() != grid.size() || target.size() != grid.size())
    return false;
  return std::all_of(per_robot.begin(), per_robot.end(),
                     [&](const Vector &v) { return v.size() == grid.size(); });
}

namespace {

// Per-axis minimum-image offsets from x to every cell-centre coordinate.
std::vector<double> axis_offsets(const Grid &grid, double x, int axis) {
  const int n = axis == 0 ? grid.nx() : grid.ny();
  const double length = grid.extent()[axis];
  const double o = grid.origin()[axis];
  std::vector<double> d(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double v = o + (i + 0.5) * grid.spacing() - x;
    if (grid.boundary() == Boundary::Periodic)
      v -= length * std::round(v / length);
    d[static_cast<std::size_t>(i)] = v;
  }
  return d;
}

Vector gaussian_on_grid(const Grid &grid, const Vec2 &x,
                        const Eigen::Matrix2d &precision) {
  const auto dx = axis_offsets(grid, x.x(), 0);
  const auto dy = axis_offsets(grid, x.y(), 1);
  Vector out(grid.size());
  if (precision(0, 1) == 0.0) {
    std::vector<double> ex(dx.size()), ey(dy.size());
    for (std::size_t i = 0; i < dx.size(); ++i)
      ex[i] = std::exp(-0.5 * precision(0, 0) * dx[i] * dx[i]);
    for (std::size_t j = 0; j < dy.size(); ++j)
      ey[j] = std::exp(-0.5 * precision(1, 1) * dy[j] * dy[j]);
    for (int iy = 0; iy < grid.ny(); ++iy)
      for (int ix = 0; ix < grid.nx(); ++ix)
        out[grid.flatten(ix, iy)] = ex[static_cast<std::size_t>(ix)] * ey[static_cast<std::size_t>(iy)];
    return out;
  }
  for (int iy = 0; iy < grid.ny(); ++iy) {
    for (int ix = 0; ix < grid.nx(); ++ix) {
      const Vec2 d(dx[static_cast<std::size_t>(ix)], dy[static_cast<std::size_t>(iy)]);
      out[grid.flatten(ix, iy)] = std::exp(-0.5 * d.dot(precision * d));
    }
  }
  return out;
}

} // namespace

Vector evaluate_kernel(const Grid &grid, const Vec2 &x,
                       const LocalizationModel &loc) {
  return gaussian_on_grid(grid, x, loc.precision());
}

DensityField evaluate_kernels(const Grid &grid, std::span<const Vec2> positions,
                              const LocalizationModel &loc) {
  DensityField f;
  f.team = Vector::Zero(grid.size());
  f.per_robot.reserve(positions.size());
  for (const auto &x : positions) {
    f.per_robot.push_back(evaluate_kernel(grid, x, loc));
    f.team += f.per_robot.back();
  }
  return f;
}

Vector build_target(const Grid &grid, const TargetSpec &spec) {
  Vector out = Vector::Zero(grid.size());
  for (const auto &c : spec.components) {
    if (!grid.contains(c.center))
      throw ConfigError("target component centre lies outside the domain");
    if (c.weight < 0.0)
      throw ConfigError("target component weight must be non-negative");
    if (c.weight == 0.0)
      continue;
    LocalizationModel check(c.precision);
    out += c.weight * gaussian_on_grid(grid, c.center, check.precision());
  }
  if (spec.total_mass) {
    const double m = integrate(grid, out);
    if (m > 0.0)
      out *= *spec.total_mass / m;
  }
  return out;
}

double single_kernel_mass(const Grid &grid, const LocalizationModel &loc) {
  const Vec2 mid = grid.origin() + 0.5 * grid.extent();
  return integrate(grid, evaluate_kernel(grid, mid, loc));
}

double single_kernel_sq_mass(const Grid &grid, const LocalizationModel &loc) {
  const Vec2 mid = grid.origin() + 0.5 * grid.extent();
  const Vector k = evaluate_kernel(grid, mid, loc);
  return integrate(grid, k.cwiseProduct(k));
}

void write_pgm(const std::filesystem::path &path, const Grid &grid,
               const Vector &values, double scale_max) {
  if (values.size() != grid.size())
    throw DimensionError("snapshot size does not match grid");
  const double scale = scale_max > 0.0 ? scale_max : std::max(values.maxCoeff(), 0.0);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << grid.nx() << ' ' << grid.ny() << "\n65535\n";
  for (int iy = grid.ny() - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < grid.nx(); ++ix) {
      double v = scale > 0.0 ? values[grid.flatten(ix, iy)] / scale : 0.0;
      v = std::clamp(v, 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                                      static_cast<unsigned char>(q & 0xff)};
      out.write(reinterpret_cast<const char *>(bytes), 2);
    }
  }
  if (!out)
    throw std::runtime_error("short write to " + path.string());

  std::ofstream meta(path.string() + ".meta");
  if (!meta)
    throw std::runtime_error("cannot write " + path.string() + ".meta");
  meta << std::setprecision(17);
  meta << "format = pgm16\n"
       << "nx = " << grid.nx() << "\n"
       << "ny = " << grid.ny() << "\n"
       << "spacing = " << grid.spacing() << "\n"
       << "origin_x = " << grid.origin().x() << "\n"
       << "origin_y = " << grid.origin().y() << "\n"
       << "boundary = " << (grid.boundary() == Boundary::Periodic ? "periodic" : "neumann") << "\n"
       << "row_order = top_down\n"
       << "scale_max = " << scale << "\n";
}

} // namespace safedensity
