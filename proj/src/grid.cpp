#include "safedensity/grid.hpp"
#include "safedensity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace safedensity {

Grid::Grid(int nx, int ny, double spacing, Vec2 origin, Boundary boundary)
    : nx_(nx), ny_(ny), l_(spacing), origin_(std::move(origin)),
      boundary_(boundary) {
  if (nx < 3 || ny < 3)
    throw ConfigError("grid needs at least 3 cells per axis, got " +
                      std::to_string(nx) + "x" + std::to_string(ny));
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw ConfigError("grid spacing must be positive");
}

bool Grid::contains(const Vec2 &p) const {
  const Vec2 q = p - origin_;
  const Vec2 e = extent();
  return q.x() >= 0.0 && q.y() >= 0.0 && q.x() <= e.x() && q.y() <= e.y();
}

std::optional<int> Grid::cell_of(const Vec2 &p) const {
  if (!contains(p))
    return std::nullopt;
  const Vec2 q = (p - origin_) / l_;
  const int ix = std::min(static_cast<int>(std::floor(q.x())), nx_ - 1);
  const int iy = std::min(static_cast<int>(std::floor(q.y())), ny_ - 1);
  return flatten(ix, iy);
}

Vec2 Grid::displacement(const Vec2 &from, const Vec2 &to) const {
  Vec2 d = to - from;
  if (boundary_ == Boundary::Periodic) {
    const Vec2 e = extent();
    for (int a = 0; a < 2; ++a)
      d[a] -= e[a] * std::round(d[a] / e[a]);
  }
  return d;
}

namespace {

double fold_axis(double x, double length, Boundary bc) {
  if (bc == Boundary::Periodic) {
    double r = std::fmod(x, length);
    if (r < 0.0)
      r += length;
    return r;
  }
  // Reflection with period 2L.
  double r = std::fmod(x, 2.0 * length);
  if (r < 0.0)
    r += 2.0 * length;
  return r <= length ? r : 2.0 * length - r;
}

// Neighbour index along one axis with the grid's boundary treatment. Neumann
// mirrors the ghost cell onto the boundary cell itself (cell-centred mirror).
int neighbour(int i, int n, Boundary bc) {
  if (i >= 0 && i < n)
    return i;
  if (bc == Boundary::Periodic)
    return (i + n) % n;
  return i < 0 ? 0 : n - 1;
}

} // namespace

Vec2 Grid::fold(const Vec2 &p) const {
  const Vec2 q = p - origin_;
  const Vec2 e = extent();
  return origin_ + Vec2(fold_axis(q.x(), e.x(), boundary_),
                        fold_axis(q.y(), e.y(), boundary_));
}

SparseOperator build_laplacian(const Grid &grid) {
  const int nx = grid.nx();
  const int ny = grid.ny();
  const double inv_l2 = 1.0 / (grid.spacing() * grid.spacing());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(grid.size()) * 5);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int k = grid.flatten(ix, iy);
      t.emplace_back(k, k, -4.0 * inv_l2);
      t.emplace_back(k, grid.flatten(neighbour(ix + 1, nx, grid.boundary()), iy), inv_l2);
      t.emplace_back(k, grid.flatten(neighbour(ix - 1, nx, grid.boundary()), iy), inv_l2);
      t.emplace_back(k, grid.flatten(ix, neighbour(iy + 1, ny, grid.boundary())), inv_l2);
      t.emplace_back(k, grid.flatten(ix, neighbour(iy - 1, ny, grid.boundary())), inv_l2);
    }
  }
  SparseOperator op(grid.size(), grid.size());
  op.setFromTriplets(t.begin(), t.end());
  op.prune(0.0);
  return op;
}

std::pair<SparseOperator, SparseOperator> build_gradient(const Grid &grid) {
  const int nx = grid.nx();
  const int ny = grid.ny();
  const double h = 0.5 / grid.spacing();
  std::vector<Eigen::Triplet<double>> tx, ty;
  tx.reserve(static_cast<std::size_t>(grid.size()) * 2);
  ty.reserve(static_cast<std::size_t>(grid.size()) * 2);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int k = grid.flatten(ix, iy);
      tx.emplace_back(k, grid.flatten(neighbour(ix + 1, nx, grid.boundary()), iy), h);
      tx.emplace_back(k, grid.flatten(neighbour(ix - 1, nx, grid.boundary()), iy), -h);
      ty.emplace_back(k, grid.flatten(ix, neighbour(iy + 1, ny, grid.boundary())), h);
      ty.emplace_back(k, grid.flatten(ix, neighbour(iy - 1, ny, grid.boundary())), -h);
    }
  }
  SparseOperator dx(grid.size(), grid.size());
  SparseOperator dy(grid.size(), grid.size());
  dx.setFromTriplets(tx.begin(), tx.end());
  dy.setFromTriplets(ty.begin(), ty.end());
  // Mirrored boundary rows collapse to a single one-sided pair; drop the
  // cancelled entries.
  dx.prune(0.0);
  dy.prune(0.0);
  return {std::move(dx), std::move(dy)};
}

AdvectionColumns build_advection(const Grid &grid, const Vector &kernel) {
  if (kernel.size() != grid.size())
    throw DimensionError("advection kernel has " +
                         std::to_string(kernel.size()) + " entries, grid has " +
                         std::to_string(grid.size()));
  const int nx = grid.nx();
  const int ny = grid.ny();
  const double h = 0.5 / grid.spacing();
  AdvectionColumns cols{Vector(grid.size()), Vector(grid.size())};
  for (int iy = 0; iy < ny; ++iy) {
    const int yp = neighbour(iy + 1, ny, grid.boundary());
    const int ym = neighbour(iy - 1, ny, grid.boundary());
    for (int ix = 0; ix < nx; ++ix) {
      const int xp = neighbour(ix + 1, nx, grid.boundary());
      const int xm = neighbour(ix - 1, nx, grid.boundary());
      const int k = grid.flatten(ix, iy);
      cols.x[k] = -(kernel[grid.flatten(xp, iy)] - kernel[grid.flatten(xm, iy)]) * h;
      cols.y[k] = -(kernel[grid.flatten(ix, yp)] - kernel[grid.flatten(ix, ym)]) * h;
    }
  }
  return cols;
}

bool shape_contains(const Shape &shape, const Vec2 &p) {
  return std::visit(
      [&](const auto &s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Disc>)
          return (p - s.center).squaredNorm() <= s.radius * s.radius && s.radius > 0.0;
        else
          return p.x() >= s.lo.x() && p.x() <= s.hi.x() && p.y() >= s.lo.y() &&
                 p.y() <= s.hi.y();
      },
      shape);
}

RegionMask::RegionMask(int n_cells, std::vector<int> cells,
                       std::vector<Shape> source, bool touches_boundary)
    : cells_(std::move(cells)), flags_(static_cast<std::size_t>(n_cells), 0),
      source_(std::move(source)), touches_boundary_(touches_boundary) {
  std::sort(cells_.begin(), cells_.end());
  cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
  for (int k : cells_) {
    if (k < 0 || k >= n_cells)
      throw DimensionError("mask cell index out of range");
    flags_[static_cast<std::size_t>(k)] = 1;
  }
}

namespace {

bool reaches_boundary(const Grid &grid, const Shape &shape) {
  const Vec2 lo = grid.origin();
  const Vec2 hi = grid.origin() + grid.extent();
  return std::visit(
      [&](const auto &s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Disc>) {
          if (s.radius <= 0.0)
            return false;
          return s.center.x() - s.radius <= lo.x() || s.center.y() - s.radius <= lo.y() ||
                 s.center.x() + s.radius >= hi.x() || s.center.y() + s.radius >= hi.y();
        } else {
          return s.lo.x() <= lo.x() || s.lo.y() <= lo.y() || s.hi.x() >= hi.x() ||
                 s.hi.y() >= hi.y();
        }
      },
      shape);
}

} // namespace

RegionMask mask_from_geometry(const Grid &grid, std::span<const Shape> shapes) {
  std::vector<int> cells;
  bool touches = false;
  for (const auto &s : shapes)
    touches = touches || reaches_boundary(grid, s);
  for (int k = 0; k < grid.size(); ++k) {
    const Vec2 c = grid.center(k);
    if (std::any_of(shapes.begin(), shapes.end(),
                    [&](const Shape &s) { return shape_contains(s, c); }))
      cells.push_back(k);
  }
  return RegionMask(grid.size(), std::move(cells),
                    std::vector<Shape>(shapes.begin(), shapes.end()), touches);
}

double integrate(const Grid &grid, const Vector &values, const RegionMask *mask) {
  if (values.size() != grid.size())
    throw DimensionError("integrand size does not match grid");
  if (mask == nullptr)
    return grid.cell_area() * values.sum();
  double acc = 0.0;
  for (int k : mask->cells())
    acc += values[k];
  return grid.cell_area() * acc;
}

} // namespace safedensity
