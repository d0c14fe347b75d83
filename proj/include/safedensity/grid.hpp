#pragma once

/// @file grid.hpp
/// @brief Uniform cell-centred 2D grid, five-point finite-difference operators
/// and geometric region masks.
///
/// Cells are indexed row-major along x: k = iy * nx + ix. Cell (ix, iy) has
/// its centre at origin + ((ix + 0.5) l, (iy + 0.5) l).

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace safedensity {

using Vec2 = Eigen::Vector2d;
using Vector = Eigen::VectorXd;
using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Boundary { Periodic, Neumann };

class Grid {
public:
  Grid(int nx, int ny, double spacing, Vec2 origin = Vec2::Zero(),
       Boundary boundary = Boundary::Periodic);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return nx_ * ny_; }
  double spacing() const { return l_; }
  double cell_area() const { return l_ * l_; }
  const Vec2 &origin() const { return origin_; }
  Boundary boundary() const { return boundary_; }
  Vec2 extent() const { return {nx_ * l_, ny_ * l_}; }

  int flatten(int ix, int iy) const { return iy * nx_ + ix; }
  std::pair<int, int> unflatten(int k) const { return {k % nx_, k / nx_}; }

  Vec2 center(int ix, int iy) const {
    return origin_ + Vec2((ix + 0.5) * l_, (iy + 0.5) * l_);
  }
  Vec2 center(int k) const {
    auto [ix, iy] = unflatten(k);
    return center(ix, iy);
  }

  bool contains(const Vec2 &p) const;

  /// Cell containing p, or nullopt when p lies outside the domain.
  std::optional<int> cell_of(const Vec2 &p) const;

  /// to - from, using the minimum image under periodic boundaries.
  Vec2 displacement(const Vec2 &from, const Vec2 &to) const;

  /// Maps a point back into the domain: wrapped (Periodic) or mirrored
  /// (Neumann).
  Vec2 fold(const Vec2 &p) const;

private:
  int nx_;
  int ny_;
  double l_;
  Vec2 origin_;
  Boundary boundary_;
};

/// Five-point Laplacian. Neumann rows mirror the ghost cell onto the boundary
/// cell, so every row sums to zero under both boundary modes.
SparseOperator build_laplacian(const Grid &grid);

/// Central first-difference operators d/dx and d/dy with the same boundary
/// treatment as build_laplacian.
std::pair<SparseOperator, SparseOperator> build_gradient(const Grid &grid);

/// The two columns of A(rho_i): central-difference -d(rho)/dx and -d(rho)/dy,
/// so that col_x * u_x + col_y * u_y approximates -div(u rho) for constant u.
struct AdvectionColumns {
  Vector x;
  Vector y;
};

/// Throws std::invalid_argument when kernel.size() != grid.size().
AdvectionColumns build_advection(const Grid &grid, const Vector &kernel);

struct Disc {
  Vec2 center;
  double radius;
};

struct Rect {
  Vec2 lo;
  Vec2 hi;
};

using Shape = std::variant<Disc, Rect>;

bool shape_contains(const Shape &shape, const Vec2 &p);

class RegionMask {
public:
  RegionMask() = default;
  RegionMask(int n_cells, std::vector<int> cells, std::vector<Shape> source,
             bool touches_boundary);

  const std::vector<int> &cells() const { return cells_; }
  const std::vector<Shape> &source() const { return source_; }
  bool contains(int k) const { return k >= 0 && k < static_cast<int>(flags_.size()) && flags_[k]; }
  bool empty() const { return cells_.empty(); }
  std::size_t size() const { return cells_.size(); }
  /// True when some shape reaches or crosses the domain boundary.
  bool touches_boundary() const { return touches_boundary_; }

private:
  std::vector<int> cells_;
  std::vector<char> flags_;
  std::vector<Shape> source_;
  bool touches_boundary_ = false;
};

RegionMask mask_from_geometry(const Grid &grid, std::span<const Shape> shapes);

/// l^2 * sum(values) over all cells, or over the masked cells only.
double integrate(const Grid &grid, const Vector &values,
                 const RegionMask *mask = nullptr);

} // namespace safedensity
