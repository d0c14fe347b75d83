#include "safedensity/planner.hpp"
#include "safedensity/errors.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace safedensity {

void PlannerConfig::validate() const {
  if (max_iterations < 1)
    throw ConfigError("planner needs at least one iteration");
  if (!(steer_step > 0.0))
    throw ConfigError("steer_step must be positive");
  if (!(goal_bias >= 0.0 && goal_bias < 1.0))
    throw ConfigError("goal_bias must lie in [0, 1)");
  if (!(feasibility_margin > 0.0))
    throw ConfigError("feasibility_margin must be positive");
}

PlannedPath PlannedPath::from_waypoints(std::vector<Vec2> waypoints, double kappa) {
  PlannedPath p;
  p.waypoints = std::move(waypoints);
  for (std::size_t i = 1; i < p.waypoints.size(); ++i) {
    const Vec2 seg = p.waypoints[i] - p.waypoints[i - 1];
    const double n = seg.norm();
    if (p.first_dir.isZero() && n > 0.0)
      p.first_dir = seg / n;
    p.length += n;
  }
  p.energy_to_charge = kappa * p.length;
  return p;
}

double energy_per_meter(const EnergyParams &energy, double u_max) {
  return energy.power(u_max) / u_max;
}

double path_direction_rate(const PlannedPath &path, const Vec2 &u, double kappa) {
  return -kappa * path.first_dir.dot(u);
}

// -- DangerMap ---------------------------------------------------------------

DangerMap::DangerMap(const Grid &grid, const RegionMask &danger,
                     const LocalizationModel &loc)
    : grid_(grid), danger_(danger), loc_(loc) {
  ax_.reserve(danger.size());
  ay_.reserve(danger.size());
  ix_lo_ = grid.nx();
  iy_lo_ = grid.ny();
  for (int k : danger.cells()) {
    auto [ix, iy] = grid.unflatten(k);
    ax_.push_back(ix);
    ay_.push_back(iy);
    ix_lo_ = std::min(ix_lo_, ix);
    ix_hi_ = std::max(ix_hi_, ix);
    iy_lo_ = std::min(iy_lo_, iy);
    iy_hi_ = std::max(iy_hi_, iy);
  }
  clearance_.assign(static_cast<std::size_t>(grid.size()),
                    std::numeric_limits<double>::infinity());
  if (danger.empty())
    return;
  for (int c = 0; c < grid.size(); ++c) {
    const Vec2 pc = grid.center(c);
    double best = std::numeric_limits<double>::infinity();
    for (int k : danger.cells())
      best = std::min(best, grid.displacement(pc, grid.center(k)).squaredNorm());
    clearance_[static_cast<std::size_t>(c)] = std::sqrt(best);
  }
}

double DangerMap::upper_bound(const Vec2 &x) const {
  if (danger_.empty())
    return 0.0;
  const auto cell = grid_.cell_of(grid_.fold(x));
  if (!cell)
    return std::numeric_limits<double>::infinity();
  const double d = std::max(
      0.0, clearance_[static_cast<std::size_t>(*cell)] - grid_.spacing() * M_SQRT1_2);
  return static_cast<double>(danger_.size()) * grid_.cell_area() *
         std::exp(-loc_.min_eigenvalue() * d * d);
}

double DangerMap::masked_mass(const Vec2 &x) const {
  if (danger_.empty())
    return 0.0;
  const auto &P = loc_.precision();
  auto offset = [&](double coord, int i, int axis) {
    const double length = grid_.extent()[axis];
    double v = grid_.origin()[axis] + (i + 0.5) * grid_.spacing() - coord;
    if (grid_.boundary() == Boundary::Periodic)
      v -= length * std::round(v / length);
    return v;
  };
  double acc = 0.0;
  if (loc_.diagonal()) {
    const int wx = ix_hi_ - ix_lo_ + 1;
    const int wy = iy_hi_ - iy_lo_ + 1;
    std::vector<double> ex(static_cast<std::size_t>(wx)), ey(static_cast<std::size_t>(wy));
    for (int i = 0; i < wx; ++i) {
      const double d = offset(x.x(), ix_lo_ + i, 0);
      ex[static_cast<std::size_t>(i)] = std::exp(-P(0, 0) * d * d);
    }
    for (int j = 0; j < wy; ++j) {
      const double d = offset(x.y(), iy_lo_ + j, 1);
      ey[static_cast<std::size_t>(j)] = std::exp(-P(1, 1) * d * d);
    }
    for (std::size_t n = 0; n < ax_.size(); ++n)
      acc += ex[static_cast<std::size_t>(ax_[n] - ix_lo_)] *
             ey[static_cast<std::size_t>(ay_[n] - iy_lo_)];
  } else {
    for (std::size_t n = 0; n < ax_.size(); ++n) {
      const Vec2 d(offset(x.x(), ax_[n], 0), offset(x.y(), ay_[n], 1));
      acc += std::exp(-d.dot(P * d));
    }
  }
  return grid_.cell_area() * acc;
}

bool DangerMap::within(const Vec2 &x, double budget) const {
  if (upper_bound(x) <= budget)
    return true;
  return masked_mass(x) <= budget;
}

bool DangerMap::segment_within(const Vec2 &a, const Vec2 &b, double budget) const {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / (0.5 * grid_.spacing()))));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    if (!within(a + t * (b - a), budget))
      return false;
  }
  return true;
}

bool check_segment(const Vec2 &a, const Vec2 &b, const RegionMask &danger,
                   const Grid &grid, const LocalizationModel &loc,
                   const SegmentBudget &budget) {
  DangerMap map(grid, danger, loc);
  return map.segment_within(a, b, budget.per_robot());
}

// -- Planner -----------------------------------------------------------------

Planner::Planner(const Grid &grid, const RegionMask &danger, const RegionMask &charger,
                 const LocalizationModel &loc, SegmentBudget budget, PlannerConfig cfg,
                 double kappa)
    : grid_(grid), charger_(charger), map_(grid, danger, loc), budget_(budget),
      cfg_(cfg), kappa_(kappa) {
  cfg_.validate();
  if (charger_.empty())
    throw std::invalid_argument("charging region is empty");
  for (int k : charger_.cells())
    if (danger.contains(k))
      throw std::invalid_argument("charging region overlaps the danger region");
}

bool Planner::in_charger(const Vec2 &x) const {
  const auto cell = grid_.cell_of(x);
  return cell && charger_.contains(*cell);
}

double Planner::effective_budget(const Vec2 &start) const {
  // A start already above the per-robot share may still leave along
  // segments that never exceed its current mass.
  const double b = budget_.per_robot();
  if (map_.within(start, b))
    return b;
  return map_.masked_mass(start);
}

Vec2 Planner::sample_free(RngStream &rng) const {
  const Vec2 lo = grid_.origin();
  const Vec2 e = grid_.extent();
  Vec2 p = lo;
  for (int attempt = 0; attempt < 64; ++attempt) {
    p = lo + Vec2(rng.uniform() * e.x(), rng.uniform() * e.y());
    const auto cell = grid_.cell_of(p);
    if (cell && !map_.danger().contains(*cell))
      break;
  }
  return p;
}

Vec2 Planner::sample_goal(RngStream &rng) const {
  const auto &cells = charger_.cells();
  const auto i = std::min(cells.size() - 1,
                          static_cast<std::size_t>(rng.uniform() * static_cast<double>(cells.size())));
  return grid_.center(cells[i]);
}

PlanResult Planner::plan(const Vec2 &start, RngStream &rng) const {
  const auto cell = grid_.cell_of(start);
  if (!cell)
    throw std::invalid_argument("planner start lies outside the domain");
  if (map_.danger().contains(*cell))
    throw std::invalid_argument("planner start lies inside the danger region");
  if (charger_.contains(*cell)) {
    PlanResult r;
    r.status = PlanStatus::Success;
    r.path = PlannedPath::from_waypoints({start}, kappa_);
    r.tree_size = 1;
    return r;
  }
  return cfg_.mode == PlannerMode::FreeSpace ? plan_free(start, rng) : plan_grid(start, rng);
}

std::vector<Vec2> Planner::shortcut(const std::vector<Vec2> &raw, double budget) const {
  std::vector<Vec2> out{raw.front()};
  std::size_t i = 0;
  const std::size_t last = raw.size() - 1;
  while (i < last) {
    std::size_t j = last;
    while (j > i + 1 && !map_.segment_within(raw[i], raw[j], budget))
      --j;
    out.push_back(raw[j]);
    i = j;
  }
  return out;
}

namespace {

// Cuts the path at the first half-cell sample that lands in the charger,
// provided the shortened final segment still passes the check.
std::vector<Vec2> trim_at_charger(std::vector<Vec2> path, const Grid &grid,
                                  const Planner &planner, double budget) {
  for (std::size_t s = 1; s < path.size(); ++s) {
    const Vec2 a = path[s - 1];
    const Vec2 b = path[s];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / (0.5 * grid.spacing()))));
    for (int i = 1; i <= n; ++i) {
      const Vec2 p = a + (static_cast<double>(i) / n) * (b - a);
      if (!planner.in_charger(p))
        continue;
      if (i < n && !planner.danger_map().segment_within(a, p, budget))
        return path;
      path.resize(s + 1);
      path[s] = p;
      return path;
    }
  }
  return path;
}

} // namespace

PlanResult Planner::plan_free(const Vec2 &start, RngStream &rng) const {
  const double budget = effective_budget(start);
  std::vector<Vec2> nodes{start};
  std::vector<int> parent{-1};
  PlanResult r;
  for (int it = 1; it <= cfg_.max_iterations; ++it) {
    r.iterations = it;
    const Vec2 target = rng.uniform() < cfg_.goal_bias ? sample_goal(rng) : sample_free(rng);
    std::size_t near = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const double d = (nodes[n] - target).squaredNorm();
      if (d < best) {
        best = d;
        near = n;
      }
    }
    const Vec2 from = nodes[near];
    const Vec2 delta = target - from;
    const double dist = delta.norm();
    if (dist < 1e-12)
      continue;
    const Vec2 reached = dist <= cfg_.steer_step ? target : from + delta * (cfg_.steer_step / dist);
    if (!map_.segment_within(from, reached, budget))
      continue;
    nodes.push_back(reached);
    parent.push_back(static_cast<int>(near));
    if (!in_charger(reached))
      continue;

    std::vector<Vec2> branch;
    for (int n = static_cast<int>(nodes.size()) - 1; n >= 0; n = parent[static_cast<std::size_t>(n)])
      branch.push_back(nodes[static_cast<std::size_t>(n)]);
    std::reverse(branch.begin(), branch.end());
    if (cfg_.shortcut)
      branch = trim_at_charger(shortcut(branch, budget), grid_, *this, budget);
    r.status = PlanStatus::Success;
    r.path = PlannedPath::from_waypoints(std::move(branch), kappa_);
    r.tree_size = static_cast<int>(nodes.size());
    return r;
  }
  r.tree_size = static_cast<int>(nodes.size());
  return r;
}

PlanResult Planner::plan_grid(const Vec2 &start, RngStream &rng) const {
  const double budget = effective_budget(start);
  const int root = *grid_.cell_of(start);
  std::vector<int> nodes{root};
  std::vector<int> parent{-1};
  std::unordered_set<int> in_tree{root};
  const int max_steps = std::max(1, static_cast<int>(std::floor(cfg_.steer_step / grid_.spacing())));
  PlanResult r;

  auto finish = [&](std::size_t leaf) {
    std::vector<Vec2> wps;
    for (int n = static_cast<int>(leaf); n >= 0; n = parent[static_cast<std::size_t>(n)])
      wps.push_back(grid_.center(nodes[static_cast<std::size_t>(n)]));
    wps.push_back(start);
    std::reverse(wps.begin(), wps.end());
    if ((wps[1] - wps[0]).squaredNorm() == 0.0)
      wps.erase(wps.begin() + 1);
    r.status = PlanStatus::Success;
    r.path = PlannedPath::from_waypoints(std::move(wps), kappa_);
    r.tree_size = static_cast<int>(nodes.size());
    return r;
  };

  if (!map_.segment_within(start, grid_.center(root), budget)) {
    r.tree_size = 1;
    return r;
  }
  for (int it = 1; it <= cfg_.max_iterations; ++it) {
    r.iterations = it;
    const Vec2 target = rng.uniform() < cfg_.goal_bias ? sample_goal(rng) : sample_free(rng);
    const auto target_cell = grid_.cell_of(target);
    if (!target_cell)
      continue;
    const auto [tx, ty] = grid_.unflatten(*target_cell);
    std::size_t near = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const double d = (grid_.center(nodes[n]) - grid_.center(*target_cell)).squaredNorm();
      if (d < best) {
        best = d;
        near = n;
      }
    }
    std::size_t cur = near;
    for (int s = 0; s < max_steps; ++s) {
      const auto [cx, cy] = grid_.unflatten(nodes[cur]);
      const int dx = (tx > cx) - (tx < cx);
      const int dy = (ty > cy) - (ty < cy);
      if (dx == 0 && dy == 0)
        break;
      const int next = grid_.flatten(cx + dx, cy + dy);
      if (in_tree.count(next) || map_.danger().contains(next) ||
          !map_.segment_within(grid_.center(nodes[cur]), grid_.center(next), budget))
        break;
      nodes.push_back(next);
      parent.push_back(static_cast<int>(cur));
      in_tree.insert(next);
      cur = nodes.size() - 1;
      if (charger_.contains(next))
        return finish(cur);
    }
  }
  r.tree_size = static_cast<int>(nodes.size());
  return r;
}

std::optional<PlannedPath> Planner::advance(const PlannedPath &previous, const Vec2 &x) const {
  if (in_charger(x))
    return PlannedPath::from_waypoints({x}, kappa_);
  const auto &w = previous.waypoints;
  if (w.size() < 2)
    return std::nullopt;
  std::size_t seg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + 1 < w.size(); ++s) {
    const Vec2 ab = w[s + 1] - w[s];
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((x - w[s]).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const double d = (w[s] + t * ab - x).squaredNorm();
    if (d < best) {
      best = d;
      seg = s;
    }
  }
  std::vector<Vec2> wps{x};
  wps.insert(wps.end(), w.begin() + static_cast<std::ptrdiff_t>(seg + 1), w.end());
  if (!map_.segment_within(wps[0], wps[1], effective_budget(x)))
    return std::nullopt;
  return PlannedPath::from_waypoints(std::move(wps), kappa_);
}

bool Planner::path_safe(const PlannedPath &path) const {
  if (path.waypoints.empty())
    return false;
  const double budget = effective_budget(path.waypoints.front());
  for (std::size_t s = 1; s < path.waypoints.size(); ++s)
    if (!map_.segment_within(path.waypoints[s - 1], path.waypoints[s], budget))
      return false;
  return true;
}

} // namespace safedensity
