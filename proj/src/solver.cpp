#include "safedensity/solver.hpp"
#include "safedensity/errors.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace safedensity {

namespace {

constexpr double kMembershipTol = 1e-12;

Vec2 perp(const Vec2 &v) { return {-v.y(), v.x()}; }

Vec2 project_ball(const Vec2 &p, const Vec2 &c, double r) {
  const Vec2 d = p - c;
  const double n = d.norm();
  if (n <= r)
    return p;
  return c + d * (r / n);
}

bool in_ball(const Vec2 &p, const Vec2 &c, double r) {
  return (p - c).norm() <= r + kMembershipTol * std::max(1.0, r);
}

// Intersections of the circles |u| = R and |u - c| = r.
int circle_circle(double R, const Vec2 &c, double r, std::array<Vec2, 2> &out) {
  const double d = c.norm();
  if (d == 0.0 || d > R + r || d < std::abs(R - r))
    return 0;
  const Vec2 e = c / d;
  const double a = (R * R - r * r + d * d) / (2.0 * d);
  const double h = std::sqrt(std::max(0.0, R * R - a * a));
  out[0] = a * e + h * perp(e);
  out[1] = a * e - h * perp(e);
  return 2;
}

struct Candidate {
  Vec2 point;
  bool valid;
};

Vec2 nearest(const Vec2 &p, std::span<const Candidate> cands, const Vec2 &fallback) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 out = fallback;
  for (const auto &c : cands) {
    if (!c.valid)
      continue;
    const double d = (c.point - p).squaredNorm();
    if (d < best) {
      best = d;
      out = c.point;
    }
  }
  return out;
}

// Set {c1 |u| - kappa d.u <= beta} for unit d and kappa > 0.
double cone_value(const Vec2 &u, const Vec2 &d, double kappa, double c1, double beta) {
  return c1 * u.norm() - kappa * d.dot(u) - beta;
}

Vec2 shrink(const Vec2 &q, double t) {
  const double n = q.norm();
  if (n <= t)
    return Vec2::Zero();
  return q * (1.0 - t / n);
}

Vec2 project_cone(const Vec2 &p, const Vec2 &d, double kappa, double c1, double beta) {
  if (cone_value(p, d, kappa, c1, beta) <= 0.0)
    return p;
  auto at = [&](double lam) { return shrink(p + lam * kappa * d, lam * c1); };
  auto phi = [&](double lam) { return cone_value(at(lam), d, kappa, c1, beta); };
  double hi = 1.0;
  while (phi(hi) > 0.0 && hi < 1e30)
    hi *= 4.0;
  std::uintmax_t iters = 200;
  const auto br = boost::math::tools::toms748_solve(
      phi, 0.0, hi, phi(0.0), phi(hi), boost::math::tools::eps_tolerance<double>(52), iters);
  return at(br.second);
}

} // namespace

Vec2 RobotConstraint::ball_center() const {
  if (form != Consumption::Quadratic)
    return Vec2::Zero();
  return (kappa / (2.0 * c1)) * dir;
}

double RobotConstraint::ball_radius_sq() const {
  return beta / c1 + ball_center().squaredNorm();
}

double RobotConstraint::violation(const Vec2 &u) const {
  if (fixed)
    return (u - *fixed).norm();
  double v = std::max(0.0, u.norm() - u_max);
  const double energy = form == Consumption::Quadratic
                            ? c1 * u.squaredNorm() - kappa * dir.dot(u) - beta
                            : c1 * u.norm() - kappa * dir.dot(u) - beta;
  return std::max(v, energy);
}

Vec2 RobotConstraint::project(const Vec2 &p) const {
  if (fixed)
    return *fixed;
  const bool cone = form == Consumption::Linear && !dir.isZero();
  if (!cone) {
    // Ball-ball intersection. The linear form with d = 0 is the ball of
    // radius beta / c1 about the origin.
    const Vec2 c = form == Consumption::Quadratic ? ball_center() : Vec2::Zero();
    const double r = form == Consumption::Quadratic ? std::sqrt(std::max(0.0, ball_radius_sq()))
                                                    : std::max(0.0, beta / c1);
    const bool in_a = in_ball(p, Vec2::Zero(), u_max);
    const bool in_b = in_ball(p, c, r);
    if (in_a && in_b)
      return p;
    const Vec2 pa = project_ball(p, Vec2::Zero(), u_max);
    const Vec2 pb = project_ball(p, c, r);
    std::array<Vec2, 2> corners;
    const int nc = circle_circle(u_max, c, r, corners);
    const std::array<Candidate, 4> cands{{{pa, in_ball(pa, c, r)},
                                          {pb, in_ball(pb, Vec2::Zero(), u_max)},
                                          {corners[0], nc > 0},
                                          {corners[1], nc > 1}}};
    return nearest(p, cands, pb);
  }
  auto in_cone = [&](const Vec2 &u) {
    return cone_value(u, dir, kappa, c1, beta) <= kMembershipTol * std::max(1.0, std::abs(beta));
  };
  const bool in_a = in_ball(p, Vec2::Zero(), u_max);
  if (in_a && in_cone(p))
    return p;
  const Vec2 pa = project_ball(p, Vec2::Zero(), u_max);
  const Vec2 pb = project_cone(p, dir, kappa, c1, beta);
  std::array<Candidate, 4> cands{{{pa, in_cone(pa)}, {pb, in_ball(pb, Vec2::Zero(), u_max)},
                                  {Vec2::Zero(), false}, {Vec2::Zero(), false}}};
  const double a = (c1 * u_max - beta) / kappa;
  if (std::abs(a) <= u_max) {
    const double h = std::sqrt(std::max(0.0, u_max * u_max - a * a));
    cands[2] = {a * dir + h * perp(dir), true};
    cands[3] = {a * dir - h * perp(dir), true};
  }
  return nearest(p, cands, pb);
}

// -- ConvexProgram -----------------------------------------------------------

void ConvexProgram::validate() const {
  const auto n = static_cast<Eigen::Index>(2 * n_robots);
  if (clf_g.size() != n || cbf_a.size() != n ||
      robots.size() != static_cast<std::size_t>(n_robots))
    throw DimensionError("convex program rows do not match 2N = " + std::to_string(n));
  if (!(gamma > 0.0))
    throw ConfigError("slack weight gamma must be positive");
  for (int i = 0; i < n_robots; ++i) {
    const auto &r = robots[static_cast<std::size_t>(i)];
    if (r.fixed) {
      if (r.fixed->norm() > r.u_max + 1e-9)
        throw InfeasibleError("pinned command exceeds u_max for robot " + std::to_string(i), i);
      continue;
    }
    const bool empty = r.form == Consumption::Quadratic
                           ? r.ball_radius_sq() < 0.0
                           : r.beta < (r.dir.isZero() ? 0.0 : (r.c1 - r.kappa) * r.u_max);
    if (empty)
      throw InfeasibleError("energy constraint of robot " + std::to_string(i) +
                                " is empty (h_E < 0)",
                            i);
  }
}

double ConvexProgram::slack_for(const Vector &u) const {
  return std::max(0.0, clf_g.dot(u) + clf_b);
}

double ConvexProgram::violation(const Vector &u, double s) const {
  double v = std::max(0.0, -s);
  v = std::max(v, clf_g.dot(u) + clf_b - s);
  v = std::max(v, -(cbf_a.dot(u) + cbf_b));
  for (int i = 0; i < n_robots; ++i)
    v = std::max(v, robots[static_cast<std::size_t>(i)].violation(u.segment<2>(2 * i)));
  return v;
}

std::pair<Vector, double> feasible_point(const ConvexProgram &p) {
  p.validate();
  Vector u = Vector::Zero(2 * p.n_robots);
  for (int i = 0; i < p.n_robots; ++i) {
    const auto &r = p.robots[static_cast<std::size_t>(i)];
    if (r.fixed)
      u.segment<2>(2 * i) = *r.fixed;
    else if (!r.dir.isZero())
      u.segment<2>(2 * i) = r.u_max * r.dir;
  }
  return {u, p.slack_for(u)};
}

double cbf_capacity(const ConvexProgram &p) {
  double cap = 0.0;
  for (int i = 0; i < p.n_robots; ++i) {
    const Vec2 a = p.cbf_a.segment<2>(2 * i);
    const auto &r = p.robots[static_cast<std::size_t>(i)];
    const double n = a.norm();
    // Projecting a far point along a lands on the support point of the set.
    const Vec2 u = n > 0.0 ? r.project(a * (1e6 * r.u_max / n)) : r.project(Vec2::Zero());
    cap += a.dot(u);
  }
  return cap;
}

double relax_cbf(ConvexProgram &p) {
  p.validate();
  const double cap = cbf_capacity(p);
  const double keep = 1e-6 * std::max(1e-3, std::abs(cap));
  const double deficit = -(cap + p.cbf_b) + keep;
  if (deficit <= keep)
    return 0.0;
  p.cbf_b += deficit;
  return deficit;
}

// -- Dual solver -------------------------------------------------------------

namespace {

class DualSolver {
public:
  DualSolver(const ConvexProgram &p, const SolverOptions &opts) : p_(p), opts_(opts) {
    u_ = Vector::Zero(2 * p.n_robots);
  }

  // Primal minimiser for fixed multipliers.
  const Vector &sweep(double lv, double ls) {
    ++sweeps_;
    for (int i = 0; i < p_.n_robots; ++i) {
      const Vec2 w = lv * p_.clf_g.segment<2>(2 * i) - ls * p_.cbf_a.segment<2>(2 * i);
      u_.segment<2>(2 * i) = p_.robots[static_cast<std::size_t>(i)].project(-0.5 * w);
    }
    return u_;
  }

  double clf_residual(double lv, double ls) { return p_.clf_g.dot(sweep(lv, ls)) + p_.clf_b; }

  // Optimal CLF multiplier for a fixed CBF multiplier; leaves u_ at the
  // corresponding minimiser.
  double inner(double ls) {
    const double gamma = p_.gamma;
    if (clf_residual(0.0, ls) <= 0.0)
      return 0.0;
    if (clf_residual(gamma, ls) >= 0.0)
      return gamma;
    auto f = [&](double lv) { return clf_residual(lv, ls); };
    std::uintmax_t iters = 200;
    const auto br = boost::math::tools::toms748_solve(
        f, 0.0, gamma, f(0.0), f(gamma), boost::math::tools::eps_tolerance<double>(50), iters);
    const double lv = 0.5 * (br.first + br.second);
    sweep(lv, ls);
    return lv;
  }

  double cbf_residual(double ls, double &lv) {
    lv = inner(ls);
    return p_.cbf_a.dot(u_) + p_.cbf_b;
  }

  Solution run(const Solution *warm) {
    Solution sol;
    double lv = 0.0;
    double ls = 0.0;
    bool ok = true;
    if (cbf_residual(0.0, lv) < 0.0) {
      double lo = 0.0;
      double hi = warm && warm->lambda_cbf > 0.0 ? warm->lambda_cbf : 1.0;
      double dummy = 0.0;
      double f_hi = cbf_residual(hi, dummy);
      if (warm && warm->lambda_cbf > 0.0 && f_hi < 0.0)
        lo = hi;
      while (f_hi < 0.0 && hi < 1e30 && sweeps_ < opts_.max_iter) {
        lo = hi;
        hi *= 4.0;
        f_hi = cbf_residual(hi, dummy);
      }
      if (f_hi < 0.0) {
        ok = false;
        ls = hi;
      } else {
        auto f = [&](double x) {
          double l = 0.0;
          return cbf_residual(x, l);
        };
        std::uintmax_t iters = 200;
        const auto br = boost::math::tools::toms748_solve(
            f, lo, hi, f(lo), f_hi, boost::math::tools::eps_tolerance<double>(50), iters);
        ls = br.second;
      }
      const double psi = cbf_residual(ls, lv);
      // Rounding in the inner solve can leave a last-ulp deficit; step the
      // multiplier up until the row holds.
      for (int k = 0; ok && psi < 0.0 && k < 60; ++k) {
        ls *= 1.0 + 1e-12 * std::ldexp(1.0, k);
        if (cbf_residual(ls, lv) >= 0.0)
          break;
      }
    }
    sol.u = u_;
    sol.s = p_.slack_for(u_);
    sol.lambda_clf = lv;
    sol.lambda_cbf = ls;
    sol.objective = p_.objective(sol.u, sol.s);
    // Dual value at (lv, ls) with u the exact inner minimiser.
    const double dual = u_.squaredNorm() + lv * (p_.clf_g.dot(u_) + p_.clf_b) -
                        ls * (p_.cbf_a.dot(u_) + p_.cbf_b);
    sol.kkt_residual = std::max(0.0, sol.objective - dual);
    sol.iterations = sweeps_;
    const double viol = p_.violation(sol.u, sol.s);
    ok = ok && sweeps_ <= opts_.max_iter && viol <= opts_.tol &&
         sol.kkt_residual <= opts_.tol * std::max(1.0, std::abs(sol.objective));
    sol.status = ok ? SolveStatus::Optimal : SolveStatus::MaxIterations;
    return sol;
  }

private:
  const ConvexProgram &p_;
  SolverOptions opts_;
  Vector u_;
  int sweeps_ = 0;
};

} // namespace

Solution solve(const ConvexProgram &p, const Solution *warm_start, const SolverOptions &opts) {
  p.validate();
  DualSolver dual(p, opts);
  return dual.run(warm_start);
}

} // namespace safedensity
