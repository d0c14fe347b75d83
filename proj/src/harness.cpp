#include "safedensity/harness.hpp"
#include "safedensity/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

namespace safedensity {

const char *to_string(EventKind kind) {
  switch (kind) {
  case EventKind::EnergyViolation: return "energy_violation";
  case EventKind::PlannerRetry: return "planner_retry";
  case EventKind::PlannerFailure: return "planner_failure";
  case EventKind::SolverFallback: return "solver_fallback";
  case EventKind::EnergyClamp: return "energy_clamp";
  case EventKind::HoldStart: return "hold_start";
  case EventKind::HoldEnd: return "hold_end";
  case EventKind::CbfRelaxed: return "cbf_relaxed";
  }
  return "unknown";
}

// -- RunLog ------------------------------------------------------------------

int RunLog::count(EventKind kind) const {
  return static_cast<int>(std::count_if(events.begin(), events.end(),
                                        [&](const Event &e) { return e.kind == kind; }));
}

double RunLog::max_violation() const {
  double m = 0.0;
  for (const auto &e : events)
    if (e.kind == EventKind::EnergyViolation)
      m = std::max(m, e.value);
  return m;
}

double RunLog::min_h_s() const {
  double m = final_state.h_s;
  for (const auto &s : steps)
    m = std::min(m, s.h_s);
  return m;
}

double RunLog::min_battery() const {
  double m = std::numeric_limits<double>::infinity();
  auto scan = [&](const StepRecord &s) {
    for (const auto &r : s.robots)
      m = std::min(m, r.battery);
  };
  for (const auto &s : steps)
    scan(s);
  scan(final_state);
  return n_robots == 0 ? 0.0 : m;
}

double RunLog::initial_V() const { return steps.empty() ? final_state.V : steps.front().V; }

bool RunLog::feasible() const { return violation_steps() == 0 && min_h_s() >= 0.0; }

bool RunLog::clean() const {
  return !aborted && count(EventKind::PlannerFailure) == 0 &&
         count(EventKind::SolverFallback) == 0;
}

// -- Episode -----------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Vec2 shape_center(const Shape &s) {
  if (const auto *d = std::get_if<Disc>(&s))
    return d->center;
  const auto &r = std::get<Rect>(s);
  return 0.5 * (r.lo + r.hi);
}

double reflect_axis(double x, double lo, double hi) {
  const double w = hi - lo;
  double q = std::fmod(x - lo, 2.0 * w);
  if (q < 0.0)
    q += 2.0 * w;
  return lo + (q <= w ? q : 2.0 * w - q);
}

Vec2 clip(const Vec2 &u, double u_max) {
  const double n = u.norm();
  return n > u_max ? Vec2(u * (u_max / n)) : u;
}

class Episode {
public:
  Episode(const ScenarioConfig &cfg, std::uint64_t seed)
      : cfg_(cfg), grid_(cfg.grid()), loc_(cfg.localization()), noise_(cfg.noise()),
        n_(static_cast<int>(cfg.robots.size())), eps_(cfg.epsilon()), root_(seed) {
    cfg.validate();
    gains_ = cfg.gains;
    gains_.epsilon = eps_;
    danger_ = mask_from_geometry(grid_, cfg.danger);
    charger_ = mask_from_geometry(grid_, cfg.charger);
    ops_.laplacian = build_laplacian(grid_);
    kernel_mass_ = single_kernel_mass(grid_, loc_);
    kappa_ = energy_per_meter(cfg.energy, cfg.u_max);
    if (n_ > 0) {
      const SegmentBudget budget{eps_, n_, cfg.planner.feasibility_margin};
      planner_.emplace(grid_, danger_, charger_, loc_, budget, cfg.planner, kappa_);
      PlannerConfig retry = cfg.planner;
      retry.max_iterations *= 2;
      retry_planner_.emplace(grid_, danger_, charger_, loc_, budget, retry, kappa_);
    }
    for (int i = 0; i < n_; ++i) {
      RobotState s;
      s.true_position = s.position = cfg.robots[static_cast<std::size_t>(i)].position;
      s.battery = cfg.robots[static_cast<std::size_t>(i)].battery;
      robots_.push_back(s);
      motion_rng_.push_back(root_.split(static_cast<std::uint64_t>(i)));
      plan_rng_.push_back(root_.split(1000 + static_cast<std::uint64_t>(i)));
    }
    paths_.resize(static_cast<std::size_t>(n_));
    has_path_.assign(static_cast<std::size_t>(n_), false);
    held_.assign(static_cast<std::size_t>(n_), false);
    prev_u_ = Vector::Zero(2 * n_);
    log_.seed = seed;
    log_.n_robots = n_;
    log_.dt = cfg.dt;
  }

  RunLog run() {
    const int steps = cfg_.steps();
    log_.steps.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k)
      step(k);
    log_.final_state = snapshot(steps, steps * cfg_.dt);
    return std::move(log_);
  }

private:
  void event(int step, EventKind kind, int robot, double value) {
    log_.events.push_back({step, step * cfg_.dt, kind, robot, value});
  }

  Vector target_at(double t) const {
    TargetSpec spec;
    for (const auto &c : cfg_.target) {
      GaussianComponent g;
      g.center = grid_.fold(c.center + t * cfg_.target_velocity);
      g.weight = c.weight;
      g.precision = Eigen::Matrix2d::Identity() / (c.sigma * c.sigma);
      spec.components.push_back(g);
    }
    if (cfg_.target_normalize)
      spec.total_mass = n_ * kernel_mass_;
    if (spec.components.empty())
      return Vector::Zero(grid_.size());
    return build_target(grid_, spec);
  }

  DensityField field_at(double t) const {
    std::vector<Vec2> xs;
    for (const auto &r : robots_)
      xs.push_back(r.position);
    DensityField f = evaluate_kernels(grid_, xs, loc_);
    if (f.team.size() == 0)
      f.team = Vector::Zero(grid_.size());
    f.target = target_at(t);
    return f;
  }

  // Record of the current state without a command; used for the final row.
  StepRecord snapshot(int k, double t) const {
    const DensityField f = field_at(t);
    StepRecord rec;
    rec.step = k;
    rec.t = t;
    rec.V = lyapunov(f, grid_);
    rec.h_s = spatial_barrier(f, danger_, grid_, eps_);
    for (int i = 0; i < n_; ++i) {
      const auto &r = robots_[static_cast<std::size_t>(i)];
      RobotRecord rr;
      rr.position = r.true_position;
      rr.measured = r.position;
      rr.battery = r.battery;
      rr.energy_to_charge = has_path_[static_cast<std::size_t>(i)]
                                ? paths_[static_cast<std::size_t>(i)].energy_to_charge
                                : 0.0;
      rr.h_e = r.battery - cfg_.energy.e_min - rr.energy_to_charge;
      rr.held = held_[static_cast<std::size_t>(i)];
      rec.robots.push_back(rr);
    }
    return rec;
  }

  PlannedPath straight_to_charger(const Vec2 &x) const {
    int best = charger_.cells().front();
    double best_d = std::numeric_limits<double>::infinity();
    for (int k : charger_.cells()) {
      const double d = (grid_.center(k) - x).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return PlannedPath::from_waypoints({x, grid_.center(best)}, kappa_);
  }

  PlannedPath plan_for(int k, int i) {
    const auto ui = static_cast<std::size_t>(i);
    const Vec2 x = robots_[ui].position;
    std::optional<PlannedPath> anchored;
    if (has_path_[ui])
      anchored = planner_->advance(paths_[ui], x);
    PlanResult r;
    try {
      r = planner_->plan(x, plan_rng_[ui]);
      if (r.status != PlanStatus::Success) {
        event(k, EventKind::PlannerRetry, i, 0.0);
        r = retry_planner_->plan(x, plan_rng_[ui]);
      }
    } catch (const std::invalid_argument &) {
      r.status = PlanStatus::Failure; // measured start inside the danger region
    }
    if (r.status == PlanStatus::Success) {
      // Keep the previous route unless the new one is clearly shorter.
      if (anchored && anchored->length <= r.path.length + 0.5 * grid_.spacing())
        return *anchored;
      return r.path;
    }
    event(k, EventKind::PlannerFailure, i, 0.0);
    if (anchored)
      return *anchored;
    if (has_path_[ui] && paths_[ui].waypoints.size() > 1) {
      std::vector<Vec2> w{x};
      w.insert(w.end(), paths_[ui].waypoints.begin() + 1, paths_[ui].waypoints.end());
      return PlannedPath::from_waypoints(std::move(w), kappa_);
    }
    return straight_to_charger(x);
  }

  std::optional<Vec2> hold_command(int k, int i) {
    const auto ui = static_cast<std::size_t>(i);
    const RobotState &r = robots_[ui];
    const bool inside = planner_->in_charger(r.position);
    if (held_[ui] && r.battery >= cfg_.resume_level) {
      held_[ui] = false;
      event(k, EventKind::HoldEnd, i, r.battery);
    } else if (!held_[ui] && inside && r.battery < cfg_.resume_level &&
               r.battery - cfg_.energy.e_min < cfg_.hold_margin) {
      held_[ui] = true;
      event(k, EventKind::HoldStart, i, r.battery);
    }
    if (!held_[ui])
      return std::nullopt;
    Vec2 anchor = shape_center(cfg_.charger.front());
    double best = std::numeric_limits<double>::infinity();
    for (const auto &s : cfg_.charger) {
      const Vec2 c = shape_center(s);
      const double d = shape_contains(s, r.position) ? -1.0 : (c - r.position).norm();
      if (d < best) {
        best = d;
        anchor = c;
      }
    }
    return clip(cfg_.hold_gain * (anchor - r.position), cfg_.u_max);
  }

  void step(int k) {
    const double t = k * cfg_.dt;
    const DensityField field = field_at(t);
    StepRecord rec;
    rec.step = k;
    rec.t = t;

    std::vector<std::optional<Vec2>> holds(static_cast<std::size_t>(n_));
    auto t0 = Clock::now();
    for (int i = 0; i < n_; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      paths_[ui] = plan_for(k, i);
      has_path_[ui] = true;
      holds[ui] = hold_command(k, i);
      if (cfg_.record_paths)
        log_.paths.push_back({k, i, paths_[ui].waypoints});
    }
    rec.plan_time = seconds_since(t0);

    t0 = Clock::now();
    ops_.advection = build_advection_all(grid_, field);
    AssemblyInputs in;
    in.paths = paths_;
    in.robots = robots_;
    in.holds = holds;
    in.diffusion = noise_.diffusion;
    in.u_max = cfg_.u_max;
    ConstraintRows rows = assemble(field, grid_, ops_, danger_, in, gains_, cfg_.energy);
    rec.V = rows.V;
    rec.h_s = rows.h_s;
    std::vector<double> raw_he;
    for (int i = 0; i < n_; ++i) {
      auto &e = rows.energy[static_cast<std::size_t>(i)];
      raw_he.push_back(e.h_e);
      if (e.h_e < 0.0) {
        event(k, EventKind::EnergyClamp, i, e.h_e);
        e.h_e = 0.0;
      }
    }
    ConvexProgram program = make_program(rows, gains_, cfg_.u_max);

    const bool all_above = std::all_of(robots_.begin(), robots_.end(), [&](const RobotState &r) {
      return r.battery >= cfg_.energy.e_min;
    });
    std::optional<std::pair<Vector, double>> fp;
    try {
      fp = feasible_point(program);
      if (all_above)
        rec.feasible_violation = program.violation(fp->first, fp->second);
    } catch (const InfeasibleError &) {
    }

    Vector u = Vector::Zero(2 * n_);
    double s = 0.0;
    if (n_ > 0) {
      const SolverOptions opts{cfg_.solver_tol, cfg_.solver_max_iter};
      std::optional<Solution> sol;
      try {
        if (const double d = relax_cbf(program); d > 0.0)
          event(k, EventKind::CbfRelaxed, -1, d);
        sol = solve(program, warm_ ? &*warm_ : nullptr, opts);
      } catch (const InfeasibleError &) {
      }
      if (sol && sol->status == SolveStatus::Optimal) {
        u = sol->u;
        s = sol->s;
        warm_ = sol;
      } else {
        const double viol = sol ? program.violation(sol->u, sol->s)
                                : std::numeric_limits<double>::infinity();
        event(k, EventKind::SolverFallback, -1, viol);
        if (sol && viol <= 1e-9) {
          u = sol->u;
        } else if (fp && program.violation(fp->first, fp->second) <= 1e-9) {
          u = fp->first;
        } else {
          for (int i = 0; i < n_; ++i)
            u.segment<2>(2 * i) = program.robots[static_cast<std::size_t>(i)].project(
                0.5 * prev_u_.segment<2>(2 * i));
        }
        s = program.slack_for(u);
        warm_.reset();
      }
    }
    rec.s = s;
    rec.solve_time = seconds_since(t0);

    for (int i = 0; i < n_; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const Vec2 ui_cmd = clip(u.segment<2>(2 * i), cfg_.u_max);
      u.segment<2>(2 * i) = ui_cmd;
      RobotRecord rr;
      rr.position = robots_[ui].true_position;
      rr.measured = robots_[ui].position;
      rr.battery = robots_[ui].battery;
      rr.h_e = raw_he[ui];
      rr.energy_to_charge = paths_[ui].energy_to_charge;
      rr.command = ui_cmd;
      rr.held = held_[ui];

      const BatteryStep b = step_battery(robots_[ui], ui_cmd, cfg_.dt, cfg_.energy, charger_, grid_);
      rr.charging = b.charging;
      RobotState next = step_motion(robots_[ui], ui_cmd, cfg_.dt, noise_, grid_, motion_rng_[ui]);
      if (cfg_.workspace) {
        const Vec2 p(reflect_axis(next.true_position.x(), cfg_.workspace->lo.x(), cfg_.workspace->hi.x()),
                     reflect_axis(next.true_position.y(), cfg_.workspace->lo.y(), cfg_.workspace->hi.y()));
        next.position = grid_.fold(next.position + (p - next.true_position));
        next.true_position = p;
      }
      next.battery = b.state.battery;
      robots_[ui] = next;
      if (b.violation)
        event(k + 1, EventKind::EnergyViolation, i, *b.violation);
      rec.robots.push_back(rr);
    }
    prev_u_ = u;
    log_.steps.push_back(std::move(rec));
  }

  const ScenarioConfig &cfg_;
  Grid grid_;
  LocalizationModel loc_;
  NoiseModel noise_;
  int n_;
  double eps_;
  RngStream root_;
  ControllerGains gains_;
  RegionMask danger_, charger_;
  DensityOperators ops_;
  double kernel_mass_ = 0.0;
  double kappa_ = 0.0;
  std::optional<Planner> planner_, retry_planner_;
  std::vector<RobotState> robots_;
  std::vector<RngStream> motion_rng_, plan_rng_;
  std::vector<PlannedPath> paths_;
  std::vector<bool> has_path_, held_;
  Vector prev_u_;
  std::optional<Solution> warm_;
  RunLog log_;
};

} // namespace

RunLog run_episode(const ScenarioConfig &cfg, std::uint64_t seed) {
  return Episode(cfg, seed).run();
}

// -- Batch -------------------------------------------------------------------

RunSummary summarize(const RunLog &log) {
  RunSummary s;
  s.seed = log.seed;
  s.V0 = log.initial_V();
  s.final_V = log.final_V();
  s.min_h_s = log.min_h_s();
  s.min_battery = log.min_battery();
  s.violation_steps = log.violation_steps();
  s.max_violation = log.max_violation();
  s.planner_failures = log.count(EventKind::PlannerFailure);
  s.solver_fallbacks = log.count(EventKind::SolverFallback);
  s.energy_clamps = log.count(EventKind::EnergyClamp);
  s.cbf_relaxations = log.count(EventKind::CbfRelaxed);
  s.aborted = log.aborted;
  s.abort_reason = log.abort_reason;
  if (!log.steps.empty()) {
    for (const auto &r : log.steps) {
      s.mean_plan_time += r.plan_time;
      s.mean_solve_time += r.solve_time;
    }
    s.mean_plan_time /= static_cast<double>(log.steps.size());
    s.mean_solve_time /= static_cast<double>(log.steps.size());
  }
  return s;
}

int BatchResult::energy_feasible_runs() const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const RunSummary &r) {
    return !r.aborted && r.violation_steps == 0;
  }));
}

int BatchResult::aborted_runs() const {
  return static_cast<int>(
      std::count_if(runs.begin(), runs.end(), [](const RunSummary &r) { return r.aborted; }));
}

double BatchResult::worst_violation() const {
  double m = 0.0;
  for (const auto &r : runs)
    m = std::max(m, r.max_violation);
  return m;
}

double BatchResult::overall_min_h_s() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto &r : runs)
    if (!r.aborted)
      m = std::min(m, r.min_h_s);
  return m;
}

bool BatchResult::clean() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunSummary &r) {
    return !r.aborted && r.violation_steps == 0 && r.min_h_s >= 0.0 && r.planner_failures == 0 &&
           r.solver_fallbacks == 0;
  });
}

std::uint64_t batch_seed(std::uint64_t master_seed, int index) {
  return mix_seed(master_seed, static_cast<std::uint64_t>(index));
}

namespace {

struct Series {
  std::vector<double> V, h_s, E;
};

Series series_of(const RunLog &log) {
  Series s;
  auto add = [&](const StepRecord &r) {
    s.V.push_back(r.V);
    s.h_s.push_back(r.h_s);
    double e = std::numeric_limits<double>::infinity();
    for (const auto &rr : r.robots)
      e = std::min(e, rr.battery);
    s.E.push_back(e);
  };
  for (const auto &r : log.steps)
    add(r);
  if (!log.aborted)
    add(log.final_state);
  return s;
}

} // namespace

BatchResult run_batch(const ScenarioConfig &cfg, int n_runs, std::uint64_t master_seed,
                      unsigned threads, bool keep_logs) {
  if (n_runs < 1)
    throw ConfigError("a batch needs at least one run");
  cfg.validate();
  BatchResult out;
  out.master_seed = master_seed;
  out.runs.resize(static_cast<std::size_t>(n_runs));
  std::vector<Series> series(static_cast<std::size_t>(n_runs));
  if (keep_logs)
    out.logs.resize(static_cast<std::size_t>(n_runs));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n_runs; i = next++) {
      const auto ui = static_cast<std::size_t>(i);
      const std::uint64_t seed = batch_seed(master_seed, i);
      RunLog log;
      try {
        log = run_episode(cfg, seed);
      } catch (const std::exception &e) {
        log.seed = seed;
        log.n_robots = static_cast<int>(cfg.robots.size());
        log.aborted = true;
        log.abort_reason = e.what();
      }
      out.runs[ui] = summarize(log);
      series[ui] = series_of(log);
      if (keep_logs)
        out.logs[ui] = std::move(log);
    }
  };
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_runs));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < threads; ++w)
    pool.emplace_back(worker);
  worker();
  for (auto &th : pool)
    th.join();

  std::size_t len = 0;
  for (const auto &s : series)
    len = std::max(len, s.V.size());
  const double inf = std::numeric_limits<double>::infinity();
  out.max_V.assign(len, -inf);
  out.min_h_s.assign(len, inf);
  out.min_E.assign(len, inf);
  for (std::size_t k = 0; k < len; ++k) {
    out.t.push_back(static_cast<double>(k) * cfg.dt);
    for (const auto &s : series) {
      if (k >= s.V.size())
        continue;
      out.max_V[k] = std::max(out.max_V[k], s.V[k]);
      out.min_h_s[k] = std::min(out.min_h_s[k], s.h_s[k]);
      out.min_E[k] = std::min(out.min_E[k], s.E[k]);
    }
  }
  return out;
}

// -- Export ------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

void ensure_dir(const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw std::runtime_error("cannot create output directory " + dir.string());
}

void write_row(std::ostream &out, const StepRecord &r) {
  out << r.step << ',' << r.t << ',' << r.V << ',' << r.h_s << ',' << r.s << ',' << r.plan_time
      << ',' << r.solve_time;
  for (const auto &rr : r.robots)
    out << ',' << rr.position.x() << ',' << rr.position.y() << ',' << rr.battery << ','
        << rr.h_e << ',' << rr.command.norm();
  out << '\n';
}

} // namespace

void write_metrics_csv(const RunLog &log, const std::filesystem::path &path) {
  auto out = open_out(path);
  out << "step,t,V,h_s,s,plan_time_s,solve_time_s";
  for (int i = 0; i < log.n_robots; ++i)
    out << ",x_" << i << ",y_" << i << ",E_" << i << ",hE_" << i << ",speed_" << i;
  out << '\n';
  for (const auto &r : log.steps)
    write_row(out, r);
}

void write_events_csv(const RunLog &log, const std::filesystem::path &path) {
  auto out = open_out(path);
  out << "step,t,kind,robot,value\n";
  for (const auto &e : log.events)
    out << e.step << ',' << e.t << ',' << to_string(e.kind) << ',' << e.robot << ',' << e.value
        << '\n';
}

std::string summary_text(const RunSummary &s) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "seed = " << s.seed << "\n"
     << "initial_V = " << s.V0 << "\n"
     << "final_V = " << s.final_V << "\n"
     << "min_h_s = " << s.min_h_s << "\n"
     << "min_E = " << s.min_battery << "\n"
     << "violation_steps = " << s.violation_steps << "\n"
     << "max_violation = " << s.max_violation << "\n"
     << "planner_failures = " << s.planner_failures << "\n"
     << "solver_fallbacks = " << s.solver_fallbacks << "\n"
     << "energy_clamps = " << s.energy_clamps << "\n"
     << "cbf_relaxations = " << s.cbf_relaxations << "\n"
     << "aborted = " << (s.aborted ? "true" : "false") << "\n";
  if (s.aborted)
    os << "abort_reason = " << s.abort_reason << "\n";
  os << "mean_plan_time_s = " << s.mean_plan_time << "\n"
     << "mean_solve_time_s = " << s.mean_solve_time << "\n";
  return os.str();
}

std::string summary_text(const BatchResult &b) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "master_seed = " << b.master_seed << "\n"
     << "runs = " << b.runs.size() << "\n"
     << "energy_feasible_runs = " << b.energy_feasible_runs() << "\n"
     << "aborted_runs = " << b.aborted_runs() << "\n"
     << "worst_violation = " << b.worst_violation() << "\n"
     << "min_h_s = " << b.overall_min_h_s() << "\n"
     << "final_max_V = " << (b.max_V.empty() ? 0.0 : b.max_V.back()) << "\n";
  int pf = 0, sf = 0;
  for (const auto &r : b.runs) {
    pf += r.planner_failures;
    sf += r.solver_fallbacks;
  }
  os << "planner_failures = " << pf << "\n"
     << "solver_fallbacks = " << sf << "\n";
  return os.str();
}

void export_scenario(const ScenarioConfig &cfg, const std::filesystem::path &dir) {
  ensure_dir(dir);
  const Grid grid = cfg.grid();
  open_out(dir / "scenario.cfg") << to_text(cfg);
  TargetSpec spec;
  for (const auto &c : cfg.target)
    spec.components.push_back(
        {c.center, c.weight, Eigen::Matrix2d::Identity() / (c.sigma * c.sigma)});
  if (cfg.target_normalize)
    spec.total_mass = static_cast<double>(cfg.robots.size()) *
                      single_kernel_mass(grid, cfg.localization());
  const Vector target =
      spec.components.empty() ? Vector::Zero(grid.size()) : build_target(grid, spec);
  write_pgm(dir / "target.pgm", grid, target);
  auto mask_image = [&](const std::vector<Shape> &shapes) {
    const RegionMask m = mask_from_geometry(grid, shapes);
    Vector v = Vector::Zero(grid.size());
    for (int k : m.cells())
      v[k] = 1.0;
    return v;
  };
  write_pgm(dir / "danger_mask.pgm", grid, mask_image(cfg.danger), 1.0);
  write_pgm(dir / "charger_mask.pgm", grid, mask_image(cfg.charger), 1.0);
}

void export_run(const RunLog &log, const ScenarioConfig &cfg, const std::filesystem::path &dir,
                int stride) {
  ensure_dir(dir);
  write_metrics_csv(log, dir / "metrics.csv");
  write_events_csv(log, dir / "events.csv");
  open_out(dir / "summary.txt") << summary_text(summarize(log));
  if (!log.paths.empty()) {
    auto out = open_out(dir / "paths.csv");
    out << "step,robot,index,x,y\n";
    for (const auto &p : log.paths)
      for (std::size_t j = 0; j < p.waypoints.size(); ++j)
        out << p.step << ',' << p.robot << ',' << j << ',' << p.waypoints[j].x() << ','
            << p.waypoints[j].y() << '\n';
  }
  if (stride <= 0)
    return;
  export_scenario(cfg, dir);
  const Grid grid = cfg.grid();
  const LocalizationModel loc = cfg.localization();
  // One common scale so frames are comparable.
  const double scale = std::max(1.0, static_cast<double>(log.n_robots));
  const std::filesystem::path frames = dir / "frames";
  ensure_dir(frames);
  for (const auto &r : log.steps) {
    if (r.step % stride != 0)
      continue;
    std::vector<Vec2> xs;
    for (const auto &rr : r.robots)
      xs.push_back(rr.measured);
    DensityField f = evaluate_kernels(grid, xs, loc);
    if (f.team.size() == 0)
      f.team = Vector::Zero(grid.size());
    std::ostringstream name;
    name << "density_" << std::setw(6) << std::setfill('0') << r.step << ".pgm";
    write_pgm(frames / name.str(), grid, f.team, scale);
  }
}

void export_batch(const BatchResult &b, const std::filesystem::path &dir) {
  ensure_dir(dir);
  {
    auto out = open_out(dir / "envelope.csv");
    out << "step,t,max_V,min_h_s,min_E\n";
    for (std::size_t k = 0; k < b.t.size(); ++k)
      out << k << ',' << b.t[k] << ',' << b.max_V[k] << ',' << b.min_h_s[k] << ',' << b.min_E[k]
          << '\n';
  }
  {
    auto out = open_out(dir / "runs.csv");
    out << "run,seed,initial_V,final_V,min_h_s,min_E,violation_steps,max_violation,"
           "planner_failures,solver_fallbacks,energy_clamps,cbf_relaxations,aborted\n";
    for (std::size_t i = 0; i < b.runs.size(); ++i) {
      const auto &r = b.runs[i];
      out << i << ',' << r.seed << ',' << r.V0 << ',' << r.final_V << ',' << r.min_h_s << ','
          << r.min_battery << ',' << r.violation_steps << ',' << r.max_violation << ','
          << r.planner_failures << ',' << r.solver_fallbacks << ',' << r.energy_clamps << ',' << r.cbf_relaxations << ','
          << (r.aborted ? 1 : 0) << '\n';
    }
  }
  open_out(dir / "summary.txt") << summary_text(b);
}

} // namespace safedensity
