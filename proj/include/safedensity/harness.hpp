#pragma once

/// @file harness.hpp
/// @brief Closed-loop episodes (measure, densify, plan, assemble, solve,
/// step), Monte Carlo batches and artifact export.

#include "safedensity/config.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace safedensity {

struct RobotRecord {
  Vec2 position = Vec2::Zero(); ///< true position
  Vec2 measured = Vec2::Zero();
  double battery = 0.0;
  double h_e = 0.0; ///< E - E_min - P before any clamping
  double energy_to_charge = 0.0;
  Vec2 command = Vec2::Zero();
  bool held = false;
  bool charging = false;
};

/// State at the start of a step together with the command applied during it.
struct StepRecord {
  int step = 0;
  double t = 0.0;
  double V = 0.0;
  double h_s = 0.0;
  double s = 0.0;
  double plan_time = 0.0;
  double solve_time = 0.0;
  /// Largest constraint violation of feasible_point() for this step's
  /// program, or -1 when it was not evaluated (a battery below E_min or an
  /// invalid program).
  double feasible_violation = -1.0;
  std::vector<RobotRecord> robots;
};

enum class EventKind {
  EnergyViolation, ///< battery ended a step below E_min; value = E_min - E
  PlannerRetry,
  PlannerFailure, ///< retry failed too; previous path reused
  SolverFallback, ///< solver did not reach tolerance; value = its violation
  EnergyClamp,    ///< h_E < 0 clamped to 0 in the program; value = h_E
  HoldStart,
  HoldEnd,
  CbfRelaxed, ///< CBF row unreachable within the admissible sets; value = amount relaxed
};

const char *to_string(EventKind kind);

struct Event {
  int step = 0;
  double t = 0.0;
  EventKind kind = EventKind::EnergyViolation;
  int robot = -1;
  double value = 0.0;
};

struct PathRecord {
  int step = 0;
  int robot = 0;
  std::vector<Vec2> waypoints;
};

struct RunLog {
  std::uint64_t seed = 0;
  int n_robots = 0;
  double dt = 0.0;
  std::vector<StepRecord> steps;
  StepRecord final_state; ///< state after the last step (command unset)
  std::vector<Event> events;
  std::vector<PathRecord> paths; ///< only with record_paths
  bool aborted = false;
  std::string abort_reason;

  int count(EventKind kind) const;
  int violation_steps() const { return count(EventKind::EnergyViolation); }
  double max_violation() const;
  double min_h_s() const;
  double min_battery() const;
  double initial_V() const;
  double final_V() const { return final_state.V; }
  /// No energy violation and h_s >= 0 throughout.
  bool feasible() const;
  /// No planner or solver failure and not aborted.
  bool clean() const;
};

/// Runs cfg.steps() steps. Throws ConfigError when cfg is invalid.
RunLog run_episode(const ScenarioConfig &cfg, std::uint64_t seed);

struct RunSummary {
  std::uint64_t seed = 0;
  double V0 = 0.0;
  double final_V = 0.0;
  double min_h_s = 0.0;
  double min_battery = 0.0;
  int violation_steps = 0;
  double max_violation = 0.0;
  int planner_failures = 0;
  int solver_fallbacks = 0;
  int energy_clamps = 0;
  int cbf_relaxations = 0;
  bool aborted = false;
  std::string abort_reason;
  double mean_plan_time = 0.0;
  double mean_solve_time = 0.0;
};

RunSummary summarize(const RunLog &log);

struct BatchResult {
  std::uint64_t master_seed = 0;
  std::vector<RunSummary> runs; ///< in run-index order
  std::vector<double> t;
  std::vector<double> max_V; ///< per-step worst case across runs
  std::vector<double> min_h_s;
  std::vector<double> min_E;
  std::vector<RunLog> logs; ///< only with keep_logs

  int energy_feasible_runs() const;
  int aborted_runs() const;
  double worst_violation() const;
  double overall_min_h_s() const;
  bool clean() const;
};

/// Seed of run `index` of a batch.
std::uint64_t batch_seed(std::uint64_t master_seed, int index);

/// threads = 0 uses the hardware concurrency. Results do not depend on the
/// thread count.
BatchResult run_batch(const ScenarioConfig &cfg, int n_runs, std::uint64_t master_seed,
                      unsigned threads = 0, bool keep_logs = false);

/// Metrics CSV: step,t,V,h_s,s,plan_time_s,solve_time_s then
/// x_i,y_i,E_i,hE_i,speed_i for every robot.
void write_metrics_csv(const RunLog &log, const std::filesystem::path &path);
void write_events_csv(const RunLog &log, const std::filesystem::path &path);

/// Writes metrics.csv, events.csv, summary.txt, paths.csv (when recorded)
/// and, for stride > 0, team-density PGM frames every `stride` steps plus
/// target and mask images. Throws std::runtime_error when dir is unwritable.
void export_run(const RunLog &log, const ScenarioConfig &cfg,
                const std::filesystem::path &dir, int stride);

/// envelope.csv, runs.csv and summary.txt.
void export_batch(const BatchResult &batch, const std::filesystem::path &dir);

/// Resolved config text plus target and mask images.
void export_scenario(const ScenarioConfig &cfg, const std::filesystem::path &dir);

std::string summary_text(const RunSummary &s);
std::string summary_text(const BatchResult &b);

} // namespace safedensity
