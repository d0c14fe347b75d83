#include "doctest.h"

#include "safedensity/errors.hpp"
#include "safedensity/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace safedensity;
namespace fs = std::filesystem;

namespace {

// 4 m periodic field, one robot, noise off.
ScenarioConfig small_scenario() {
  ScenarioConfig c;
  c.domain = {4.0, 4.0};
  c.nx = c.ny = 32;
  c.robots = {{Vec2(2.0625, 2.0625), 1.0}};
  c.target = {{Vec2(2.0625, 2.0625), kDefaultKernelSigma, 1.0}};
  c.charger = {Disc{Vec2(0.5, 0.5), 0.3}};
  c.duration = 2.0;
  return c.noise_off();
}

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("safedensity_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const fs::path &p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    out.push_back(l);
  return out;
}

int columns(const std::string &line) {
  return 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
}

#ifndef SAFEDENSITY_NO_CLI
int run_cli(const std::string &args) {
  const std::string cmd = std::string(SAFEDENSITY_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
#endif

} // namespace

TEST_CASE("an empty team keeps V constant and h_s at epsilon") {
  ScenarioConfig c = small_scenario();
  c.robots.clear();
  c.target_normalize = false;
  const RunLog log = run_episode(c, 1);
  REQUIRE(log.steps.size() == static_cast<std::size_t>(c.steps()));
  for (const auto &s : log.steps) {
    CHECK(s.V == log.steps.front().V);
    CHECK(s.h_s == doctest::Approx(c.epsilon()).epsilon(1e-12));
  }
  CHECK(log.feasible());
}

TEST_CASE("a robot already on its target stays put") {
  const ScenarioConfig c = small_scenario();
  const RunLog log = run_episode(c, 1);
  CHECK(log.initial_V() <= 1e-12);
  for (std::size_t k = 1; k < log.steps.size(); ++k)
    CHECK(log.steps[k].robots[0].command.norm() <= 1e-6);
  CHECK(log.clean());
}

TEST_CASE("metrics and events files") {
  ScenarioConfig c = small_scenario();
  c.robots.push_back({Vec2(1.0, 3.0), 0.8});
  c.target_normalize = true;
  const RunLog log = run_episode(c, 4);
  const auto dir = scratch("csv");
  export_run(log, c, dir, 0);
  const auto m = lines(dir / "metrics.csv");
  REQUIRE(m.size() == log.steps.size() + 1);
  CHECK(columns(m.front()) == 7 + 5 * 2);
  CHECK(columns(m.back()) == 7 + 5 * 2);
  CHECK(m.front().rfind("step,t,V,h_s,s,", 0) == 0);
  const auto e = lines(dir / "events.csv");
  CHECK(e.size() == log.events.size() + 1);

  RunLog empty;
  empty.n_robots = 2;
  write_events_csv(empty, dir / "empty.csv");
  CHECK(lines(dir / "empty.csv") == std::vector<std::string>{"step,t,kind,robot,value"});
  fs::remove_all(dir);
}

TEST_CASE("density frames follow the stride") {
  ScenarioConfig c = small_scenario();
  c.duration = 100 * c.dt;
  const RunLog log = run_episode(c, 1);
  const auto dir = scratch("frames");
  export_run(log, c, dir, 10);
  int pgm = 0;
  for (const auto &f : fs::directory_iterator(dir / "frames"))
    pgm += f.path().extension() == ".pgm";
  CHECK(pgm == 10);
  CHECK(fs::exists(dir / "target.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("batches are reproducible and independent of the thread count") {
  ScenarioConfig c = reference_scenario();
  c.duration = 2.0;
  const auto a = run_batch(c, 4, 17, 1);
  const auto b = run_batch(c, 4, 17, 3);
  REQUIRE(a.runs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.runs[i].seed == b.runs[i].seed);
    CHECK(a.runs[i].final_V == b.runs[i].final_V);
    CHECK(a.runs[i].min_h_s == b.runs[i].min_h_s);
  }
  CHECK(a.max_V == b.max_V);
  CHECK(a.runs[0].seed != a.runs[1].seed);
}

TEST_CASE("a one-run batch has the run's own series as envelopes") {
  ScenarioConfig c = reference_scenario();
  c.duration = 2.0;
  const auto b = run_batch(c, 1, 5, 1, true);
  const RunLog log = run_episode(c, batch_seed(5, 0));
  REQUIRE(b.max_V.size() == log.steps.size() + 1);
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    CHECK(b.max_V[k] == log.steps[k].V);
    CHECK(b.min_h_s[k] == log.steps[k].h_s);
  }
  CHECK(b.max_V.back() == log.final_V());
}

TEST_CASE("low robots head for the charger") {
  // Robots 0 and 2 start with little charge; their mean distance to the
  // charger centre falls over the first 5 s.
  ScenarioConfig c = reference_scenario();
  c.duration = 5.0;
  const Vec2 centre = std::get<Disc>(c.charger.front()).center;
  const int samples = 11;
  std::vector<double> mean(samples, 0.0);
  for (int seed = 0; seed < 20; ++seed) {
    const RunLog log = run_episode(c, 100 + seed);
    for (int j = 0; j < samples; ++j) {
      const std::size_t k = std::min<std::size_t>(j * 10, log.steps.size() - 1);
      for (int r : {0, 2})
        mean[j] += (log.steps[k].robots[r].position - centre).norm() / 40.0;
    }
  }
  for (int j = 1; j < samples; ++j)
    CHECK(mean[j] < mean[j - 1]);
}

#ifndef SAFEDENSITY_NO_CLI
TEST_CASE("command line exit codes") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  CHECK(run_cli("export -o " + (dir / "exp").string()) == 0);
  CHECK(fs::exists(dir / "exp" / "scenario.cfg"));

  ScenarioConfig c = small_scenario();
  {
    std::ofstream out(dir / "ok.cfg");
    out << to_text(c);
  }
  CHECK(run_cli("run -c " + (dir / "ok.cfg").string() + " -o " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "metrics.csv"));
  CHECK(run_cli("batch --runs 2 --seed 3 -c " + (dir / "ok.cfg").string() + " -o " +
                (dir / "batch").string()) == 0);

  {
    std::ofstream out(dir / "bad.cfg");
    out << "schema_version = 1\nsim.dt = -1\n";
  }
  CHECK(run_cli("run -c " + (dir / "bad.cfg").string() + " -o " + (dir / "bad").string()) == 2);
  CHECK(run_cli("frobnicate") != 0);
  fs::remove_all(dir);
}
#endif
