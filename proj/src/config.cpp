#include "safedensity/config.hpp"
#include "safedensity/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace safedensity {

Grid ScenarioConfig::grid() const {
  if (nx < 3 || ny < 3)
    throw ConfigError("grid needs at least 3 cells per axis");
  const double lx = domain.x() / nx;
  const double ly = domain.y() / ny;
  if (std::abs(lx - ly) > 1e-12 * std::max(lx, ly))
    throw ConfigError("grid cells must be square: domain / n differs between axes");
  return Grid(nx, ny, lx, Vec2::Zero(), boundary);
}

LocalizationModel ScenarioConfig::localization() const {
  return LocalizationModel::isotropic(kernel_sigma);
}

NoiseModel ScenarioConfig::noise() const {
  NoiseModel n = NoiseModel::from_actuation(noise_c, u_max, measurement_std);
  if (diffusion_override)
    n = n.with_diffusion(*diffusion_override);
  return n;
}

double ScenarioConfig::epsilon() const {
  return gains.epsilon > 0.0 ? gains.epsilon : default_epsilon(grid(), localization());
}

int ScenarioConfig::steps() const {
  return static_cast<int>(std::llround(duration / dt));
}

ScenarioConfig ScenarioConfig::noise_off() const {
  ScenarioConfig c = *this;
  c.noise_c = 0.0;
  c.measurement_std = 0.0;
  c.diffusion_override.reset();
  return c;
}

void ScenarioConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  const Grid g = grid();
  noise().validate();
  energy.validate();
  planner.validate();
  ControllerGains gg = gains;
  gg.epsilon = epsilon();
  gg.validate();
  if (!(dt > 0.0) || !(duration >= 0.0))
    throw ConfigError("dt must be positive and duration non-negative");
  if (!(dt * u_max < g.spacing()))
    throw ConfigError("dt * u_max must stay below the grid spacing");
  if (!(hold_margin > 0.0 && hold_margin <= 1.0))
    throw ConfigError("hold_margin must lie in (0, 1]");
  if (!(resume_level > energy.e_min && resume_level <= 1.0))
    throw ConfigError("resume_level must lie in (E_min, 1]");
  if (!(gains.alpha_e * (resume_level - energy.e_min) > energy.c2))
    throw ConfigError("alpha_E (resume_level - E_min) must exceed c2 so a released robot "
                      "can idle at the charger");
  if (charger.empty() && !robots.empty())
    throw ConfigError("scenario needs a charging region");
  const RegionMask danger_mask = mask_from_geometry(g, danger);
  const RegionMask charger_mask = mask_from_geometry(g, charger);
  if (!robots.empty() && charger_mask.empty())
    throw ConfigError("charging region covers no cell centre");
  for (int k : charger_mask.cells())
    if (danger_mask.contains(k))
      throw ConfigError("charging region overlaps the danger region");
  if (workspace) {
    const Vec2 lo = workspace->lo, hi = workspace->hi;
    if (!(lo.x() < hi.x() && lo.y() < hi.y()) || !g.contains(lo) ||
        !g.contains(hi - Vec2::Constant(1e-12)))
      throw ConfigError("workspace must be a non-empty rectangle inside the domain");
  }
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const auto &r = robots[i];
    if (workspace && !shape_contains(*workspace, r.position))
      throw ConfigError("robot " + std::to_string(i) + " starts outside the workspace");
    const auto cell = g.cell_of(r.position);
    if (!cell)
      throw ConfigError("robot " + std::to_string(i) + " starts outside the domain");
    if (danger_mask.contains(*cell))
      throw ConfigError("robot " + std::to_string(i) + " starts inside the danger region");
    if (!(r.battery >= 0.0 && r.battery <= 1.0))
      throw ConfigError("robot " + std::to_string(i) + " battery outside [0, 1]");
  }
  for (const auto &t : target) {
    if (!g.contains(t.center))
      throw ConfigError("target component centre lies outside the domain");
    if (!(t.sigma > 0.0) || t.weight < 0.0)
      throw ConfigError("target components need sigma > 0 and weight >= 0");
  }
}

// -- key/value format ----------------------------------------------------------

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Reader {
public:
  explicit Reader(const KeyValues &kv) : kv_(kv) {}

  bool has(const std::string &k) const {
    seen_.insert(k);
    return kv_.count(k) != 0;
  }

  std::string str(const std::string &k, const std::string &def) const {
    seen_.insert(k);
    auto it = kv_.find(k);
    return it == kv_.end() ? def : it->second;
  }

  double num(const std::string &k, double def) const {
    seen_.insert(k);
    auto it = kv_.find(k);
    if (it == kv_.end())
      return def;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size())
        throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception &) {
      throw ConfigError("key '" + k + "' expects a number, got '" + it->second + "'");
    }
  }

  int integer(const std::string &k, int def) const {
    const double v = num(k, def);
    if (v != std::floor(v))
      throw ConfigError("key '" + k + "' expects an integer");
    return static_cast<int>(v);
  }

  std::uint64_t u64(const std::string &k, std::uint64_t def) const {
    seen_.insert(k);
    auto it = kv_.find(k);
    if (it == kv_.end())
      return def;
    try {
      return std::stoull(it->second);
    } catch (const std::exception &) {
      throw ConfigError("key '" + k + "' expects an unsigned integer");
    }
  }

  bool flag(const std::string &k, bool def) const {
    const std::string v = str(k, def ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes")
      return true;
    if (v == "false" || v == "0" || v == "no")
      return false;
    throw ConfigError("key '" + k + "' expects true/false");
  }

  Vec2 vec(const std::string &k, const Vec2 &def) const {
    return {num(k + "_x", def.x()), num(k + "_y", def.y())};
  }

  // Rejects keys nothing asked for, so typos do not silently fall back to defaults.
  void require_all_read() const {
    for (const auto &[k, v] : kv_)
      if (!seen_.count(k))
        throw ConfigError("unknown key '" + k + "'");
  }

private:
  const KeyValues &kv_;
  mutable std::set<std::string> seen_;
};

Shape read_shape(const Reader &r, const std::string &prefix) {
  const std::string type = r.str(prefix + ".type", "disc");
  if (type == "disc")
    return Disc{{r.num(prefix + ".x", 0.0), r.num(prefix + ".y", 0.0)},
                r.num(prefix + ".radius", 0.0)};
  if (type == "rect")
    return Rect{{r.num(prefix + ".x0", 0.0), r.num(prefix + ".y0", 0.0)},
                {r.num(prefix + ".x1", 0.0), r.num(prefix + ".y1", 0.0)}};
  throw ConfigError("unknown shape type '" + type + "' for " + prefix);
}

std::vector<Shape> read_shapes(const Reader &r, const std::string &name) {
  std::vector<Shape> out;
  const int n = r.integer(name + ".count", 0);
  for (int i = 0; i < n; ++i)
    out.push_back(read_shape(r, name + "." + std::to_string(i)));
  return out;
}

void write_shapes(std::ostream &os, const std::string &name, const std::vector<Shape> &shapes) {
  os << name << ".count = " << shapes.size() << "\n";
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string p = name + "." + std::to_string(i);
    if (const auto *d = std::get_if<Disc>(&shapes[i])) {
      os << p << ".type = disc\n"
         << p << ".x = " << d->center.x() << "\n"
         << p << ".y = " << d->center.y() << "\n"
         << p << ".radius = " << d->radius << "\n";
    } else {
      const auto &rc = std::get<Rect>(shapes[i]);
      os << p << ".type = rect\n"
         << p << ".x0 = " << rc.lo.x() << "\n"
         << p << ".y0 = " << rc.lo.y() << "\n"
         << p << ".x1 = " << rc.hi.x() << "\n"
         << p << ".y1 = " << rc.hi.y() << "\n";
    }
  }
}

} // namespace

KeyValues parse_key_values(const std::string &text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

ScenarioConfig config_from_key_values(const KeyValues &kv) {
  const Reader r(kv);
  ScenarioConfig c;
  if (!r.has("schema_version"))
    throw ConfigError("missing schema_version");
  c.schema_version = r.integer("schema_version", kSchemaVersion);
  c.domain = {r.num("domain.size_x", c.domain.x()), r.num("domain.size_y", c.domain.y())};
  c.nx = r.integer("grid.nx", c.nx);
  c.ny = r.integer("grid.ny", c.ny);
  const std::string bc = r.str("grid.boundary", "periodic");
  if (bc == "periodic")
    c.boundary = Boundary::Periodic;
  else if (bc == "neumann")
    c.boundary = Boundary::Neumann;
  else
    throw ConfigError("grid.boundary must be periodic or neumann");
  c.kernel_sigma = r.num("localization.sigma", c.kernel_sigma);

  const int n_robots = r.integer("robot.count", 0);
  for (int i = 0; i < n_robots; ++i) {
    const std::string p = "robot." + std::to_string(i);
    c.robots.push_back({{r.num(p + ".x", 0.0), r.num(p + ".y", 0.0)}, r.num(p + ".battery", 1.0)});
  }
  const int n_target = r.integer("target.count", 0);
  for (int i = 0; i < n_target; ++i) {
    const std::string p = "target." + std::to_string(i);
    c.target.push_back({{r.num(p + ".x", 0.0), r.num(p + ".y", 0.0)},
                        r.num(p + ".sigma", 0.5),
                        r.num(p + ".weight", 1.0)});
  }
  c.target_normalize = r.flag("target.normalize", c.target_normalize);
  c.target_velocity = r.vec("target.velocity", c.target_velocity);
  if (r.has("workspace.x0"))
    c.workspace = Rect{{r.num("workspace.x0", 0.0), r.num("workspace.y0", 0.0)},
                       {r.num("workspace.x1", 0.0), r.num("workspace.y1", 0.0)}};
  c.danger = read_shapes(r, "danger");
  c.charger = read_shapes(r, "charger");

  c.gains.alpha_v = r.num("gains.alpha_v", c.gains.alpha_v);
  c.gains.alpha_s = r.num("gains.alpha_s", c.gains.alpha_s);
  c.gains.alpha_e = r.num("gains.alpha_e", c.gains.alpha_e);
  c.gains.gamma = r.num("gains.gamma", c.gains.gamma);
  c.gains.epsilon = r.num("gains.epsilon", c.gains.epsilon);
  c.gains.cbf_margin = r.num("gains.cbf_margin", c.gains.cbf_margin);

  c.energy.c1 = r.num("energy.c1", c.energy.c1);
  c.energy.c2 = r.num("energy.c2", c.energy.c2);
  c.energy.c3 = r.num("energy.c3", c.energy.c3);
  c.energy.e_min = r.num("energy.e_min", c.energy.e_min);
  const std::string form = r.str("energy.consumption", "quadratic");
  if (form == "quadratic")
    c.energy.consumption = Consumption::Quadratic;
  else if (form == "linear")
    c.energy.consumption = Consumption::Linear;
  else
    throw ConfigError("energy.consumption must be quadratic or linear");
  c.resume_level = r.num("energy.resume_level", c.resume_level);
  c.hold_margin = r.num("energy.hold_margin", c.hold_margin);
  c.hold_gain = r.num("energy.hold_gain", c.hold_gain);

  c.noise_c = r.num("noise.c", c.noise_c);
  c.u_max = r.num("noise.u_max", c.u_max);
  c.measurement_std = r.num("noise.measurement_std", c.measurement_std);
  if (r.has("noise.diffusion"))
    c.diffusion_override = r.num("noise.diffusion", 0.0);

  c.dt = r.num("sim.dt", c.dt);
  c.duration = r.num("sim.duration", c.duration);
  c.seed = r.u64("sim.seed", c.seed);

  c.planner.max_iterations = r.integer("planner.max_iterations", c.planner.max_iterations);
  c.planner.steer_step = r.num("planner.steer_step", c.planner.steer_step);
  c.planner.goal_bias = r.num("planner.goal_bias", c.planner.goal_bias);
  c.planner.feasibility_margin = r.num("planner.margin", c.planner.feasibility_margin);
  c.planner.shortcut = r.flag("planner.shortcut", c.planner.shortcut);
  const std::string mode = r.str("planner.mode", "free");
  if (mode == "free")
    c.planner.mode = PlannerMode::FreeSpace;
  else if (mode == "grid")
    c.planner.mode = PlannerMode::GridRestricted;
  else
    throw ConfigError("planner.mode must be free or grid");

  c.solver_tol = r.num("solver.tol", c.solver_tol);
  c.solver_max_iter = r.integer("solver.max_iter", c.solver_max_iter);
  c.snapshot_stride = r.integer("output.snapshot_stride", c.snapshot_stride);
  c.record_paths = r.flag("output.record_paths", c.record_paths);
  r.require_all_read();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_key_values(parse_key_values(ss.str()));
}

namespace {

// Rewrites every numeric value in the shortest form that parses back to the
// same double, so 0.3 is written as 0.3 rather than 0.29999999999999999.
std::string shortest_numbers(const std::string &text) {
  std::istringstream in(text);
  std::string out;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) {
      const std::string v = line.substr(eq + 3);
      // Integers (seeds, counts) stay exact.
      const bool integral = v.find_first_of(".eE") == std::string::npos;
      double x = 0.0;
      const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (!integral && ec == std::errc() && end == v.data() + v.size()) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, x);
        line = line.substr(0, eq + 3) + std::string(buf, res.ptr);
      }
    }
    out += line;
    out += '\n';
  }
  return out;
}

} // namespace

std::string to_text(const ScenarioConfig &c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "schema_version = " << c.schema_version << "\n"
     << "domain.size_x = " << c.domain.x() << "\n"
     << "domain.size_y = " << c.domain.y() << "\n"
     << "grid.nx = " << c.nx << "\n"
     << "grid.ny = " << c.ny << "\n"
     << "grid.boundary = " << (c.boundary == Boundary::Periodic ? "periodic" : "neumann") << "\n"
     << "localization.sigma = " << c.kernel_sigma << "\n"
     << "robot.count = " << c.robots.size() << "\n";
  for (std::size_t i = 0; i < c.robots.size(); ++i) {
    const std::string p = "robot." + std::to_string(i);
    os << p << ".x = " << c.robots[i].position.x() << "\n"
       << p << ".y = " << c.robots[i].position.y() << "\n"
       << p << ".battery = " << c.robots[i].battery << "\n";
  }
  os << "target.count = " << c.target.size() << "\n";
  for (std::size_t i = 0; i < c.target.size(); ++i) {
    const std::string p = "target." + std::to_string(i);
    os << p << ".x = " << c.target[i].center.x() << "\n"
       << p << ".y = " << c.target[i].center.y() << "\n"
       << p << ".sigma = " << c.target[i].sigma << "\n"
       << p << ".weight = " << c.target[i].weight << "\n";
  }
  os << "target.normalize = " << (c.target_normalize ? "true" : "false") << "\n"
     << "target.velocity_x = " << c.target_velocity.x() << "\n"
     << "target.velocity_y = " << c.target_velocity.y() << "\n";
  if (c.workspace)
    os << "workspace.x0 = " << c.workspace->lo.x() << "\n"
       << "workspace.y0 = " << c.workspace->lo.y() << "\n"
       << "workspace.x1 = " << c.workspace->hi.x() << "\n"
       << "workspace.y1 = " << c.workspace->hi.y() << "\n";
  write_shapes(os, "danger", c.danger);
  write_shapes(os, "charger", c.charger);
  os << "gains.alpha_v = " << c.gains.alpha_v << "\n"
     << "gains.alpha_s = " << c.gains.alpha_s << "\n"
     << "gains.alpha_e = " << c.gains.alpha_e << "\n"
     << "gains.gamma = " << c.gains.gamma << "\n"
     << "gains.epsilon = " << c.gains.epsilon << "\n"
     << "gains.cbf_margin = " << c.gains.cbf_margin << "\n"
     << "energy.c1 = " << c.energy.c1 << "\n"
     << "energy.c2 = " << c.energy.c2 << "\n"
     << "energy.c3 = " << c.energy.c3 << "\n"
     << "energy.e_min = " << c.energy.e_min << "\n"
     << "energy.consumption = "
     << (c.energy.consumption == Consumption::Quadratic ? "quadratic" : "linear") << "\n"
     << "energy.resume_level = " << c.resume_level << "\n"
     << "energy.hold_margin = " << c.hold_margin << "\n"
     << "energy.hold_gain = " << c.hold_gain << "\n"
     << "noise.c = " << c.noise_c << "\n"
     << "noise.u_max = " << c.u_max << "\n"
     << "noise.measurement_std = " << c.measurement_std << "\n";
  if (c.diffusion_override)
    os << "noise.diffusion = " << *c.diffusion_override << "\n";
  os << "sim.dt = " << c.dt << "\n"
     << "sim.duration = " << c.duration << "\n"
     << "sim.seed = " << c.seed << "\n"
     << "planner.max_iterations = " << c.planner.max_iterations << "\n"
     << "planner.steer_step = " << c.planner.steer_step << "\n"
     << "planner.goal_bias = " << c.planner.goal_bias << "\n"
     << "planner.margin = " << c.planner.feasibility_margin << "\n"
     << "planner.shortcut = " << (c.planner.shortcut ? "true" : "false") << "\n"
     << "planner.mode = " << (c.planner.mode == PlannerMode::FreeSpace ? "free" : "grid") << "\n"
     << "solver.tol = " << c.solver_tol << "\n"
     << "solver.max_iter = " << c.solver_max_iter << "\n"
     << "output.snapshot_stride = " << c.snapshot_stride << "\n"
     << "output.record_paths = " << (c.record_paths ? "true" : "false") << "\n";
  return shortest_numbers(os.str());
}

ScenarioConfig reference_scenario() {
  // The 4 m field sits in the middle of an 8 m periodic grid so kernels never
  // reach the wrap-around; robots are confined to the field itself.
  const Vec2 o(2.0, 2.0);
  ScenarioConfig c;
  c.domain = {8.0, 8.0};
  c.workspace = Rect{o, o + Vec2(4.0, 4.0)};
  c.kernel_sigma = 0.45;
  c.robots = {{o + Vec2(0.4, 2.2), 0.29},
              {o + Vec2(2.0, 3.7), 0.89},
              {o + Vec2(2.4, 0.3), 0.24},
              {o + Vec2(3.6, 3.6), 0.39}};
  // Target mass is 1.25 team masses: the surplus keeps the residual positive
  // around the formation, so a robot leaving the charger is still pulled in.
  const double target_sigma = 0.8;
  const double n = static_cast<double>(c.robots.size());
  c.target = {{o + Vec2(2.7, 2.7), target_sigma,
               1.25 * n * c.kernel_sigma * c.kernel_sigma / (target_sigma * target_sigma)}};
  c.target_normalize = false;
  c.danger = {Disc{o + Vec2(1.0, 3.2), 0.25}, Disc{o + Vec2(3.2, 1.0), 0.25}};
  c.charger = {Disc{o + Vec2(1.4, 1.4), 0.35}};
  c.gains.gamma = 12.0; // gradient steps stay stable for Hessians up to 4 / (gamma dt) = 6.7
  c.gains.alpha_s = 5.0;
  c.gains.cbf_margin = 0.7;
  c.gains.alpha_e = 0.04;
  c.energy.c1 = 0.006 / (0.3 * 0.3); // full-speed draw c1 u_max^2 + c2 = 0.01 /s
  c.energy.c2 = 0.004;
  c.energy.c3 = 0.1;
  return c;
}

} // namespace safedensity
