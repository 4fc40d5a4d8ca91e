#include "chstab/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace chstab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument("not a finite number: '" + s + "'");
  return v;
}

int to_int(const std::string& s) {
  std::size_t pos = 0;
  const long v = std::stol(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return static_cast<int>(v);
}

template <typename T, typename F>
std::vector<T> list_of(const std::string& s, std::size_t n, F conv) {
  const auto w = words(s);
  if (w.size() != n)
    throw std::invalid_argument("expected " + std::to_string(n) + " values, got " + std::to_string(w.size()));
  std::vector<T> out;
  for (const auto& x : w) out.push_back(conv(x));
  return out;
}

std::size_t axis_count(const std::string& s) {
  const std::size_t n = words(s).size();
  if (n < 1 || n > 2) throw std::invalid_argument("expected one value per axis (1 or 2 values)");
  return n;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"grid.dim", [](RunConfig& c, const std::string& v) { c.grid.dim = to_int(v); }},
      {"grid.lengths",
       [](RunConfig& c, const std::string& v) {
         const auto l = list_of<double>(v, axis_count(v), to_double);
         c.grid.lengths = {l[0], l.size() > 1 ? l[1] : 1.0};
       }},
      {"grid.cells",
       [](RunConfig& c, const std::string& v) {
         const auto l = list_of<int>(v, axis_count(v), to_int);
         c.grid.cells = {l[0], l.size() > 1 ? l[1] : 2};
       }},
      {"physics.nu0", [](RunConfig& c, const std::string& v) { c.physics.nu0 = to_double(v); }},
      {"physics.nu1", [](RunConfig& c, const std::string& v) { c.physics.nu1 = to_double(v); }},
      {"physics.nu2", [](RunConfig& c, const std::string& v) { c.physics.nu2 = to_double(v); }},
      {"physics.tau", [](RunConfig& c, const std::string& v) { c.physics.tau = to_double(v); }},
      {"physics.g",
       [](RunConfig& c, const std::string& v) {
         if (v == "none") {
           c.physics.g.reset();
           return;
         }
         const auto l = list_of<double>(v, 3, to_double);
         GFamily g;
         g.a0 = l[0];
         g.a1 = l[1];
         g.a2 = l[2];
         c.physics.g = g;
       }},
      {"physics.h1", [](RunConfig& c, const std::string& v) { c.h1 = to_double(v); }},
      {"physics.h2", [](RunConfig& c, const std::string& v) { c.h2 = to_double(v); }},
      {"scheme.time_step", [](RunConfig& c, const std::string& v) { c.scheme.dt = to_double(v); }},
      {"scheme.final_time", [](RunConfig& c, const std::string& v) { c.scheme.final_time = to_double(v); }},
      {"scheme.feedback",
       [](RunConfig& c, const std::string& v) { c.scheme.feedback = parse_feedback_treatment(v); }},
      {"scheme.solver", [](RunConfig& c, const std::string& v) { c.scheme.solver = parse_linear_solver(v); }},
      {"scheme.solve_tolerance",
       [](RunConfig& c, const std::string& v) { c.scheme.solve_tolerance = to_double(v); }},
      {"scheme.snapshot_stride",
       [](RunConfig& c, const std::string& v) { c.scheme.snapshot_stride = to_int(v); }},
      {"run.mode", [](RunConfig& c, const std::string& v) { c.mode = parse_run_mode(v); }},
      {"run.initial", [](RunConfig& c, const std::string& v) { c.initial = parse_initial_kind(v); }},
      {"control.level", [](RunConfig& c, const std::string& v) { c.level = to_int(v); }},
      {"control.lambda1", [](RunConfig& c, const std::string& v) { c.lambda1 = to_double(v); }},
      {"control.lambda2", [](RunConfig& c, const std::string& v) { c.lambda2 = to_double(v); }},
      {"control.da_form", [](RunConfig& c, const std::string& v) { c.da = parse_da_form(v); }},
      {"control.v_form", [](RunConfig& c, const std::string& v) { c.vform = parse_v_form(v); }},
      {"output.dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

const std::vector<std::string> kRequired = {"physics.nu0", "physics.nu1", "physics.nu2", "physics.tau"};

}  // namespace

std::string to_string(RunMode m) { return m == RunMode::free ? "free" : "controlled"; }

RunMode parse_run_mode(const std::string& s) {
  if (s == "free") return RunMode::free;
  if (s == "controlled") return RunMode::controlled;
  throw std::invalid_argument("unknown run mode '" + s + "' (expected free|controlled)");
}

ConfigError::ConfigError(const std::string& source, int line, const std::string& msg)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + msg : source + ": " + msg),
      line_(line) {}

void RunConfig::validate() const {
  grid.validate();
  physics.validate();
  scheme.validate(physics);
  if (output_dir.empty()) throw std::invalid_argument("output directory must be set");
  if (mode == RunMode::controlled) {
    if (level < 1) throw std::invalid_argument("controlled runs need an actuator level >= 1");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
      throw std::invalid_argument("feedback gains must be nonnegative");
  }
}

bool RunConfig::operator==(const RunConfig& o) const {
  auto same_g = [](const std::optional<GFamily>& a, const std::optional<GFamily>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || (a->a0 == b->a0 && a->a1 == b->a1 && a->a2 == b->a2);
  };
  auto same_grid = [](const GridSpec& a, const GridSpec& b) {
    if (a.dim != b.dim) return false;
    for (int k = 0; k < a.dim; ++k)
      if (a.lengths[k] != b.lengths[k] || a.cells[k] != b.cells[k]) return false;
    return true;
  };
  return same_grid(grid, o.grid) && physics.nu0 == o.physics.nu0 && physics.nu1 == o.physics.nu1 &&
         physics.nu2 == o.physics.nu2 && physics.tau == o.physics.tau && same_g(physics.g, o.physics.g) &&
         h1 == o.h1 && h2 == o.h2 && scheme.dt == o.scheme.dt && scheme.final_time == o.scheme.final_time &&
         scheme.feedback == o.scheme.feedback && scheme.solver == o.scheme.solver &&
         scheme.solve_tolerance == o.scheme.solve_tolerance &&
         scheme.snapshot_stride == o.scheme.snapshot_stride && mode == o.mode && initial == o.initial &&
         level == o.level && lambda1 == o.lambda1 && lambda2 == o.lambda2 && da == o.da &&
         vform == o.vform && output_dir == o.output_dir;
}

RunConfig parse_config(std::istream& is, const std::string& source) {
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::map<std::string, std::string> values;
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(source, lineno, "unknown key '" + key + "'");
    if (const auto prev = seen.find(key); prev != seen.end())
      throw ConfigError(source, lineno,
                        "duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")");
    if (value.empty()) throw ConfigError(source, lineno, "missing value for '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, lineno, key + ": " + e.what());
    }
    seen[key] = lineno;
    values[key] = value;
  }
  for (const char* key : {"grid.lengths", "grid.cells"}) {
    const auto it = values.find(key);
    if (it != values.end() && words(it->second).size() != static_cast<std::size_t>(cfg.grid.dim))
      throw ConfigError(source, seen[key], std::string(key) + ": expected " + std::to_string(cfg.grid.dim) +
                                               " values for a " + std::to_string(cfg.grid.dim) + "-D grid");
  }
  for (const auto& key : kRequired) {
    if (!seen.count(key)) throw ConfigError(source, 0, "required key '" + key + "' is missing");
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source, 0, e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open file");
  return parse_config(in, path);
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os << "grid.dim = " << c.grid.dim << "\n";
  os << "grid.lengths =";
  for (int a = 0; a < c.grid.dim; ++a) os << ' ' << fmt(c.grid.lengths[a]);
  os << "\ngrid.cells =";
  for (int a = 0; a < c.grid.dim; ++a) os << ' ' << c.grid.cells[a];
  os << "\n";
  os << "physics.nu0 = " << fmt(c.physics.nu0) << "\n";
  os << "physics.nu1 = " << fmt(c.physics.nu1) << "\n";
  os << "physics.nu2 = " << fmt(c.physics.nu2) << "\n";
  os << "physics.tau = " << fmt(c.physics.tau) << "\n";
  if (c.physics.g) {
    os << "physics.g = " << fmt(c.physics.g->a0) << ' ' << fmt(c.physics.g->a1) << ' '
       << fmt(c.physics.g->a2) << "\n";
  } else {
    os << "physics.g = none\n";
  }
  os << "physics.h1 = " << fmt(c.h1) << "\n";
  os << "physics.h2 = " << fmt(c.h2) << "\n";
  os << "scheme.time_step = " << fmt(c.scheme.dt) << "\n";
  os << "scheme.final_time = " << fmt(c.scheme.final_time) << "\n";
  os << "scheme.feedback = " << to_string(c.scheme.feedback) << "\n";
  os << "scheme.solver = " << to_string(c.scheme.solver) << "\n";
  os << "scheme.solve_tolerance = " << fmt(c.scheme.solve_tolerance) << "\n";
  os << "scheme.snapshot_stride = " << c.scheme.snapshot_stride << "\n";
  os << "run.mode = " << to_string(c.mode) << "\n";
  os << "run.initial = " << to_string(c.initial) << "\n";
  os << "control.level = " << c.level << "\n";
  os << "control.lambda1 = " << fmt(c.lambda1) << "\n";
  os << "control.lambda2 = " << fmt(c.lambda2) << "\n";
  os << "control.da_form = " << to_string(c.da) << "\n";
  os << "control.v_form = " << to_string(c.vform) << "\n";
  os << "output.dir = " << c.output_dir << "\n";
  return os.str();
}

namespace {

const std::vector<int> kPresetLevels = {1, 2, 3};
const std::vector<int> kPresetLambdas = {50, 100, 250, 500, 750, 1000};

RunConfig base_profile(bool paper_scale) {
  RunConfig c;
  c.physics = PhysParams{};
  c.physics.nu0 = 0.1;
  c.physics.nu1 = 1.0;
  c.physics.nu2 = 0.005;
  c.physics.tau = 2.0;
  const int n = paper_scale ? 150 : 96;
  c.grid = GridSpec{2, {1.0, 1.0}, {n, n}};
  c.scheme.dt = paper_scale ? 5e-5 : 1e-4;
  c.scheme.final_time = 1.0;
  // Snapshots at t = 0.5 and t = 1.
  c.scheme.snapshot_stride = c.scheme.step_count() / 2;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out = {"paper-reference", "free-controlled-initial"};
  for (int m : kPresetLevels)
    for (int l : kPresetLambdas) out.push_back("m" + std::to_string(m) + "-lambda" + std::to_string(l));
  return out;
}

RunConfig preset(const std::string& name, bool paper_scale) {
  RunConfig c = base_profile(paper_scale);
  c.output_dir = "runs/" + name;
  if (name == "paper-reference") {
    c.mode = RunMode::free;
    c.initial = InitialKind::reference;
    return c;
  }
  if (name == "free-controlled-initial") {
    c.mode = RunMode::free;
    c.initial = InitialKind::controlled;
    return c;
  }
  int level = 0, lambda = 0;
  char tail = 0;
  if (std::sscanf(name.c_str(), "m%d-lambda%d%c", &level, &lambda, &tail) == 2) {
    for (int m : kPresetLevels) {
      for (int l : kPresetLambdas) {
        if (m != level || l != lambda) continue;
        c.mode = RunMode::controlled;
        c.initial = InitialKind::controlled;
        c.level = level;
        c.lambda1 = lambda;
        c.lambda2 = lambda;
        return c;
      }
    }
  }
  std::string known;
  for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
  throw std::invalid_argument("unknown preset '" + name + "' (known: " + known + ")");
}

}  // namespace chstab
