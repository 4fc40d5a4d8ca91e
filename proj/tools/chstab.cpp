// Command-line front end: simulate, sweep, verify, plot, gap.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "CLI11.hpp"
#include "chstab/analysis.hpp"
#include "chstab/config.hpp"
#include "chstab/run.hpp"
#include "chstab/svg.hpp"
#include "chstab/verify.hpp"

namespace fs = std::filesystem;
using namespace chstab;

namespace {

struct Source {
  std::string config;
  std::string preset;
  std::string out;
  bool paper_scale = false;
};

void add_source_options(CLI::App* cmd, Source& src) {
  cmd->add_option("--config", src.config, "Run configuration file");
  cmd->add_option("--preset", src.preset, "Named preset (see 'chstab presets')");
  cmd->add_option("--out", src.out, "Output directory (overrides output.dir)");
  cmd->add_flag("--paper-scale", src.paper_scale, "Use the 150x150 grid and dt = 5e-5");
}

RunConfig resolve(const Source& src) {
  if (src.config.empty() == src.preset.empty())
    throw CLI::ValidationError("exactly one of --config or --preset is required");
  RunConfig cfg = src.preset.empty() ? load_config(src.config) : preset(src.preset, src.paper_scale);
  if (!src.config.empty() && src.paper_scale) {
    cfg.grid.cells = {150, 150};
    cfg.scheme.dt = 5e-5;
    cfg.scheme.snapshot_stride = cfg.scheme.step_count() / 2;
  }
  if (!src.out.empty()) cfg.output_dir = src.out;
  cfg.validate();
  return cfg;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw CLI::ValidationError(std::string("bad entry in ") + what + ": '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(std::string(what) + " list is empty");
  return out;
}

void print_summary(const RunRecord& rec, const GridOperators& ops, std::ostream& os) {
  const auto& last = rec.series.back();
  os << "final t=" << last.t << "  ||z||=" << last.norm_z << "  energy=" << last.energy << "  mass=" << last.mass
     << '\n';
  if (rec.config.mode != RunMode::controlled) return;
  try {
    const DecayReport d = fit_decay(rec);
    os << "decay rate " << d.rate << " on [" << d.t_start << ", " << d.t_end << "], fit residual " << d.residual;
    if (d.monotone_after) os << ", nonincreasing from t=" << *d.monotone_after;
    os << '\n';
    os << "control energy " << control_energy(rec) << '\n';
    if (d.rate > 0.0) {
      const auto setup = make_feedback(rec.config, ops);
      const ControlEnergyReport ce = control_energy_report(rec, *setup, ops, d.rate);
      os << "energy bound " << ce.bound << " (D=" << ce.constant << ")\n";
    }
  } catch (const std::exception& e) {
    os << "analysis skipped: " << e.what() << '\n';
  }
}

int cmd_simulate(const Source& src) {
  const RunConfig cfg = resolve(src);
  const GridOperators ops(cfg.grid);
  std::cerr << "running " << cfg.output_dir << " (" << cfg.scheme.step_count() << " steps)\n";
  if (cfg.mode == RunMode::free) {
    const RunRecord rec = run(cfg);
    if (rec.warning) std::cerr << "warning: " << *rec.warning << '\n';
    write_run(rec, ops, cfg.output_dir);
    print_summary(rec, ops, std::cout);
    return 0;
  }
  BatchResult b = run_batch({cfg}, [](long n, long total) {
    if (n % 1000 == 0 || n == total) std::cerr << "  step " << n << "/" << total << '\n';
  });
  const RunRecord& rec = b.controlled.front();
  if (rec.warning) std::cerr << "warning: " << *rec.warning << '\n';
  write_run(rec, ops, cfg.output_dir);
  write_run(b.reference, ops, b.reference.config.output_dir);
  if (rec.error) {
    std::cerr << "run failed: " << *rec.error << '\n';
    return 1;
  }
  print_summary(rec, ops, std::cout);
  return 0;
}

std::string run_name(int level, double lambda) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "m%d-lambda%g", level, lambda);
  return buf;
}

int cmd_sweep(const Source& src, const std::string& levels_s, const std::string& lambdas_s, int jobs) {
  const auto levels = parse_list<int>(levels_s, "levels");
  const auto lambdas = parse_list<double>(lambdas_s, "lambdas");
  RunConfig base = resolve(src);
  const fs::path root = src.out.empty() ? fs::path(base.output_dir) : fs::path(src.out);
  std::vector<RunConfig> configs;
  for (int m : levels) {
    for (double l : lambdas) {
      RunConfig c = base;
      c.mode = RunMode::controlled;
      c.initial = InitialKind::controlled;
      c.level = m;
      c.lambda1 = c.lambda2 = l;
      c.output_dir = (root / run_name(m, l)).string();
      configs.push_back(c);
    }
  }
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
  std::vector<std::vector<RunConfig>> groups(static_cast<std::size_t>(jobs));
  for (std::size_t i = 0; i < configs.size(); ++i) groups[i % groups.size()].push_back(configs[i]);

  const GridOperators ops(base.grid);
  std::mutex lock;
  std::vector<RunRecord> records;
  std::vector<std::string> failures;
  auto work = [&](const std::vector<RunConfig>& group) {
    try {
      BatchResult b = run_batch(group);
      for (const auto& rec : b.controlled) write_run(rec, ops, rec.config.output_dir);
      std::lock_guard<std::mutex> g(lock);
      if (!fs::exists(root / "reference")) write_run(b.reference, ops, root / "reference");
      for (auto& rec : b.controlled) records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> g(lock);
      failures.push_back(e.what());
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t i = 1; i < groups.size(); ++i) threads.emplace_back(work, std::cref(groups[i]));
  work(groups[0]);
  for (auto& t : threads) t.join();

  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.config.level, a.config.lambda1) < std::tie(b.config.level, b.config.lambda1);
  });
  fs::create_directories(root);
  std::ofstream csv(root / "sweep.csv");
  csv << "M,lambda,final_error,mu_hat,monotone_after,status\n";
  char buf[256];
  for (const auto& rec : records) {
    std::string mu = "", mono = "", status = rec.error ? "failed" : "ok";
    double final_error = rec.series.empty() ? NAN : rec.series.back().norm_z;
    if (!rec.error) {
      try {
        const DecayReport d = fit_decay(rec);
        std::snprintf(buf, sizeof buf, "%.17g", d.rate);
        mu = buf;
        std::vector<double> t, z;
        for (const auto& r : rec.series) {
          t.push_back(r.t);
          z.push_back(r.norm_z);
        }
        const auto ma = monotone_after(t, z, 1e-6);
        if (ma) {
          std::snprintf(buf, sizeof buf, "%.17g", *ma);
          mono = buf;
        } else {
          mono = "never";
        }
      } catch (const std::exception& e) {
        status = std::string("fit failed: ") + e.what();
      }
    }
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,", rec.config.level, rec.config.lambda1, final_error);
    csv << buf << mu << ',' << mono << ',' << status << '\n';
  }
  for (const auto& f : failures) std::cerr << "group failed: " << f << '\n';
  std::cout << "wrote " << (root / "sweep.csv").string() << '\n';
  return failures.empty() ? 0 : 1;
}

int cmd_verify(const std::string& level, const std::string& fault) {
  const auto results = run_verification(parse_verify_level(level), parse_fault(fault));
  bool ok = true;
  for (const auto& r : results) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s  %-36s %s  [%.2fs]", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                  r.detail.c_str(), r.seconds);
    std::cout << buf << '\n';
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

std::vector<std::pair<std::string, std::vector<std::string>>> read_csv_columns(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<std::string, std::vector<std::string>>> cols;
  std::stringstream hs(line);
  for (std::string h; std::getline(hs, h, ',');) cols.push_back({h, {}});
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::size_t c = 0;
    for (std::string cell; std::getline(ls, cell, ',');) {
      if (c >= cols.size()) throw std::runtime_error(p.string() + ":" + std::to_string(lineno) + ": too many columns");
      cols[c++].second.push_back(cell);
    }
    if (c != cols.size()) throw std::runtime_error(p.string() + ":" + std::to_string(lineno) + ": too few columns");
  }
  return cols;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

int cmd_plot(const std::string& run_dir, const std::string& sweep_dir, int layout_level, int layout_cells,
             const std::string& out) {
  int made = 0;
  if (!run_dir.empty()) {
    const auto rows = read_timeseries(fs::path(run_dir) / "timeseries.csv");
    PlotSeries z{"||z||", {}, {}, ""}, z1{"||z1||", {}, {}, ""}, z2{"||z2||", {}, {}, ""};
    for (const auto& r : rows) {
      for (auto* s : {&z, &z1, &z2}) s->x.push_back(r.t);
      z.y.push_back(r.norm_z);
      z1.y.push_back(r.norm_z1);
      z2.y.push_back(r.norm_z2);
    }
    PlotOptions o;
    o.title = "difference to reference";
    o.ylabel = "H norm (log scale)";
    const fs::path dst = out.empty() ? fs::path(run_dir) / "decay.svg" : fs::path(out) / "decay.svg";
    fs::create_directories(dst.parent_path());
    write_text(dst, line_plot_svg({z, z1, z2}, o));
    std::cout << "wrote " << dst.string() << '\n';
    ++made;
    const fs::path layout = fs::path(run_dir) / "layout.txt";
    if (fs::exists(layout)) {
      std::ifstream in(layout);
      const ActuatorLayout lay = read_layout(in);
      const fs::path cfg_path = fs::path(run_dir) / "config.copy";
      const GridSpec spec = fs::exists(cfg_path) ? load_config(cfg_path.string()).grid : GridSpec{};
      const fs::path ldst = dst.parent_path() / "layout.svg";
      write_text(ldst, layout_svg(lay, spec));
      std::cout << "wrote " << ldst.string() << '\n';
      ++made;
    }
  }
  if (!sweep_dir.empty()) {
    const auto cols = read_csv_columns(fs::path(sweep_dir) / "sweep.csv");
    if (cols.size() < 2 || cols[0].first != "M" || cols[1].first != "lambda")
      throw std::runtime_error("sweep.csv: unexpected header");
    std::vector<PlotSeries> series;
    for (std::size_t i = 0; i < cols[0].second.size(); ++i) {
      const int m = std::stoi(cols[0].second[i]);
      const double l = std::stod(cols[1].second[i]);
      const fs::path ts = fs::path(sweep_dir) / run_name(m, l) / "timeseries.csv";
      if (!fs::exists(ts)) continue;
      PlotSeries s;
      s.label = "M=" + std::to_string(m) + ", lambda=" + cols[1].second[i];
      for (const auto& r : read_timeseries(ts)) {
        s.x.push_back(r.t);
        s.y.push_back(r.norm_z);
      }
      series.push_back(std::move(s));
    }
    PlotOptions o;
    o.title = "||z|| by gain and actuator level";
    o.ylabel = "H x H norm (log scale)";
    const fs::path dst = (out.empty() ? fs::path(sweep_dir) : fs::path(out)) / "sweep.svg";
    fs::create_directories(dst.parent_path());
    write_text(dst, line_plot_svg(series, o));
    std::cout << "wrote " << dst.string() << '\n';
    ++made;
  }
  if (layout_level > 0) {
    GridSpec spec;
    spec.cells = {layout_cells, layout_cells};
    const ActuatorLayout lay = build_layout(layout_level, spec);
    const fs::path dst = (out.empty() ? fs::path(".") : fs::path(out)) / ("layout_m" + std::to_string(layout_level) + ".svg");
    fs::create_directories(dst.parent_path());
    write_text(dst, layout_svg(lay, spec));
    std::cout << "wrote " << dst.string() << '\n';
    ++made;
  }
  if (made == 0) throw CLI::ValidationError("nothing to plot: give --run, --sweep or --layout");
  return 0;
}

int cmd_gap(int cells, const std::string& levels_s, const std::string& lambdas_s, const std::string& da,
            const std::string& out) {
  const auto levels = parse_list<int>(levels_s, "levels");
  const auto lambdas = parse_list<double>(lambdas_s, "lambdas");
  GridSpec spec;
  spec.cells = {cells, cells};
  const GridOperators ops(spec);
  std::vector<GapReport> reports;
  for (int m : levels) reports.push_back(gap_report(m, ops, lambdas, parse_da_form(da)));
  std::cout << gap_summary(reports);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "gap.csv");
    write_gap_csv(f, reports);
    std::cout << "wrote " << (fs::path(out) / "gap.csv").string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback stabilization experiments for the nonisothermal Cahn-Hilliard system"};
  app.require_subcommand(1);

  Source sim_src;
  auto* sim = app.add_subcommand("simulate", "Run one free or controlled simulation");
  add_source_options(sim, sim_src);

  Source sweep_src;
  std::string levels = "2", lambdas;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Controlled runs over actuator levels and gains");
  add_source_options(sweep, sweep_src);
  sweep->add_option("--levels", levels, "Comma-separated actuator levels M");
  sweep->add_option("--lambdas", lambdas, "Comma-separated gains (lambda1 = lambda2)")->required();
  sweep->add_option("--jobs", jobs, "Parallel run groups (each steps its own reference)");

  std::string vlevel = "fast", fault = "none";
  auto* verify = app.add_subcommand("verify", "Run the invariant checks");
  verify->add_option("--level", vlevel, "fast or full");
  verify->add_option("--inject-fault", fault, "none or flip-gain-sign");

  std::string plot_run, plot_sweep, plot_out;
  int plot_layout = 0, plot_cells = 96;
  auto* plot = app.add_subcommand("plot", "Emit SVG plots from run or sweep output");
  plot->add_option("--run", plot_run, "Run directory with timeseries.csv");
  plot->add_option("--sweep", plot_sweep, "Sweep directory with sweep.csv");
  plot->add_option("--layout", plot_layout, "Draw the actuator layout for level M");
  plot->add_option("--cells", plot_cells, "Cells per axis for --layout");
  plot->add_option("--out", plot_out, "Output directory");

  int gap_cells = 32;
  std::string gap_levels = "1,2,3", gap_lambdas = "0,10,100", gap_da = "full", gap_out;
  auto* gap = app.add_subcommand("gap", "Spectral-gap constants and feedback-gap minima on a coarse grid");
  gap->add_option("--cells", gap_cells, "Cells per axis");
  gap->add_option("--levels", gap_levels, "Comma-separated actuator levels");
  gap->add_option("--lambdas", gap_lambdas, "Comma-separated lambda1 values");
  gap->add_option("--da-form", gap_da, "paper or full");
  gap->add_option("--out", gap_out, "Directory for gap.csv");

  auto* presets = app.add_subcommand("presets", "List preset names");

  try {
    app.parse(argc, argv);
    if (*sim) return cmd_simulate(sim_src);
    if (*sweep) return cmd_sweep(sweep_src, levels, lambdas, jobs);
    if (*verify) return cmd_verify(vlevel, fault);
    if (*plot) return cmd_plot(plot_run, plot_sweep, plot_layout, plot_cells, plot_out);
    if (*gap) return cmd_gap(gap_cells, gap_levels, gap_lambdas, gap_da, gap_out);
    if (*presets) {
      for (const auto& p : preset_names()) std::cout << p << '\n';
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
