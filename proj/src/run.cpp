#include "chstab/run.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "chstab/analysis.hpp"

namespace chstab {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

PhysParams physics_with_forces(const RunConfig& cfg, const GridOperators& ops) {
  PhysParams p = cfg.physics;
  if (cfg.h1 != 0.0) p.h1 = Vector::Constant(ops.size(), cfg.h1);
  if (cfg.h2 != 0.0) p.h2 = Vector::Constant(ops.size(), cfg.h2);
  return p;
}

RunConfig reference_config(const RunConfig& cfg) {
  RunConfig r = cfg;
  r.mode = RunMode::free;
  r.initial = InitialKind::reference;
  std::filesystem::path parent = std::filesystem::path(cfg.output_dir).parent_path();
  r.output_dir = (parent / "reference").string();
  return r;
}

void check_compatible(const RunConfig& a, const RunConfig& b) {
  RunConfig x = a, y = b;
  // Fields allowed to differ between runs sharing a reference.
  for (RunConfig* c : {&x, &y}) {
    c->mode = RunMode::controlled;
    c->initial = InitialKind::controlled;
    c->level = 1;
    c->lambda1 = c->lambda2 = 0.0;
    c->da = DAForm::paper;
    c->vform = VForm::stiffness;
    c->output_dir = "-";
    c->scheme.feedback = FeedbackTreatment::implicit;
    c->scheme.snapshot_stride = 0;
  }
  if (!(x == y))
    throw std::invalid_argument("batched runs must share grid, physics, time step and horizon (" +
                                a.output_dir + " vs " + b.output_dir + ")");
}

double mass_of(const GridOperators& ops, const Vector& w1) { return (ops.mass() * w1).sum(); }

SeriesRow make_row(const GridOperators& ops, const PhysParams& params, const SimState& s,
                   const SimState* ref, double input_l2) {
  SeriesRow row;
  row.t = s.t;
  if (ref) {
    row.norm_z1 = norm_H(ops, s.w1 - ref->w1);
    row.norm_z2 = norm_H(ops, s.w2 - ref->w2);
  } else {
    row.norm_z1 = norm_H(ops, s.w1);
    row.norm_z2 = norm_H(ops, s.w2);
  }
  row.norm_z = std::hypot(row.norm_z1, row.norm_z2);
  row.energy = free_energy(s, params, ops);
  row.mass = mass_of(ops, s.w1);
  row.input_l2 = input_l2;
  return row;
}

bool snapshot_due(const SchemeConfig& sc, long step) {
  return sc.snapshot_stride > 0 && step % sc.snapshot_stride == 0;
}

struct Track {
  RunRecord record;
  std::shared_ptr<const FeedbackSetup> setup;
  std::unique_ptr<Stepper> stepper;
  SimState state;
  bool alive = true;
};

}  // namespace

std::shared_ptr<const FeedbackSetup> make_feedback(const RunConfig& cfg, const GridOperators& ops) {
  const ActuatorLayout layout = build_layout(cfg.level, cfg.grid);
  ActuatorFamily fam = evaluate_family(layout, ops);
  CouplingMatrices coupling = assemble_coupling(fam, ops);
  FeedbackGains gains = cached_gains(fam, ops, coupling, cfg.lambda1, cfg.lambda2, cfg.da, cfg.vform);
  return std::make_shared<const FeedbackSetup>(
      FeedbackSetup{std::move(fam), std::move(coupling), std::move(gains)});
}

RunRecord run(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.mode == RunMode::controlled) {
    BatchResult b = run_batch({cfg});
    if (b.controlled[0].error) throw std::runtime_error(*b.controlled[0].error);
    return std::move(b.controlled[0]);
  }
  const GridOperators ops(cfg.grid);
  const PhysParams params = physics_with_forces(cfg, ops);
  const Stepper stepper(ops, params, cfg.scheme);
  RunRecord rec;
  rec.config = cfg;
  if (auto w = cfg.scheme.validate(params)) rec.warning = *w;
  SimState s = initial_state(cfg.initial, ops, params);
  rec.series.push_back(make_row(ops, params, s, nullptr, 0.0));
  if (snapshot_due(cfg.scheme, 0)) rec.snapshots.push_back({0, s});
  const long steps = cfg.scheme.step_count();
  for (long n = 1; n <= steps; ++n) {
    s = stepper.step(s);
    rec.series.push_back(make_row(ops, params, s, nullptr, 0.0));
    if (snapshot_due(cfg.scheme, n)) rec.snapshots.push_back({n, s});
  }
  rec.final_state = std::move(s);
  return rec;
}

BatchResult run_batch(const std::vector<RunConfig>& configs, const Progress& progress) {
  if (configs.empty()) throw std::invalid_argument("run_batch needs at least one config");
  for (const auto& c : configs) {
    c.validate();
    if (c.mode != RunMode::controlled) throw std::invalid_argument("run_batch takes controlled configs only");
    check_compatible(configs.front(), c);
  }
  const RunConfig ref_cfg = reference_config(configs.front());
  const GridOperators ops(ref_cfg.grid);
  const PhysParams params = physics_with_forces(ref_cfg, ops);
  const Stepper free_stepper(ops, params, ref_cfg.scheme);

  BatchResult out;
  out.reference.config = ref_cfg;
  if (auto w = ref_cfg.scheme.validate(params)) out.reference.warning = *w;
  SimState ref = initial_state(InitialKind::reference, ops, params);
  out.reference.series.push_back(make_row(ops, params, ref, nullptr, 0.0));
  if (snapshot_due(ref_cfg.scheme, 0)) out.reference.snapshots.push_back({0, ref});

  std::vector<Track> tracks;
  tracks.reserve(configs.size());
  for (const auto& c : configs) {
    Track tr;
    tr.record.config = c;
    tr.record.warning = out.reference.warning;
    try {
      tr.setup = make_feedback(c, ops);
      tr.stepper = std::make_unique<Stepper>(ops, params, c.scheme, tr.setup);
      tr.state = initial_state(c.initial, ops, params);
      const Vector u = tr.setup->gains.order_gain * (tr.state.w1 - ref.w1);
      const Vector v = tr.setup->gains.heat_gain * (tr.state.w2 - ref.w2);
      tr.record.series.push_back(
          make_row(ops, params, tr.state, &ref, std::sqrt(u.squaredNorm() + v.squaredNorm())));
      if (snapshot_due(c.scheme, 0)) tr.record.snapshots.push_back({0, tr.state});
    } catch (const std::exception& e) {
      tr.record.error = e.what();
      tr.alive = false;
    }
    tracks.push_back(std::move(tr));
  }

  const long steps = ref_cfg.scheme.step_count();
  for (long n = 1; n <= steps; ++n) {
    SimState ref_next = free_stepper.step(ref);
    for (auto& tr : tracks) {
      if (!tr.alive) continue;
      try {
        StepInputs in;
        SimState next = tr.stepper->step(tr.state, &ref, &ref_next, &in);
        const double l2 = std::sqrt(in.order.squaredNorm() + in.heat.squaredNorm());
        tr.record.series.push_back(make_row(ops, params, next, &ref_next, l2));
        tr.record.inputs.push_back({next.t, std::move(in.order), std::move(in.heat)});
        if (snapshot_due(tr.record.config.scheme, n)) tr.record.snapshots.push_back({n, next});
        tr.state = std::move(next);
      } catch (const StepError& e) {
        tr.record.error = std::string(e.what());
        tr.alive = false;
      } catch (const std::exception& e) {
        tr.record.error = "step " + std::to_string(n) + ": " + e.what();
        tr.alive = false;
      }
    }
    ref = std::move(ref_next);
    out.reference.series.push_back(make_row(ops, params, ref, nullptr, 0.0));
    if (snapshot_due(ref_cfg.scheme, n)) out.reference.snapshots.push_back({n, ref});
    if (progress && (n % 100 == 0 || n == steps)) progress(n, steps);
  }
  out.reference.final_state = ref;
  for (auto& tr : tracks) {
    tr.record.final_state = std::move(tr.state);
    out.controlled.push_back(std::move(tr.record));
  }
  return out;
}

void write_run(const RunRecord& record, const GridOperators& ops, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "snapshots");
  auto open = [](const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(dir / "config.copy");
    f << serialize_config(record.config);
  }
  {
    auto f = open(dir / "timeseries.csv");
    f << "t,norm_H_z,norm_H_z1,norm_H_z2,energy,mass,input_l2\n";
    for (const auto& r : record.series) {
      f << num(r.t) << ',' << num(r.norm_z) << ',' << num(r.norm_z1) << ',' << num(r.norm_z2) << ','
        << num(r.energy) << ',' << num(r.mass) << ',' << num(r.input_l2) << '\n';
    }
  }
  {
    auto f = open(dir / "inputs.csv");
    f << 't';
    if (!record.inputs.empty()) {
      for (Eigen::Index j = 0; j < record.inputs.front().order.size(); ++j) f << ",u" << j + 1;
      for (Eigen::Index j = 0; j < record.inputs.front().heat.size(); ++j) f << ",v" << j + 1;
    }
    f << '\n';
    for (const auto& r : record.inputs) {
      f << num(r.t);
      for (Eigen::Index j = 0; j < r.order.size(); ++j) f << ',' << num(r.order[j]);
      for (Eigen::Index j = 0; j < r.heat.size(); ++j) f << ',' << num(r.heat[j]);
      f << '\n';
    }
  }
  for (const auto& snap : record.snapshots) {
    char name[32];
    std::snprintf(name, sizeof name, "step%06ld.csv", snap.step);
    auto f = open(dir / "snapshots" / name);
    f << "index,x1,x2,w1,w2,p\n";
    const SimState& s = snap.state;
    for (int k = 0; k < ops.size(); ++k) {
      const auto x = ops.node(k);
      f << k << ',' << num(x[0]) << ',' << num(x[1]) << ',' << num(s.w1[k]) << ',' << num(s.w2[k]) << ','
        << num(s.p[k]) << '\n';
    }
  }
  if (record.config.mode == RunMode::controlled) {
    auto f = open(dir / "layout.txt");
    write_layout(f, build_layout(record.config.level, record.config.grid));
  }
  const fs::path err = dir / "error.txt";
  if (record.error) {
    auto f = open(err);
    f << *record.error << '\n';
  } else if (fs::exists(err)) {
    fs::remove(err);
  }
}

std::vector<SeriesRow> read_timeseries(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot open " + csv.string());
  std::vector<SeriesRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::istringstream ls(line);
    SeriesRow r;
    double* fields[] = {&r.t, &r.norm_z, &r.norm_z1, &r.norm_z2, &r.energy, &r.mass, &r.input_l2};
    for (double* f : fields) {
      std::string cell;
      if (!std::getline(ls, cell, ',')) throw std::runtime_error(csv.string() + ":" + std::to_string(lineno) + ": too few columns");
      try {
        *f = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(csv.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace chstab
