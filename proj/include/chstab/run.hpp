#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chstab/config.hpp"
#include "chstab/dynamics.hpp"

namespace chstab {

/// One row of timeseries.csv. For controlled runs z = w - w_r; free runs have
/// no reference, so the norm columns hold the norms of w itself.
struct SeriesRow {
  double t = 0.0;
  double norm_z = 0.0;   // ||z||_{H x H}
  double norm_z1 = 0.0;  // ||z_1||_H
  double norm_z2 = 0.0;  // ||z_2||_H
  double energy = 0.0;   // free energy of the (controlled) state, rho = 1
  double mass = 0.0;     // 1^T M w_1
  double input_l2 = 0.0; // |(u, v)| in R^{M_sigma + M_varsigma}
};

struct InputRow {
  double t = 0.0;
  Vector order;  // u
  Vector heat;   // v
};

struct Snapshot {
  long step = 0;
  SimState state;
};

struct RunRecord {
  RunConfig config;
  std::vector<SeriesRow> series;  // t = 0 first, then one row per step
  std::vector<InputRow> inputs;   // controlled runs only, one row per step
  std::vector<Snapshot> snapshots;
  SimState final_state;
  std::optional<std::string> warning;  // scheme warning, if any
  std::optional<std::string> error;    // set when the run aborted
};

/// Builds the actuators and gains for a controlled config.
std::shared_ptr<const FeedbackSetup> make_feedback(const RunConfig& cfg, const GridOperators& ops);

/// Runs one config. Controlled runs co-simulate the free reference trajectory
/// from the reference initial state. Errors propagate as exceptions.
RunRecord run(const RunConfig& cfg);

struct BatchResult {
  RunRecord reference;              // free run from the reference initial state
  std::vector<RunRecord> controlled;
};

using Progress = std::function<void(long step, long total)>;

/// Runs several controlled configs against one shared reference trajectory.
/// All configs must agree on grid, physics and scheme. A failing run stores
/// its error in the record and stops; the others continue.
BatchResult run_batch(const std::vector<RunConfig>& configs, const Progress& progress = nullptr);

/// Writes config.copy, timeseries.csv, inputs.csv, snapshots/stepNNNNNN.csv
/// and, for controlled runs, layout.txt into `dir` (created if needed).
void write_run(const RunRecord& record, const GridOperators& ops, const std::filesystem::path& dir);

/// Reads back the timeseries.csv columns.
std::vector<SeriesRow> read_timeseries(const std::filesystem::path& csv);

}  // namespace chstab
