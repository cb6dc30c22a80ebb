#pragma once

#include <optional>
#include <string>
#include <vector>

#include "epidenet/grid_search.hpp"
#include "epidenet/trainer.hpp"

// Shared between the CLI and the acceptance suite: the subject-level run
// driver (fixed loss or alpha/beta grid search over full LOOCV) and the
// deterministic CSV / table serializations. Output never embeds timing, so
// identical configs reproduce identical bytes.

namespace epidenet {

enum class GridSelect { bounded_fph, sensitivity, sensitivity_at_spec };

struct LoocvRunSpec {
  ModelConfig model;
  TrainConfig train;
  LoocvOptions loocv;
  std::vector<double> alpha_grid;  // empty -> fixed loss from train.loss
  std::vector<double> beta_grid;
  GridSelect select = GridSelect::bounded_fph;
  double spec_floor_pct = 99.0;    // for sensitivity_at_spec
  int grid_threads = 1;
};

struct GridRun {
  double alpha = 0.0;
  double beta = 0.0;
  LoocvResult loocv;
};

struct SubjectOutcome {
  std::string subject_id;
  double alpha = 0.0;
  double beta = 0.0;
  LoocvResult result;                      // selected cell (or the fixed-loss run)
  std::optional<LoocvResult> baseline;     // the (0,0) CE cell when a grid ran
  std::optional<GridSearchResult> grid;
  std::vector<GridRun> grid_runs;          // full per-cell results, alpha-major
};

// Runs LOOCV for one subject. With a grid, every cell runs the full fold x
// seed protocol on the same derived seeds; the winning cell is chosen by the
// configured selection metric (bounded_fph gates on the (0,0) cell's FP/h,
// which therefore must be present in the grid).
SubjectOutcome run_subject(const RecordSet& set, const LoocvRunSpec& spec);

// One row per fold x seed x {raw, smoothed}.
std::string runs_csv(const std::string& subject_id, double alpha, double beta,
                     const LoocvResult& result);
std::string runs_csv_header();

// One row per (alpha, beta, seed repetition): fold-aggregated smoothed
// metrics, the basis for grid selection.
std::string grid_csv(const std::vector<GridRun>& runs);

// Table rows in "raw (smoothed)" form.
std::string aggregate_table(const SubjectOutcome& outcome);

std::string format_detected(double detected, double total);

}  // namespace epidenet
