#pragma once

#include <functional>
#include <string>
#include <vector>

#include "epidenet/eval.hpp"

namespace epidenet {

// Default candidate grid for the loss weights: log-ish coverage around the
// plain cross-entropy baseline (alpha = beta = 0).
inline std::vector<double> default_loss_weight_grid() { return {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}; }

struct GridCell {
  double alpha = 0.0;
  double beta = 0.0;
  EvalReport report;                    // aggregate for the cell
  std::vector<EvalReport> seed_reports; // one per seed, fold-averaged
  bool failed = false;
  std::string error;
};

struct GridSearchResult {
  std::vector<GridCell> cells;  // alpha-major order
  size_t best_index = 0;
  double best_alpha = 0.0;
  double best_beta = 0.0;
};

using GridTrainFn = std::function<GridCell(double alpha, double beta)>;
using GridMetricFn = std::function<double(const EvalReport&)>;

// Runs train_fn over the full alpha x beta grid and returns the cell that
// maximizes the selection metric. Ties break by lower FP/h, then higher
// sensitivity, then smaller alpha+beta. Cells may be evaluated in parallel
// (threads > 1); results are position-stable so the outcome is order
// independent. Throws when every cell fails.
GridSearchResult grid_search(const GridTrainFn& train_fn, const std::vector<double>& alphas,
                             const std::vector<double>& betas, const GridMetricFn& metric,
                             int threads = 1);

// Selection metrics.
double metric_sensitivity(const EvalReport& r);

// Sensitivity, gated on a specificity floor (report must reach min_spec_pct
// or the cell scores -infinity).
GridMetricFn metric_sensitivity_at_specificity(double min_spec_pct);

// Sensitivity, gated on FP/h not exceeding a baseline value.
GridMetricFn metric_sensitivity_bounded_fph(double max_fp_per_hour);

}  // namespace epidenet
