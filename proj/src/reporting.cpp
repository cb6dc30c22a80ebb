#include "epidenet/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "epidenet/io_util.hpp"

namespace epidenet {

namespace {

bool contains_zero(const std::vector<double>& grid) {
  return std::any_of(grid.begin(), grid.end(), [](double v) { return v == 0.0; });
}

EvalReport seed_level_report(const LoocvResult& r, int rep, bool smoothed) {
  std::vector<EvalReport> per_fold;
  const int seeds = r.plan.repetitions;
  for (size_t i = 0; i < r.cells.size(); ++i) {
    const auto& cell = r.cells[i];
    if (cell.rep != rep || cell.failed) continue;
    per_fold.push_back(smoothed ? cell.smoothed : cell.raw);
  }
  (void)seeds;
  if (per_fold.empty()) throw Error("no successful cells for repetition " + std::to_string(rep));
  return aggregate_folds(per_fold);
}

}  // namespace

SubjectOutcome run_subject(const RecordSet& set, const LoocvRunSpec& spec) {
  SubjectOutcome out;
  out.subject_id = set.subject_id;

  if (spec.alpha_grid.empty() != spec.beta_grid.empty()) {
    throw ConfigError("grid search needs both alpha and beta candidate lists");
  }

  if (spec.alpha_grid.empty()) {
    out.alpha = spec.train.loss.alpha;
    out.beta = spec.train.loss.beta;
    out.result = run_loocv(set, spec.model, spec.train, spec.loocv);
    return out;
  }

  if (spec.select == GridSelect::bounded_fph &&
      (!contains_zero(spec.alpha_grid) || !contains_zero(spec.beta_grid))) {
    throw ConfigError(
        "bounded-fph grid selection needs the (0,0) cross-entropy cell in the grid");
  }

  std::vector<GridRun> runs(spec.alpha_grid.size() * spec.beta_grid.size());
  std::mutex mu;

  auto train_fn = [&](double alpha, double beta) {
    TrainConfig tc = spec.train;
    tc.loss.alpha = alpha;
    tc.loss.beta = beta;
    const LoocvResult r = run_loocv(set, spec.model, tc, spec.loocv);
    GridCell cell;
    cell.report = r.aggregate_smoothed;
    for (int rep = 0; rep < spec.loocv.seeds; ++rep) {
      cell.seed_reports.push_back(seed_level_report(r, rep, true));
    }
    {
      std::lock_guard<std::mutex> lock(mu);
      const size_t ai = static_cast<size_t>(
          std::find(spec.alpha_grid.begin(), spec.alpha_grid.end(), alpha) -
          spec.alpha_grid.begin());
      const size_t bi = static_cast<size_t>(
          std::find(spec.beta_grid.begin(), spec.beta_grid.end(), beta) - spec.beta_grid.begin());
      runs[ai * spec.beta_grid.size() + bi] = GridRun{alpha, beta, r};
    }
    return cell;
  };

  GridMetricFn metric;
  switch (spec.select) {
    case GridSelect::sensitivity:
      metric = metric_sensitivity;
      break;
    case GridSelect::sensitivity_at_spec:
      metric = metric_sensitivity_at_specificity(spec.spec_floor_pct);
      break;
    case GridSelect::bounded_fph: {
      // Gate on the cross-entropy cell's smoothed FP/h; run it first so the
      // bound exists, then let the search rerun it from the stored results.
      const GridCell ce_cell = train_fn(0.0, 0.0);
      metric = metric_sensitivity_bounded_fph(ce_cell.report.event.fp_per_hour);
      break;
    }
  }

  auto cached_train_fn = [&](double alpha, double beta) -> GridCell {
    {
      std::lock_guard<std::mutex> lock(mu);
      for (const auto& run : runs) {
        if (run.alpha == alpha && run.beta == beta && !run.loocv.cells.empty()) {
          GridCell cell;
          cell.report = run.loocv.aggregate_smoothed;
          for (int rep = 0; rep < spec.loocv.seeds; ++rep) {
            cell.seed_reports.push_back(seed_level_report(run.loocv, rep, true));
          }
          return cell;
        }
      }
    }
    return train_fn(alpha, beta);
  };

  out.grid = grid_search(cached_train_fn, spec.alpha_grid, spec.beta_grid, metric,
                         spec.grid_threads);
  out.alpha = out.grid->best_alpha;
  out.beta = out.grid->best_beta;
  out.grid_runs = runs;

  for (const auto& run : runs) {
    if (run.alpha == out.alpha && run.beta == out.beta) out.result = run.loocv;
    if (run.alpha == 0.0 && run.beta == 0.0 && !run.loocv.cells.empty()) {
      out.baseline = run.loocv;
    }
  }
  return out;
}

std::string runs_csv_header() {
  return "subject,fold,held_out,rep,seed,alpha,beta,smoothing,tp,fp,tn,fn,"
         "sensitivity_pct,specificity_pct,fp_per_hour,fp_runs,detected,total\n";
}

std::string runs_csv(const std::string& subject_id, double alpha, double beta,
                     const LoocvResult& result) {
  std::ostringstream os;
  auto row = [&](const CellResult& cell, const EvalReport& r, const char* mode) {
    os << subject_id << ',' << cell.fold << ',' << cell.held_out << ',' << cell.rep << ','
       << cell.seed << ',' << format_fixed(alpha, 4) << ',' << format_fixed(beta, 4) << ','
       << mode << ',' << format_fixed(r.window.tp, 1) << ',' << format_fixed(r.window.fp, 1)
       << ',' << format_fixed(r.window.tn, 1) << ',' << format_fixed(r.window.fn, 1) << ','
       << (r.window.sensitivity_defined ? format_fixed(r.window.sensitivity_pct, 6) : "undefined")
       << ','
       << (r.window.specificity_defined ? format_fixed(r.window.specificity_pct, 6) : "undefined")
       << ',' << format_fixed(r.event.fp_per_hour, 6) << ',' << format_fixed(r.event.fp_runs, 1)
       << ',' << format_fixed(r.event.detected, 1) << ',' << format_fixed(r.event.total, 1)
       << '\n';
  };
  for (const auto& cell : result.cells) {
    if (cell.failed) {
      os << subject_id << ',' << cell.fold << ',' << cell.held_out << ',' << cell.rep
         << ",,,,failed,,,,,,,,,,\n";
      continue;
    }
    row(cell, cell.raw, "raw");
    row(cell, cell.smoothed, "smoothed");
  }
  return os.str();
}

std::string grid_csv(const std::vector<GridRun>& runs) {
  std::ostringstream os;
  os << "alpha,beta,seed,sensitivity,specificity,fp_per_hour,detected_events,total_events\n";
  for (const auto& run : runs) {
    if (run.loocv.cells.empty()) continue;  // cell failed before producing results
    const int seeds = run.loocv.plan.repetitions;
    for (int rep = 0; rep < seeds; ++rep) {
      EvalReport r;
      try {
        r = seed_level_report(run.loocv, rep, true);
      } catch (const Error&) {
        continue;
      }
      os << format_fixed(run.alpha, 4) << ',' << format_fixed(run.beta, 4) << ',' << rep << ','
         << (r.window.sensitivity_defined ? format_fixed(r.window.sensitivity_pct, 6)
                                          : "undefined")
         << ','
         << (r.window.specificity_defined ? format_fixed(r.window.specificity_pct, 6)
                                          : "undefined")
         << ',' << format_fixed(r.event.fp_per_hour, 6) << ',' << format_fixed(r.event.detected, 1)
         << ',' << format_fixed(r.event.total, 1) << '\n';
    }
  }
  return os.str();
}

std::string format_detected(double detected, double total) {
  auto fmt = [](double v) {
    if (std::abs(v - std::round(v)) < 1e-9) return std::to_string(static_cast<long long>(std::llround(v)));
    return format_fixed(v, 1);
  };
  return fmt(detected) + "/" + fmt(total);
}

namespace {

std::string table_line(const std::string& label, const EvalReport& raw, const EvalReport& smooth) {
  std::ostringstream os;
  os << label << "  Sens " << format_fixed(raw.window.sensitivity_pct, 2) << "% ("
     << format_fixed(smooth.window.sensitivity_pct, 2) << "%)  Spec "
     << format_fixed(raw.window.specificity_pct, 2) << "% ("
     << format_fixed(smooth.window.specificity_pct, 2) << "%)  FP/h "
     << format_fixed(raw.event.fp_per_hour, 2) << " (" << format_fixed(smooth.event.fp_per_hour, 2)
     << ")  Detected " << format_detected(raw.event.detected, raw.event.total) << " ("
     << format_detected(smooth.event.detected, smooth.event.total) << ")";
  return os.str();
}

}  // namespace

std::string aggregate_table(const SubjectOutcome& outcome) {
  std::ostringstream os;
  os << "subject " << outcome.subject_id << "  (raw values, smoothed in parentheses)\n";
  if (outcome.baseline) {
    os << table_line("  ce-baseline    alpha=0 beta=0        ", outcome.baseline->aggregate_raw,
                     outcome.baseline->aggregate_smoothed)
       << "\n";
  }
  std::ostringstream label;
  label << "  selected       alpha=" << format_fixed(outcome.alpha, 2)
        << " beta=" << format_fixed(outcome.beta, 2);
  os << table_line(label.str(), outcome.result.aggregate_raw, outcome.result.aggregate_smoothed)
     << "\n";
  return os.str();
}

}  // namespace epidenet
