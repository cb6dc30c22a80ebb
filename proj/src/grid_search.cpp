#include "epidenet/grid_search.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "epidenet/errors.hpp"

namespace epidenet {

GridSearchResult grid_search(const GridTrainFn& train_fn, const std::vector<double>& alphas,
                             const std::vector<double>& betas, const GridMetricFn& metric,
                             int threads) {
  if (alphas.empty() || betas.empty()) {
    throw ConfigError("grid_search: candidate grids must be non-empty");
  }
  GridSearchResult result;
  result.cells.resize(alphas.size() * betas.size());

  const int total = static_cast<int>(result.cells.size());
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= total) break;
      const double a = alphas[static_cast<size_t>(i) / betas.size()];
      const double b = betas[static_cast<size_t>(i) % betas.size()];
      GridCell& cell = result.cells[static_cast<size_t>(i)];
      try {
        cell = train_fn(a, b);
        cell.alpha = a;
        cell.beta = b;
      } catch (const std::exception& e) {
        cell.alpha = a;
        cell.beta = b;
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };
  const int nthreads = std::max(1, std::min(threads, total));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  bool found = false;
  double best_metric = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < result.cells.size(); ++i) {
    const GridCell& c = result.cells[i];
    if (c.failed) continue;
    const double m = metric(c.report);
    bool better = false;
    if (!found || m > best_metric) {
      better = true;
    } else if (m == best_metric) {
      const GridCell& cur = result.cells[result.best_index];
      if (c.report.event.fp_per_hour < cur.report.event.fp_per_hour) {
        better = true;
      } else if (c.report.event.fp_per_hour == cur.report.event.fp_per_hour) {
        const double s_new = c.report.window.sensitivity_pct;
        const double s_cur = cur.report.window.sensitivity_pct;
        if (s_new > s_cur) {
          better = true;
        } else if (s_new == s_cur && c.alpha + c.beta < cur.alpha + cur.beta) {
          better = true;
        }
      }
    }
    if (better) {
      found = true;
      best_metric = m;
      result.best_index = i;
    }
  }
  if (!found) {
    std::string detail;
    for (const auto& c : result.cells) {
      detail += "\n  alpha=" + std::to_string(c.alpha) + " beta=" + std::to_string(c.beta) + ": " +
                c.error;
    }
    throw Error("grid_search: every cell failed:" + detail);
  }
  result.best_alpha = result.cells[result.best_index].alpha;
  result.best_beta = result.cells[result.best_index].beta;
  return result;
}

double metric_sensitivity(const EvalReport& r) {
  return r.window.sensitivity_defined ? r.window.sensitivity_pct
                                      : -std::numeric_limits<double>::infinity();
}

GridMetricFn metric_sensitivity_at_specificity(double min_spec_pct) {
  return [min_spec_pct](const EvalReport& r) {
    if (!r.window.specificity_defined || r.window.specificity_pct < min_spec_pct) {
      return -std::numeric_limits<double>::infinity();
    }
    return metric_sensitivity(r);
  };
}

GridMetricFn metric_sensitivity_bounded_fph(double max_fp_per_hour) {
  return [max_fp_per_hour](const EvalReport& r) {
    if (r.event.fp_per_hour > max_fp_per_hour + 1e-12) {
      return -std::numeric_limits<double>::infinity();
    }
    return metric_sensitivity(r);
  };
}

}  // namespace epidenet
