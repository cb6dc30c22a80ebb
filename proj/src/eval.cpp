#include "epidenet/eval.hpp"

#include <algorithm>
#include <cmath>

namespace epidenet {

std::vector<uint8_t> majority_smooth(const std::vector<uint8_t>& raw) {
  std::vector<uint8_t> out(raw.size(), 0);
  for (size_t i = 0; i < raw.size(); ++i) {
    int votes = raw[i] ? 1 : 0;
    if (i >= 1 && raw[i - 1]) ++votes;
    if (i >= 2 && raw[i - 2]) ++votes;
    out[i] = votes >= 2 ? 1 : 0;
  }
  return out;
}

WindowCounts window_metrics(std::span<const uint8_t> predicted, std::span<const uint8_t> truth) {
  if (predicted.size() != truth.size()) {
    throw DataError("window_metrics: prediction count " + std::to_string(predicted.size()) +
                    " != label count " + std::to_string(truth.size()));
  }
  WindowCounts c;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (truth[i]) {
      (predicted[i] ? c.tp : c.fn) += 1.0;
    } else {
      (predicted[i] ? c.fp : c.tn) += 1.0;
    }
  }
  if (c.tp + c.fn > 0) {
    c.sensitivity_defined = true;
    c.sensitivity_pct = 100.0 * c.tp / (c.tp + c.fn);
  }
  if (c.tn + c.fp > 0) {
    c.specificity_defined = true;
    c.specificity_pct = 100.0 * c.tn / (c.tn + c.fp);
  }
  return c;
}

namespace {

bool overlaps(double a_start, double a_end, double b_start, double b_end) {
  return std::min(a_end, b_end) > std::max(a_start, b_start);
}

void validate_events(const EventList& events) {
  double prev_end = -1.0;
  for (const auto& [s, e] : events) {
    if (!(s < e) || s < 0.0) {
      throw DataError("event_metrics: invalid event (" + std::to_string(s) + ", " +
                      std::to_string(e) + ")");
    }
    if (s < prev_end) {
      throw DataError("event_metrics: events must be sorted and non-overlapping");
    }
    prev_end = e;
  }
}

}  // namespace

EventOutcome event_metrics(const PredictionTrack& track, const EventList& events,
                           double tolerance_s, bool use_smoothed, RunContinuation* continuation) {
  if (!(track.duration_h > 0.0)) {
    throw DataError("event_metrics: track duration must be positive");
  }
  if (use_smoothed && !track.smoothed_labels.has_value()) {
    throw DataError("event_metrics: no smoothed labels on track " + track.record_id);
  }
  validate_events(events);
  const std::vector<uint8_t>& labels =
      use_smoothed ? *track.smoothed_labels : track.raw_labels;
  if (labels.size() != track.window_starts_s.size()) {
    throw DataError("event_metrics: label count does not match window count");
  }

  const double win_len = track.window_length();
  std::vector<uint8_t> detected(events.size(), 0);

  EventOutcome out;
  out.total = static_cast<double>(events.size());

  bool in_run = continuation ? continuation->in_fp_run : false;
  int runs = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const double ws = track.window_starts_s[i];
    const double we = ws + win_len;
    bool on_event = false;
    for (size_t j = 0; j < events.size(); ++j) {
      if (overlaps(ws, we, events[j].first - tolerance_s, events[j].second + tolerance_s)) {
        on_event = true;
        if (labels[i]) detected[j] = 1;
      }
    }
    const bool fp_window = labels[i] && !on_event;
    if (fp_window && !in_run) ++runs;
    in_run = fp_window;
  }
  if (continuation) continuation->in_fp_run = in_run;

  out.fp_runs = runs;
  out.fp_per_hour = runs / track.duration_h;
  for (uint8_t d : detected) out.detected += d;
  return out;
}

namespace {

void check_uniform_smoothing(std::span<const EvalReport> reports) {
  if (reports.empty()) throw DataError("aggregate: need at least one report");
  for (const auto& r : reports) {
    if (r.smoothed != reports.front().smoothed) {
      throw DataError("aggregate: cannot mix smoothed and unsmoothed reports");
    }
  }
}

EvalReport mean_metrics(std::span<const EvalReport> reports) {
  EvalReport agg;
  agg.smoothed = reports.front().smoothed;
  const double n = static_cast<double>(reports.size());
  double sens_sum = 0, spec_sum = 0;
  int sens_n = 0, spec_n = 0;
  for (const auto& r : reports) {
    agg.window.tp += r.window.tp / n;
    agg.window.fp += r.window.fp / n;
    agg.window.tn += r.window.tn / n;
    agg.window.fn += r.window.fn / n;
    if (r.window.sensitivity_defined) {
      sens_sum += r.window.sensitivity_pct;
      ++sens_n;
    }
    if (r.window.specificity_defined) {
      spec_sum += r.window.specificity_pct;
      ++spec_n;
    }
    agg.event.fp_per_hour += r.event.fp_per_hour / n;
    agg.event.fp_runs += r.event.fp_runs / n;
    for (const auto& id : r.record_ids) {
      if (std::find(agg.record_ids.begin(), agg.record_ids.end(), id) == agg.record_ids.end()) {
        agg.record_ids.push_back(id);
      }
    }
  }
  if (sens_n > 0) {
    agg.window.sensitivity_defined = true;
    agg.window.sensitivity_pct = sens_sum / sens_n;
  }
  if (spec_n > 0) {
    agg.window.specificity_defined = true;
    agg.window.specificity_pct = spec_sum / spec_n;
  }
  return agg;
}

}  // namespace

EvalReport aggregate_mean(std::span<const EvalReport> reports) {
  check_uniform_smoothing(reports);
  EvalReport agg = mean_metrics(reports);
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    agg.event.detected += r.event.detected / n;
    agg.event.total += r.event.total / n;
  }
  return agg;
}

EvalReport aggregate_folds(std::span<const EvalReport> reports) {
  check_uniform_smoothing(reports);
  EvalReport agg = mean_metrics(reports);
  for (const auto& r : reports) {
    agg.event.detected += r.event.detected;
    agg.event.total += r.event.total;
  }
  return agg;
}

}  // namespace epidenet
