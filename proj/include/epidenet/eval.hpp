#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "epidenet/errors.hpp"

// Window- and event-level scoring: sensitivity, specificity, false-positive
// events per hour, detected-seizure tallies, and the causal three-window
// majority smoothing.

namespace epidenet {

using EventList = std::vector<std::pair<double, double>>;  // (start_s, end_s)

struct PredictionTrack {
  std::string record_id;
  std::vector<double> window_starts_s;  // strictly increasing, constant hop
  std::vector<uint8_t> raw_labels;      // one binary label per window
  std::optional<std::vector<uint8_t>> smoothed_labels;
  double hop_s = 0.0;
  double window_len_s = 0.0;  // 0 means "equal to hop_s"
  double duration_h = 0.0;

  double window_length() const { return window_len_s > 0.0 ? window_len_s : hop_s; }
};

// Causal vote over the trailing three windows: output 1 iff at least two of
// the available votes are positive. The first window can never fire (one
// vote) and a 1-of-2 prefix tie resolves to 0, favoring specificity.
std::vector<uint8_t> majority_smooth(const std::vector<uint8_t>& raw);

struct WindowCounts {
  double tp = 0, fp = 0, tn = 0, fn = 0;
  double sensitivity_pct = 0.0;
  double specificity_pct = 0.0;
  bool sensitivity_defined = false;
  bool specificity_defined = false;
};

WindowCounts window_metrics(std::span<const uint8_t> predicted, std::span<const uint8_t> truth);

struct EventOutcome {
  double fp_per_hour = 0.0;
  double detected = 0.0;  // fractional after seed averaging
  double total = 0.0;
  double fp_runs = 0.0;
};

// Carries an open false-positive run across contiguous track chunks.
struct RunContinuation {
  bool in_fp_run = false;
};

// A true event counts as detected iff at least one positive window overlaps
// the event extended by tolerance_s on both sides. Positive windows that
// overlap no extended event are grouped into maximal consecutive runs; each
// run is one false-positive event and fp_per_hour = runs / duration_h.
EventOutcome event_metrics(const PredictionTrack& track, const EventList& events,
                           double tolerance_s, bool use_smoothed = false,
                           RunContinuation* continuation = nullptr);

struct EvalReport {
  WindowCounts window;
  EventOutcome event;
  std::vector<std::string> record_ids;
  uint64_t seed = 0;
  bool smoothed = false;
};

// Mean of every metric (tallies included); used across seeds within a fold.
EvalReport aggregate_mean(std::span<const EvalReport> reports);

// Mean of rates/percentages, sum of detected/total tallies; used across
// folds (and subjects) to get "165/181"-style counts.
EvalReport aggregate_folds(std::span<const EvalReport> reports);

}  // namespace epidenet
