#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "epidenet/errors.hpp"
#include "epidenet/eval.hpp"  // EventList
#include "epidenet/tensor.hpp"

namespace epidenet {

struct Channel {
  std::string label;
  std::vector<double> samples;  // physical units (microvolts)
};

struct Recording {
  std::string record_id;
  int sample_rate_hz = 0;
  std::vector<Channel> channels;
  EventList seizure_events;  // (start_s, end_s), sorted, non-overlapping
  double duration_s = 0.0;

  int64_t sample_count() const {
    return channels.empty() ? 0 : static_cast<int64_t>(channels.front().samples.size());
  }
  bool has_seizures() const { return !seizure_events.empty(); }
};

// Checks the Recording invariants: equal channel lengths, duration matching
// the sample count, and valid sorted events. Throws DataError.
void validate_recording(const Recording& rec);

struct LabeledWindow {
  Tensor data;  // (C, T) float32, physical units
  int label = 0;
  std::string record_id;
  double start_s = 0.0;
};

struct RecordSet {
  std::string subject_id;
  std::vector<Recording> records;

  double total_hours() const;
  std::vector<std::string> seizure_record_ids() const;
};

// --- EDF ---------------------------------------------------------------

// Parses a 16-bit EDF byte stream. Annotation channels are dropped. The
// record_id argument names the recording (EDF itself carries none usable);
// seizure events are attached separately from the summary file.
Recording parse_edf(std::span<const uint8_t> bytes, const std::string& record_id);
Recording parse_edf_file(const std::filesystem::path& path);

// Writes a Recording as 16-bit EDF, one data record per second. Physical
// ranges are taken per channel from the data. Requires a whole-second
// duration.
std::vector<uint8_t> write_edf(const Recording& rec);
void write_edf_file(const Recording& rec, const std::filesystem::path& path);

// --- CHB-MIT style summary ----------------------------------------------

// Parses the "summary" annotation layout: per-file stanzas with
// "File Name:", "Number of Seizures in File:" and seizure start/end lines
// in seconds. Every listed file maps to its (possibly empty) event list.
std::map<std::string, EventList> parse_chbmit_summary(const std::string& text);

// --- Channel selection / decimation / windowing -------------------------

// Returns a recording with exactly the wanted channels in the given order.
// Labels are matched case-insensitively with whitespace stripped.
Recording select_channels(const Recording& rec, const std::vector<std::string>& wanted_labels);

// The anti-alias FIR used by decimate(): Hamming-windowed sinc, passband
// edge at 0.8x the post-decimation Nyquist, stopband at the new Nyquist.
// Taps sum to exactly 1 (DC preserved).
std::vector<double> decimation_filter_taps(int factor);

// Zero-phase low-pass (centered symmetric FIR, zero-padded edges) followed
// by keeping every factor-th sample. factor 1 is the identity. Event
// timestamps are untouched; they live in seconds.
Recording decimate(const Recording& rec, int factor);

struct LabelRule {
  double min_overlap = 0.5;  // fraction of the window
};

// Cuts (window_s, stride_s) windows; the trailing partial window is dropped.
// A window gets label 1 iff some seizure event overlaps it by at least
// min_overlap * window_s seconds.
std::vector<LabeledWindow> windowize(const Recording& rec, double window_s, double stride_s,
                                     const LabelRule& rule = {});

// --- Window cache --------------------------------------------------------

// Flat binary cache: header with shape and record-id table, then per window
// record index, start offset, label byte and the little-endian float32 C*T
// payload. Round-trips bit-exactly.
void save_window_cache(const std::filesystem::path& path,
                       std::span<const LabeledWindow> windows);
std::vector<LabeledWindow> load_window_cache(const std::filesystem::path& path);

}  // namespace epidenet
