#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epidenet/dataio.hpp"

namespace epidenet {

// Desk-scale synthetic EEG: 1/f background noise per channel plus additive
// 3 Hz spike-wave bursts, synchronized across channels, with the burst RMS
// set to snr times the background RMS. Fully deterministic per seed; every
// record draws its own child seed so parallel generation equals sequential.
struct SynthSpec {
  int subjects = 1;
  int records_per_subject = 4;
  double record_seconds = 1800.0;
  int sample_rate_hz = 256;
  std::vector<std::string> channel_labels = {"F7-T7", "T7-P7", "F8-T8", "T8-P8"};

  // Per-record seizure counts; when empty, each record draws uniformly from
  // [seizures_min, seizures_max]. Cycled when shorter than the record count.
  std::vector<int> seizures_per_record;
  int seizures_min = 1;
  int seizures_max = 2;

  double seizure_duration_min_s = 30.0;
  double seizure_duration_max_s = 60.0;
  double snr = 2.0;
  double background_rms_uv = 30.0;
  uint64_t seed = 0;
};

void validate_synth_spec(const SynthSpec& spec);

std::vector<RecordSet> synth_dataset(const SynthSpec& spec);

}  // namespace epidenet
