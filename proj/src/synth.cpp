#include "epidenet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "epidenet/rng.hpp"

namespace epidenet {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEdgeMargin_s = 30.0;  // keep seizures away from record edges
constexpr double kEventGap_s = 20.0;    // minimum spacing between seizures

// Pink (1/f) noise: white Gaussian through the classic Kellet IIR cascade.
std::vector<double> pink_noise(int64_t n, Rng& rng) {
  std::vector<double> out(static_cast<size_t>(n));
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double white = rng.normal();
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    const double pink = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
    b6 = white * 0.115926;
    out[static_cast<size_t>(i)] = pink;
  }
  return out;
}

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// 3 Hz spike-wave: fundamental plus decaying harmonics, which gives the
// sharp-transient-plus-slow-wave morphology. Unit-amplitude shape; overall
// RMS is normalized by the caller.
double spike_wave(double t) {
  double v = 0.0;
  for (int h = 1; h <= 5; ++h) {
    v += std::sin(2.0 * kPi * 3.0 * h * t + 0.3 * h) / h;
  }
  return v;
}

// Raised-cosine onset/offset envelope, 1 s ramps.
double burst_envelope(double t, double start, double end) {
  const double ramp = 1.0;
  if (t < start || t > end) return 0.0;
  if (t < start + ramp) return 0.5 * (1.0 - std::cos(kPi * (t - start) / ramp));
  if (t > end - ramp) return 0.5 * (1.0 - std::cos(kPi * (end - t) / ramp));
  return 1.0;
}

EventList place_events(int count, double duration_s, double dur_min, double dur_max, Rng& rng) {
  EventList events;
  if (count == 0) return events;
  std::vector<double> lengths(static_cast<size_t>(count));
  double total = 0.0;
  for (auto& d : lengths) {
    d = std::floor(rng.uniform(dur_min, dur_max + 1.0));
    d = std::clamp(d, dur_min, dur_max);
    total += d;
  }
  const double usable = duration_s - 2.0 * kEdgeMargin_s - (count - 1) * kEventGap_s;
  const double slack = usable - total;
  if (slack < 0.0) {
    throw DataError("synthetic record of " + std::to_string(duration_s) + "s cannot place " +
                    std::to_string(count) + " seizures without overlap");
  }
  // Split the slack into count+1 gaps with random proportions.
  std::vector<double> weights(static_cast<size_t>(count) + 1);
  double wsum = 0.0;
  for (auto& w : weights) {
    w = rng.uniform() + 0.05;
    wsum += w;
  }
  double cursor = kEdgeMargin_s;
  for (int i = 0; i < count; ++i) {
    cursor += slack * weights[static_cast<size_t>(i)] / wsum;
    const double start = std::floor(cursor);
    const double end = start + lengths[static_cast<size_t>(i)];
    events.emplace_back(start, end);
    cursor = end + kEventGap_s;
  }
  return events;
}

}  // namespace

void validate_synth_spec(const SynthSpec& spec) {
  if (spec.subjects < 1 || spec.records_per_subject < 1) {
    throw ConfigError("synth: subjects and records_per_subject must be >= 1");
  }
  if (!(spec.record_seconds >= 10.0)) {
    throw ConfigError("synth: record_seconds must be >= 10");
  }
  if (spec.sample_rate_hz < 1) throw ConfigError("synth: sample_rate_hz must be >= 1");
  if (spec.channel_labels.empty()) throw ConfigError("synth: need at least one channel label");
  if (!(spec.snr >= 0.0)) throw ConfigError("synth: snr must be non-negative");
  if (!(spec.background_rms_uv > 0.0)) throw ConfigError("synth: background_rms_uv must be > 0");
  if (spec.seizures_min < 0 || spec.seizures_max < spec.seizures_min) {
    throw ConfigError("synth: invalid seizure count range");
  }
  for (int c : spec.seizures_per_record) {
    if (c < 0) throw ConfigError("synth: negative seizure count");
  }
  if (!(spec.seizure_duration_min_s > 2.0) ||
      spec.seizure_duration_max_s < spec.seizure_duration_min_s) {
    throw ConfigError("synth: invalid seizure duration range");
  }
}

std::vector<RecordSet> synth_dataset(const SynthSpec& spec) {
  validate_synth_spec(spec);
  std::vector<RecordSet> out;
  const int64_t n = static_cast<int64_t>(std::llround(spec.record_seconds * spec.sample_rate_hz));

  for (int s = 0; s < spec.subjects; ++s) {
    RecordSet set;
    char sid[16];
    std::snprintf(sid, sizeof(sid), "s%02d", s);
    set.subject_id = sid;

    for (int r = 0; r < spec.records_per_subject; ++r) {
      const uint64_t rec_seed =
          Rng::child_seed(spec.seed, static_cast<uint64_t>(s), static_cast<uint64_t>(r));
      Rng rec_rng(rec_seed);

      int count;
      if (!spec.seizures_per_record.empty()) {
        count = spec.seizures_per_record[static_cast<size_t>(r) % spec.seizures_per_record.size()];
      } else if (spec.seizures_max == spec.seizures_min) {
        count = spec.seizures_min;
      } else {
        count = spec.seizures_min +
                static_cast<int>(rec_rng.uniform_int(
                    static_cast<uint64_t>(spec.seizures_max - spec.seizures_min + 1)));
      }

      Recording rec;
      char rid[32];
      std::snprintf(rid, sizeof(rid), "%s_r%02d", sid, r);
      rec.record_id = rid;
      rec.sample_rate_hz = spec.sample_rate_hz;
      rec.duration_s = static_cast<double>(n) / spec.sample_rate_hz;
      rec.seizure_events = place_events(count, rec.duration_s, spec.seizure_duration_min_s,
                                        spec.seizure_duration_max_s, rec_rng);

      const double burst_rms_target = spec.snr * spec.background_rms_uv;
      // Shared burst waveform so seizures are synchronized across channels.
      std::vector<double> burst(static_cast<size_t>(n), 0.0);
      if (!rec.seizure_events.empty() && spec.snr > 0.0) {
        double shape_rms = 0.0;
        for (int h = 1; h <= 5; ++h) shape_rms += 1.0 / (h * h);
        shape_rms = std::sqrt(shape_rms / 2.0);
        const double amp = burst_rms_target / shape_rms;
        for (const auto& [es, ee] : rec.seizure_events) {
          const int64_t i0 = static_cast<int64_t>(es * spec.sample_rate_hz);
          const int64_t i1 = std::min<int64_t>(n, static_cast<int64_t>(ee * spec.sample_rate_hz));
          for (int64_t i = i0; i < i1; ++i) {
            const double t = static_cast<double>(i) / spec.sample_rate_hz;
            burst[static_cast<size_t>(i)] = amp * spike_wave(t - es) * burst_envelope(t, es, ee);
          }
        }
      }

      for (size_t c = 0; c < spec.channel_labels.size(); ++c) {
        Rng ch_rng(Rng::child_seed(rec_seed, 0x100 + c));
        std::vector<double> noise = pink_noise(n, ch_rng);
        const double scale = spec.background_rms_uv / rms(noise);
        Channel ch;
        ch.label = spec.channel_labels[c];
        ch.samples.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
          ch.samples[static_cast<size_t>(i)] =
              noise[static_cast<size_t>(i)] * scale + burst[static_cast<size_t>(i)];
        }
        rec.channels.push_back(std::move(ch));
      }

      validate_recording(rec);
      set.records.push_back(std::move(rec));
    }
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace epidenet
