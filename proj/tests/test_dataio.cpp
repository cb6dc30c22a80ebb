#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "epidenet/dataio.hpp"
#include "epidenet/io_util.hpp"
#include "epidenet/rng.hpp"
#include "epidenet/synth.hpp"

using namespace epidenet;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent EDF writer for fixtures: builds the byte stream directly from
// the format definition, no shared code with the library writer.
struct EdfFixtureWriter {
  std::string header;
  std::vector<uint8_t> payload;

  static std::string pad(const std::string& s, size_t w) {
    std::string v = s;
    v.resize(w, ' ');
    return v;
  }

  static std::vector<uint8_t> ramp_file(int num_records, int rate, double pmin, double pmax,
                                        long dmin, long dmax) {
    std::string h;
    h += pad("0", 8);
    h += pad("patient", 80);
    h += pad("fixture", 80);
    h += pad("02.03.04", 8);
    h += pad("05.06.07", 8);
    h += pad(std::to_string(256 + 256), 8);  // one signal
    h += pad("", 44);
    h += pad(std::to_string(num_records), 8);
    h += pad("1", 8);
    h += pad("1", 4);
    h += pad("C3-REF", 16);
    h += pad("AgAgCl", 80);
    h += pad("uV", 8);
    h += pad(std::to_string(pmin), 8).substr(0, 8);
    h += pad(std::to_string(pmax), 8).substr(0, 8);
    h += pad(std::to_string(dmin), 8);
    h += pad(std::to_string(dmax), 8);
    h += pad("none", 80);
    h += pad(std::to_string(rate), 8);
    h += pad("", 32);

    std::vector<uint8_t> out(h.begin(), h.end());
    for (int r = 0; r < num_records; ++r) {
      for (int s = 0; s < rate; ++s) {
        const int16_t dig = static_cast<int16_t>(r * rate + s);  // ramp 0..N-1
        out.push_back(static_cast<uint8_t>(dig & 0xff));
        out.push_back(static_cast<uint8_t>((dig >> 8) & 0xff));
      }
    }
    return out;
  }
};

Recording make_recording(std::vector<std::string> labels, int rate, double seconds,
                         EventList events = {}, uint64_t seed = 11) {
  Recording rec;
  rec.record_id = "fixture";
  rec.sample_rate_hz = rate;
  rec.duration_s = seconds;
  rec.seizure_events = std::move(events);
  Rng rng(seed);
  const auto n = static_cast<size_t>(seconds * rate);
  for (auto& l : labels) {
    Channel ch;
    ch.label = std::move(l);
    ch.samples.resize(n);
    for (auto& v : ch.samples) v = rng.uniform(-80.0, 80.0);
    rec.channels.push_back(std::move(ch));
  }
  return rec;
}

// Amplitude of a pure tone in x via quadrature projection over whole periods.
double tone_amplitude(const std::vector<double>& x, size_t start, size_t len, double freq,
                      double rate) {
  double a = 0.0, b = 0.0;
  for (size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(start + i) / rate;
    a += x[start + i] * std::cos(2.0 * kPi * freq * t);
    b += x[start + i] * std::sin(2.0 * kPi * freq * t);
  }
  return 2.0 * std::sqrt(a * a + b * b) / static_cast<double>(len);
}

}  // namespace

TEST_CASE("EDF: crafted ramp fixture parses to exact physical values") {
  const double pmin = -100.0, pmax = 100.0;
  const long dmin = -32768, dmax = 32767;
  const auto bytes = EdfFixtureWriter::ramp_file(2, 256, pmin, pmax, dmin, dmax);
  const Recording rec = parse_edf(bytes, "ramp");

  CHECK(rec.sample_rate_hz == 256);
  CHECK(rec.duration_s == 2.0);
  REQUIRE(rec.channels.size() == 1);
  CHECK(rec.channels[0].label == "C3-REF");
  REQUIRE(rec.channels[0].samples.size() == 512);

  const double scale = (pmax - pmin) / static_cast<double>(dmax - dmin);
  for (size_t i = 0; i < 512; ++i) {
    const double expect = pmin + scale * (static_cast<double>(i) - dmin);
    CHECK(rec.channels[0].samples[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("EDF: digital minimum maps exactly to physical minimum") {
  auto bytes = EdfFixtureWriter::ramp_file(1, 4, -200.0, 200.0, -32768, 32767);
  // overwrite the four samples with digital_min
  const size_t data_at = 512;
  const int16_t dmin = -32768;
  for (int i = 0; i < 4; ++i) {
    std::memcpy(bytes.data() + data_at + static_cast<size_t>(i) * 2, &dmin, 2);
  }
  const Recording rec = parse_edf(bytes, "endpoint");
  for (double v : rec.channels[0].samples) CHECK(v == -200.0);
}

TEST_CASE("EDF: truncated payload names the offending data record") {
  auto bytes = EdfFixtureWriter::ramp_file(2, 256, -100.0, 100.0, -32768, 32767);
  bytes.resize(bytes.size() - 100);  // cut into record 1
  try {
    parse_edf(bytes, "cut");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
}

TEST_CASE("EDF: equal physical min/max is rejected") {
  auto bytes = EdfFixtureWriter::ramp_file(1, 4, 50.0, 50.0, -32768, 32767);
  CHECK_THROWS_AS(parse_edf(bytes, "flat"), FormatError);
}

TEST_CASE("EDF: library writer round-trips within one quantization step") {
  const Recording rec = make_recording({"F7-T7", "T7-P7"}, 256, 3.0);
  const auto bytes = write_edf(rec);
  const Recording back = parse_edf(bytes, rec.record_id);
  REQUIRE(back.channels.size() == rec.channels.size());
  for (size_t c = 0; c < rec.channels.size(); ++c) {
    const auto& orig = rec.channels[c].samples;
    const auto& got = back.channels[c].samples;
    REQUIRE(got.size() == orig.size());
    const auto [lo, hi] = std::minmax_element(orig.begin(), orig.end());
    const double step = (*hi - *lo + 2.01) / 65535.0;
    for (size_t i = 0; i < orig.size(); ++i) {
      CHECK(std::abs(orig[i] - got[i]) <= step);
    }
  }
}

TEST_CASE("EDF: constant-channel recordings survive the round trip") {
  Recording rec = make_recording({"DC"}, 128, 2.0);
  for (auto& v : rec.channels[0].samples) v = 42.0;
  const Recording back = parse_edf(write_edf(rec), "dc");
  for (double v : back.channels[0].samples) CHECK(v == doctest::Approx(42.0).epsilon(1e-3));
}

TEST_CASE("summary parser: events, empty stanzas, numbered seizures") {
  const std::string text =
      "Data Sampling Rate: 256 Hz\n"
      "*************************\n"
      "\n"
      "File Name: chb01_03.edf\n"
      "File Start Time: 13:43:04\n"
      "File End Time: 14:43:04\n"
      "Number of Seizures in File: 1\n"
      "Seizure Start Time: 2996 seconds\n"
      "Seizure End Time: 3036 seconds\n"
      "\n"
      "File Name: chb01_04.edf\n"
      "Number of Seizures in File: 0\n"
      "\n"
      "File Name: chb01_05.edf\n"
      "Number of Seizures in File: 2\n"
      "Seizure 1 Start Time: 100 seconds\n"
      "Seizure 1 End Time: 160 seconds\n"
      "Seizure 2 Start Time: 300 seconds\n"
      "Seizure 2 End Time: 420 seconds\n";
  const auto map = parse_chbmit_summary(text);
  REQUIRE(map.size() == 3);
  CHECK(map.at("chb01_03.edf") == EventList{{2996.0, 3036.0}});
  CHECK(map.at("chb01_04.edf").empty());
  CHECK(map.at("chb01_05.edf") == EventList{{100.0, 160.0}, {300.0, 420.0}});
}

TEST_CASE("summary parser: declared count mismatch names the stanza") {
  const std::string text =
      "File Name: bad.edf\n"
      "Number of Seizures in File: 2\n"
      "Seizure Start Time: 10 seconds\n"
      "Seizure End Time: 20 seconds\n";
  try {
    parse_chbmit_summary(text);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.edf") != std::string::npos);
  }
}

TEST_CASE("summary parser: start >= end is a validation error") {
  const std::string text =
      "File Name: bad.edf\n"
      "Number of Seizures in File: 1\n"
      "Seizure Start Time: 30 seconds\n"
      "Seizure End Time: 30 seconds\n";
  CHECK_THROWS_AS(parse_chbmit_summary(text), DataError);
}

TEST_CASE("select_channels: temporal montage selection, identity, missing label") {
  const Recording rec =
      make_recording({"FP1-F7", "F7-T7", "T7-P7", "P7-O1", "F8-T8", "T8-P8"}, 256, 1.0);
  const std::vector<std::string> wanted{"F7-T7", "T7-P7", "F8-T8", "T8-P8"};
  const Recording sel = select_channels(rec, wanted);
  REQUIRE(sel.channels.size() == 4);
  for (size_t i = 0; i < wanted.size(); ++i) CHECK(sel.channels[i].label == wanted[i]);
  CHECK(sel.channels[0].samples == rec.channels[1].samples);

  // case-insensitive, whitespace-stripped matching
  const Recording rel = select_channels(rec, {" f7-t7 ", "t8-P8"});
  CHECK(rel.channels[0].label == "F7-T7");

  std::vector<std::string> all;
  for (const auto& c : rec.channels) all.push_back(c.label);
  const Recording same = select_channels(rec, all);
  for (size_t i = 0; i < all.size(); ++i) {
    CHECK(same.channels[i].samples == rec.channels[i].samples);
  }

  try {
    select_channels(rec, {"CZ-PZ"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("F7-T7") != std::string::npos);  // lists available
  }
}

TEST_CASE("decimate: factor 1 is the identity") {
  const Recording rec = make_recording({"A"}, 256, 2.0);
  const Recording out = decimate(rec, 1);
  CHECK(out.channels[0].samples == rec.channels[0].samples);
  CHECK(out.sample_rate_hz == 256);
}

TEST_CASE("decimate: DC passes, steady state") {
  Recording rec = make_recording({"A"}, 1024, 2.0);
  for (auto& v : rec.channels[0].samples) v = 7.5;
  const Recording out = decimate(rec, 4);
  CHECK(out.sample_rate_hz == 256);
  REQUIRE(out.channels[0].samples.size() == 512);
  for (size_t i = 40; i + 40 < out.channels[0].samples.size(); ++i) {
    CHECK(out.channels[0].samples[i] == doctest::Approx(7.5).epsilon(1e-9));
  }
}

TEST_CASE("decimate: passband tone survives, near-Nyquist tone is crushed") {
  const int rate = 1024, factor = 4;
  const double dur = 4.0;
  auto tone_rec = [&](double freq) {
    Recording rec;
    rec.record_id = "tone";
    rec.sample_rate_hz = rate;
    rec.duration_s = dur;
    Channel ch;
    ch.label = "A";
    const size_t n = static_cast<size_t>(dur * rate);
    ch.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      ch.samples[i] = std::sin(2.0 * kPi * freq * static_cast<double>(i) / rate);
    }
    rec.channels.push_back(std::move(ch));
    return rec;
  };

  // analytic response of the actual taps (zero-phase, so purely real)
  const auto taps = decimation_filter_taps(factor);
  const int mid = (static_cast<int>(taps.size()) - 1) / 2;
  auto response = [&](double freq) {
    double re = 0.0;
    for (size_t k = 0; k < taps.size(); ++k) {
      re += taps[k] * std::cos(2.0 * kPi * freq * (static_cast<double>(k) - mid) / rate);
    }
    return std::abs(re);
  };

  {
    const Recording out = decimate(tone_rec(100.0), factor);
    // 64 samples at 256 Hz = 25 full periods of 100 Hz
    const double amp = tone_amplitude(out.channels[0].samples, 300, 64, 100.0, 256.0);
    CHECK(amp > 0.98);
    CHECK(amp < 1.02);
    CHECK(amp == doctest::Approx(response(100.0)).epsilon(2e-3));
    CHECK(response(100.0) > 0.98);
  }
  {
    const Recording out = decimate(tone_rec(500.0), factor);
    double worst = 0.0;
    const auto& s = out.channels[0].samples;
    for (size_t i = 300; i < s.size() - 300; ++i) worst = std::max(worst, std::abs(s[i]));
    CHECK(worst < 0.05);
    CHECK(response(500.0) < 0.05);
  }

  CHECK_THROWS_AS(decimate(tone_rec(10.0), 5), ConfigError);  // 1024 % 5 != 0
}

TEST_CASE("windowize: truncation, full overlap, 25% overlap under the default rule") {
  Recording rec = make_recording({"A", "B"}, 256, 10.0, {{4.0, 8.0}});
  const auto windows = windowize(rec, 4.0, 4.0);
  REQUIRE(windows.size() == 2);  // starts at 0 and 4 only
  CHECK(windows[0].start_s == 0.0);
  CHECK(windows[1].start_s == 4.0);
  CHECK(windows[0].label == 0);
  CHECK(windows[1].label == 1);  // full overlap with (4,8)
  CHECK(windows[0].data.shape() == std::vector<int64_t>({2, 1024}));
  CHECK(windows[0].record_id == "fixture");

  Recording small_event = make_recording({"A"}, 256, 10.0, {{5.0, 6.0}});
  const auto w2 = windowize(small_event, 4.0, 4.0);
  CHECK(w2[1].label == 0);  // 1 s overlap = 25% < 50%

  Recording shorter = make_recording({"A"}, 256, 2.0);
  CHECK(windowize(shorter, 4.0, 4.0).empty());
}

TEST_CASE("windowize: window count formula holds across random inputs") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const double dur = 4.0 + static_cast<double>(rng.uniform_int(30));
    const double win = 1.0 + static_cast<double>(rng.uniform_int(4));
    const double stride = 1.0 + static_cast<double>(rng.uniform_int(4));
    Recording rec = make_recording({"A"}, 64, dur);
    const auto windows = windowize(rec, win, stride, LabelRule{});
    const int64_t n = rec.sample_count();
    const int64_t wlen = static_cast<int64_t>(win * 64);
    const int64_t step = static_cast<int64_t>(stride * 64);
    const int64_t expect = wlen > n ? 0 : (n - wlen) / step + 1;
    CHECK(static_cast<int64_t>(windows.size()) == expect);
  }
}

TEST_CASE("windowize: growing a seizure event never flips a label 1 -> 0") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const double start = 10.0 + rng.uniform(0.0, 20.0);
    const double end = start + 2.0 + rng.uniform(0.0, 10.0);
    Recording rec = make_recording({"A"}, 64, 60.0, {{start, end}});
    const auto before = windowize(rec, 4.0, 2.0);

    Recording grown = make_recording({"A"}, 64, 60.0,
                                     {{std::max(0.0, start - 3.0), std::min(60.0, end + 4.0)}});
    const auto after = windowize(grown, 4.0, 2.0);
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) {
      if (before[i].label == 1) CHECK(after[i].label == 1);
    }
  }
}

TEST_CASE("windowize labels are unchanged by decimation at fixed second boundaries") {
  Recording rec = make_recording({"A"}, 256, 40.0, {{10.0, 21.0}, {30.0, 34.0}});
  const auto before = windowize(rec, 4.0, 4.0);
  const Recording dec = decimate(rec, 2);
  const auto after = windowize(dec, 4.0, 4.0);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].label == after[i].label);
    CHECK(before[i].start_s == after[i].start_s);
  }
}

TEST_CASE("window cache round-trips bit-exactly") {
  namespace fs = std::filesystem;
  Recording rec = make_recording({"A", "B"}, 128, 20.0, {{6.0, 12.0}});
  rec.record_id = "rec_a";
  Recording rec2 = make_recording({"A", "B"}, 128, 12.0, {}, 13);
  rec2.record_id = "rec_b";
  auto windows = windowize(rec, 4.0, 4.0);
  auto more = windowize(rec2, 4.0, 4.0);
  windows.insert(windows.end(), more.begin(), more.end());

  const fs::path dir = fs::temp_directory_path() / "epidenet_test_cache";
  fs::create_directories(dir);
  const fs::path path = dir / "windows.bin";
  save_window_cache(path, windows);
  const auto loaded = load_window_cache(path);
  REQUIRE(loaded.size() == windows.size());
  for (size_t i = 0; i < windows.size(); ++i) {
    CHECK(loaded[i].data.data() == windows[i].data.data());  // bit-exact floats
    CHECK(loaded[i].label == windows[i].label);
    CHECK(loaded[i].record_id == windows[i].record_id);
    CHECK(loaded[i].start_s == windows[i].start_s);
  }

  auto bytes = read_file_bytes(path);
  bytes.resize(bytes.size() - 7);
  atomic_write_bytes(dir / "cut.bin", bytes.data(), bytes.size());
  CHECK_THROWS_AS(load_window_cache(dir / "cut.bin"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("synthetic data: zero seizures means background-only records") {
  SynthSpec spec;
  spec.records_per_subject = 2;
  spec.record_seconds = 60.0;
  spec.seizures_min = spec.seizures_max = 0;
  spec.seed = 5;
  const auto sets = synth_dataset(spec);
  REQUIRE(sets.size() == 1);
  for (const auto& rec : sets[0].records) {
    CHECK(rec.seizure_events.empty());
    CHECK(rec.channels.size() == 4);
    CHECK(rec.sample_count() == 60 * 256);
  }
}

TEST_CASE("synthetic data: identical seeds give bit-identical datasets") {
  SynthSpec spec;
  spec.records_per_subject = 2;
  spec.record_seconds = 300.0;
  spec.seizures_per_record = {1, 2};
  spec.seed = 77;
  const auto a = synth_dataset(spec);
  const auto b = synth_dataset(spec);
  REQUIRE(a.size() == b.size());
  for (size_t s = 0; s < a.size(); ++s) {
    REQUIRE(a[s].records.size() == b[s].records.size());
    for (size_t r = 0; r < a[s].records.size(); ++r) {
      CHECK(a[s].records[r].seizure_events == b[s].records[r].seizure_events);
      for (size_t c = 0; c < a[s].records[r].channels.size(); ++c) {
        CHECK(a[s].records[r].channels[c].samples == b[s].records[r].channels[c].samples);
      }
    }
  }
  SynthSpec other = spec;
  other.seed = 78;
  const auto c = synth_dataset(other);
  CHECK(a[0].records[0].channels[0].samples != c[0].records[0].channels[0].samples);
}

TEST_CASE("synthetic data: seizure bursts carry the configured SNR and events are valid") {
  SynthSpec spec;
  spec.records_per_subject = 1;
  spec.record_seconds = 300.0;
  spec.seizures_per_record = {2};
  spec.snr = 2.0;
  spec.seed = 21;
  const auto sets = synth_dataset(spec);
  const auto& rec = sets[0].records[0];
  REQUIRE(rec.seizure_events.size() == 2);
  validate_recording(rec);

  // seizure-span RMS should clearly exceed background RMS
  auto span_rms = [&](double s, double e) {
    const auto& x = rec.channels[0].samples;
    const size_t i0 = static_cast<size_t>(s * rec.sample_rate_hz);
    const size_t i1 = static_cast<size_t>(e * rec.sample_rate_hz);
    double acc = 0.0;
    for (size_t i = i0; i < i1; ++i) acc += x[i] * x[i];
    return std::sqrt(acc / static_cast<double>(i1 - i0));
  };
  const auto& [s0, e0] = rec.seizure_events[0];
  const double seiz = span_rms(s0 + 2.0, e0 - 2.0);
  const double bg = span_rms(0.0, s0 - 5.0);
  CHECK(seiz > 1.5 * bg);
}

TEST_CASE("synthetic data: impossible placements are rejected") {
  SynthSpec spec;
  spec.record_seconds = 100.0;
  spec.seizures_per_record = {3};
  spec.seizure_duration_min_s = 40.0;
  spec.seizure_duration_max_s = 60.0;
  CHECK_THROWS_AS(synth_dataset(spec), DataError);
}
