#include "epidenet/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include "epidenet/io_util.hpp"

namespace epidenet {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string normalize_label(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace

void validate_recording(const Recording& rec) {
  if (rec.channels.empty()) throw DataError(rec.record_id + ": recording has no channels");
  const size_t n = rec.channels.front().samples.size();
  for (const auto& ch : rec.channels) {
    if (ch.samples.size() != n) {
      throw DataError(rec.record_id + ": channel '" + ch.label + "' length " +
                      std::to_string(ch.samples.size()) + " != " + std::to_string(n));
    }
  }
  if (rec.sample_rate_hz <= 0) throw DataError(rec.record_id + ": sample rate must be positive");
  const double expect = static_cast<double>(n) / rec.sample_rate_hz;
  if (std::abs(expect - rec.duration_s) > 1e-6) {
    throw DataError(rec.record_id + ": duration " + std::to_string(rec.duration_s) +
                    "s does not match " + std::to_string(n) + " samples at " +
                    std::to_string(rec.sample_rate_hz) + " Hz");
  }
  double prev_end = 0.0;
  for (const auto& [s, e] : rec.seizure_events) {
    if (!(0.0 <= s && s < e && e <= rec.duration_s)) {
      throw DataError(rec.record_id + ": event (" + std::to_string(s) + ", " + std::to_string(e) +
                      ") outside [0, " + std::to_string(rec.duration_s) + "]");
    }
    if (s < prev_end) throw DataError(rec.record_id + ": overlapping or unsorted events");
    prev_end = e;
  }
}

double RecordSet::total_hours() const {
  double s = 0.0;
  for (const auto& r : records) s += r.duration_s;
  return s / 3600.0;
}

std::vector<std::string> RecordSet::seizure_record_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (r.has_seizures()) ids.push_back(r.record_id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// --- EDF ---------------------------------------------------------------

namespace {

constexpr size_t kEdfHeaderBytes = 256;
constexpr size_t kEdfSignalHeaderBytes = 256;

struct EdfFieldReader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;

  std::string fixed(size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      throw FormatError(std::string("EDF: truncated header reading ") + what + " at byte offset " +
                        std::to_string(pos));
    }
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return trim(s);
  }

  long integer(size_t n, const char* what) {
    const size_t at = pos;
    const std::string s = fixed(n, what);
    try {
      size_t used = 0;
      const long v = std::stol(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw FormatError(std::string("EDF: bad integer field ") + what + " ('" + s +
                        "') at byte offset " + std::to_string(at));
    }
  }

  double real(size_t n, const char* what) {
    const size_t at = pos;
    const std::string s = fixed(n, what);
    try {
      size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw FormatError(std::string("EDF: bad numeric field ") + what + " ('" + s +
                        "') at byte offset " + std::to_string(at));
    }
  }
};

bool is_annotation_label(const std::string& label) {
  return normalize_label(label) == "EDFANNOTATIONS";
}

}  // namespace

Recording parse_edf(std::span<const uint8_t> bytes, const std::string& record_id) {
  if (bytes.size() < kEdfHeaderBytes) {
    throw FormatError("EDF: stream shorter than the 256-byte header (" +
                      std::to_string(bytes.size()) + " bytes)");
  }
  EdfFieldReader r{bytes};
  r.fixed(8, "version");
  r.fixed(80, "patient id");
  r.fixed(80, "recording id");
  r.fixed(8, "start date");
  r.fixed(8, "start time");
  const long header_bytes = r.integer(8, "header bytes");
  r.fixed(44, "reserved");
  const long num_records = r.integer(8, "data record count");
  const double record_duration = r.real(8, "data record duration");
  const long ns = r.integer(4, "signal count");
  if (ns < 1) throw FormatError("EDF: signal count must be >= 1, got " + std::to_string(ns));
  if (num_records < 0) throw FormatError("EDF: negative data record count");
  if (!(record_duration > 0.0)) throw FormatError("EDF: data record duration must be positive");
  const size_t expect_header = kEdfHeaderBytes + static_cast<size_t>(ns) * kEdfSignalHeaderBytes;
  if (static_cast<size_t>(header_bytes) != expect_header) {
    throw FormatError("EDF: header size field " + std::to_string(header_bytes) + " != expected " +
                      std::to_string(expect_header));
  }
  if (bytes.size() < expect_header) {
    throw FormatError("EDF: stream shorter than declared header (" + std::to_string(bytes.size()) +
                      " < " + std::to_string(expect_header) + ")");
  }

  std::vector<std::string> labels(static_cast<size_t>(ns));
  std::vector<double> phys_min(static_cast<size_t>(ns)), phys_max(static_cast<size_t>(ns));
  std::vector<long> dig_min(static_cast<size_t>(ns)), dig_max(static_cast<size_t>(ns));
  std::vector<long> samples_per_record(static_cast<size_t>(ns));
  for (long i = 0; i < ns; ++i) labels[static_cast<size_t>(i)] = r.fixed(16, "signal label");
  for (long i = 0; i < ns; ++i) r.fixed(80, "transducer");
  for (long i = 0; i < ns; ++i) r.fixed(8, "physical dimension");
  for (long i = 0; i < ns; ++i) phys_min[static_cast<size_t>(i)] = r.real(8, "physical min");
  for (long i = 0; i < ns; ++i) phys_max[static_cast<size_t>(i)] = r.real(8, "physical max");
  for (long i = 0; i < ns; ++i) dig_min[static_cast<size_t>(i)] = r.integer(8, "digital min");
  for (long i = 0; i < ns; ++i) dig_max[static_cast<size_t>(i)] = r.integer(8, "digital max");
  for (long i = 0; i < ns; ++i) r.fixed(80, "prefiltering");
  for (long i = 0; i < ns; ++i) {
    samples_per_record[static_cast<size_t>(i)] = r.integer(8, "samples per record");
  }
  for (long i = 0; i < ns; ++i) r.fixed(32, "signal reserved");

  size_t record_size = 0;
  for (long i = 0; i < ns; ++i) {
    if (samples_per_record[static_cast<size_t>(i)] < 1) {
      throw FormatError("EDF: signal " + std::to_string(i) + " has no samples per record");
    }
    record_size += static_cast<size_t>(samples_per_record[static_cast<size_t>(i)]) * 2;
  }

  Recording rec;
  rec.record_id = record_id;
  std::vector<size_t> kept;
  int rate = 0;
  for (long i = 0; i < ns; ++i) {
    const size_t k = static_cast<size_t>(i);
    if (is_annotation_label(labels[k])) continue;
    if (phys_min[k] == phys_max[k]) {
      throw FormatError("EDF: signal '" + labels[k] + "' has physical_min == physical_max (" +
                        std::to_string(phys_min[k]) + ")");
    }
    if (dig_min[k] == dig_max[k]) {
      throw FormatError("EDF: signal '" + labels[k] + "' has digital_min == digital_max");
    }
    const double sr = samples_per_record[k] / record_duration;
    const int sri = static_cast<int>(std::lround(sr));
    if (std::abs(sr - sri) > 1e-9 || sri < 1) {
      throw FormatError("EDF: signal '" + labels[k] + "' has non-integral sample rate " +
                        std::to_string(sr));
    }
    if (rate == 0) {
      rate = sri;
    } else if (rate != sri) {
      throw FormatError("EDF: mixed sample rates (" + std::to_string(rate) + " vs " +
                        std::to_string(sri) + " on '" + labels[k] + "')");
    }
    kept.push_back(k);
    rec.channels.push_back(Channel{labels[k], {}});
  }
  if (kept.empty()) throw FormatError("EDF: no signal channels (annotations only)");

  for (size_t j = 0; j < kept.size(); ++j) {
    rec.channels[j].samples.reserve(static_cast<size_t>(num_records) *
                                    static_cast<size_t>(samples_per_record[kept[j]]));
  }

  size_t pos = expect_header;
  for (long recd = 0; recd < num_records; ++recd) {
    if (pos + record_size > bytes.size()) {
      throw FormatError("EDF: truncated payload in data record " + std::to_string(recd) +
                        " at byte offset " + std::to_string(pos));
    }
    for (long i = 0; i < ns; ++i) {
      const size_t k = static_cast<size_t>(i);
      const size_t count = static_cast<size_t>(samples_per_record[k]);
      const auto it = std::find(kept.begin(), kept.end(), k);
      if (it == kept.end()) {
        pos += count * 2;
        continue;
      }
      const size_t j = static_cast<size_t>(it - kept.begin());
      const double scale = (phys_max[k] - phys_min[k]) / static_cast<double>(dig_max[k] - dig_min[k]);
      auto& out = rec.channels[j].samples;
      for (size_t s = 0; s < count; ++s) {
        int16_t dig;
        std::memcpy(&dig, bytes.data() + pos, 2);
        pos += 2;
        out.push_back(phys_min[k] + scale * (static_cast<double>(dig) - dig_min[k]));
      }
    }
  }

  rec.sample_rate_hz = rate;
  rec.duration_s = static_cast<double>(num_records) * record_duration;
  validate_recording(rec);
  return rec;
}

Recording parse_edf_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_edf(bytes, path.stem().string());
}

namespace {

void put_field(std::string& header, const std::string& value, size_t width) {
  std::string v = value;
  if (v.size() > width) v.resize(width);
  v.resize(width, ' ');
  header += v;
}

std::string number_field(double v, size_t width) {
  std::ostringstream os;
  os << v;
  std::string s = os.str();
  if (s.size() > width) {
    os.str("");
    os.precision(static_cast<int>(width) - 2);
    os << v;
    s = os.str();
    if (s.size() > width) s.resize(width);
  }
  return s;
}

}  // namespace

std::vector<uint8_t> write_edf(const Recording& rec) {
  validate_recording(rec);
  const int64_t n = rec.sample_count();
  if (n % rec.sample_rate_hz != 0) {
    throw DataError(rec.record_id + ": EDF writer needs a whole-second duration");
  }
  const long num_records = static_cast<long>(n / rec.sample_rate_hz);
  const long ns = static_cast<long>(rec.channels.size());
  constexpr long kDigMin = -32768, kDigMax = 32767;

  std::vector<double> pmin(rec.channels.size()), pmax(rec.channels.size());
  for (size_t k = 0; k < rec.channels.size(); ++k) {
    const auto& s = rec.channels[k].samples;
    auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    pmin[k] = *lo;
    pmax[k] = *hi;
    if (pmin[k] == pmax[k]) {  // constant signal: widen so the scale is nonzero
      pmin[k] -= 1.0;
      pmax[k] += 1.0;
    }
  }

  std::string h;
  put_field(h, "0", 8);
  put_field(h, "X X X X", 80);
  put_field(h, "Startdate X X X X " + rec.record_id, 80);
  put_field(h, "01.01.01", 8);
  put_field(h, "00.00.00", 8);
  put_field(h, std::to_string(kEdfHeaderBytes + static_cast<size_t>(ns) * kEdfSignalHeaderBytes), 8);
  put_field(h, "", 44);
  put_field(h, std::to_string(num_records), 8);
  put_field(h, "1", 8);
  put_field(h, std::to_string(ns), 4);
  for (const auto& ch : rec.channels) put_field(h, ch.label, 16);
  for (long i = 0; i < ns; ++i) put_field(h, "EEG electrode", 80);
  for (long i = 0; i < ns; ++i) put_field(h, "uV", 8);
  for (long i = 0; i < ns; ++i) put_field(h, number_field(pmin[static_cast<size_t>(i)], 8), 8);
  for (long i = 0; i < ns; ++i) put_field(h, number_field(pmax[static_cast<size_t>(i)], 8), 8);
  for (long i = 0; i < ns; ++i) put_field(h, std::to_string(kDigMin), 8);
  for (long i = 0; i < ns; ++i) put_field(h, std::to_string(kDigMax), 8);
  for (long i = 0; i < ns; ++i) put_field(h, "", 80);
  for (long i = 0; i < ns; ++i) put_field(h, std::to_string(rec.sample_rate_hz), 8);
  for (long i = 0; i < ns; ++i) put_field(h, "", 32);

  // Physical ranges were widened/rounded through the ASCII header fields;
  // re-parse them so the stored digital values invert exactly.
  std::vector<double> hmin(rec.channels.size()), hmax(rec.channels.size());
  {
    const size_t base = kEdfHeaderBytes + static_cast<size_t>(ns) * (16 + 80 + 8);
    for (long i = 0; i < ns; ++i) {
      hmin[static_cast<size_t>(i)] =
          std::stod(h.substr(base + static_cast<size_t>(i) * 8, 8));
      hmax[static_cast<size_t>(i)] =
          std::stod(h.substr(base + static_cast<size_t>(ns) * 8 + static_cast<size_t>(i) * 8, 8));
    }
  }

  std::vector<uint8_t> out(h.begin(), h.end());
  out.reserve(out.size() +
              static_cast<size_t>(num_records) * static_cast<size_t>(ns) *
                  static_cast<size_t>(rec.sample_rate_hz) * 2);
  for (long recd = 0; recd < num_records; ++recd) {
    for (size_t k = 0; k < rec.channels.size(); ++k) {
      const double lo = hmin[k], hi = hmax[k];
      const double scale = (kDigMax - kDigMin) / (hi - lo);
      const auto& s = rec.channels[k].samples;
      const size_t off = static_cast<size_t>(recd) * static_cast<size_t>(rec.sample_rate_hz);
      for (int t = 0; t < rec.sample_rate_hz; ++t) {
        double d = std::round((s[off + static_cast<size_t>(t)] - lo) * scale + kDigMin);
        d = std::clamp(d, static_cast<double>(kDigMin), static_cast<double>(kDigMax));
        const int16_t dig = static_cast<int16_t>(d);
        out.push_back(static_cast<uint8_t>(dig & 0xff));
        out.push_back(static_cast<uint8_t>((dig >> 8) & 0xff));
      }
    }
  }
  return out;
}

void write_edf_file(const Recording& rec, const std::filesystem::path& path) {
  const auto bytes = write_edf(rec);
  atomic_write_bytes(path, bytes.data(), bytes.size());
}

// --- CHB-MIT style summary ----------------------------------------------

namespace {

// Accepts "Seizure Start Time: 2996 seconds" and "Seizure 2 Start Time: ...".
bool parse_seizure_line(const std::string& line, const char* kind, double* out_value) {
  const std::string t = trim(line);
  if (t.rfind("Seizure", 0) != 0) return false;
  const size_t kind_pos = t.find(kind);
  if (kind_pos == std::string::npos) return false;
  for (size_t i = 7; i < kind_pos; ++i) {
    if (!std::isspace(static_cast<unsigned char>(t[i])) &&
        !std::isdigit(static_cast<unsigned char>(t[i]))) {
      return false;
    }
  }
  const size_t colon = t.find(':', kind_pos);
  if (colon == std::string::npos) return false;
  std::istringstream is(t.substr(colon + 1));
  double v;
  if (!(is >> v)) return false;
  *out_value = v;
  return true;
}

}  // namespace

std::map<std::string, EventList> parse_chbmit_summary(const std::string& text) {
  std::map<std::string, EventList> out;
  std::istringstream is(text);
  std::string line;

  std::string current_file;
  long declared = -1;
  std::vector<double> starts, ends;

  auto close_stanza = [&]() {
    if (current_file.empty()) return;
    if (declared < 0) {
      throw DataError("summary: stanza '" + current_file +
                      "' is missing 'Number of Seizures in File'");
    }
    if (starts.size() != ends.size() || static_cast<long>(starts.size()) != declared) {
      throw DataError("summary: stanza '" + current_file + "' declares " +
                      std::to_string(declared) + " seizures but lists " +
                      std::to_string(starts.size()) + " start / " + std::to_string(ends.size()) +
                      " end times");
    }
    EventList events;
    for (size_t i = 0; i < starts.size(); ++i) {
      if (!(starts[i] < ends[i])) {
        throw DataError("summary: stanza '" + current_file + "' seizure " + std::to_string(i + 1) +
                        " has start " + std::to_string(starts[i]) + " >= end " +
                        std::to_string(ends[i]));
      }
      events.emplace_back(starts[i], ends[i]);
    }
    std::sort(events.begin(), events.end());
    for (size_t i = 1; i < events.size(); ++i) {
      if (events[i].first < events[i - 1].second) {
        throw DataError("summary: stanza '" + current_file + "' has overlapping seizures");
      }
    }
    out[current_file] = std::move(events);
    current_file.clear();
    declared = -1;
    starts.clear();
    ends.clear();
  };

  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.rfind("File Name:", 0) == 0) {
      close_stanza();
      current_file = trim(t.substr(10));
      if (current_file.empty()) throw DataError("summary: empty file name in stanza header");
      continue;
    }
    if (current_file.empty()) continue;  // preamble (sampling rate, channel lists)
    if (t.rfind("Number of Seizures in File:", 0) == 0) {
      declared = std::stol(trim(t.substr(27)));
      continue;
    }
    double v;
    if (parse_seizure_line(t, "Start Time", &v)) {
      starts.push_back(v);
    } else if (parse_seizure_line(t, "End Time", &v)) {
      ends.push_back(v);
    }
  }
  close_stanza();
  return out;
}

// --- Channel selection / decimation / windowing -------------------------

Recording select_channels(const Recording& rec, const std::vector<std::string>& wanted_labels) {
  Recording out;
  out.record_id = rec.record_id;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.seizure_events = rec.seizure_events;
  out.duration_s = rec.duration_s;
  for (const auto& want : wanted_labels) {
    const std::string norm = normalize_label(want);
    const auto it = std::find_if(rec.channels.begin(), rec.channels.end(), [&](const Channel& c) {
      return normalize_label(c.label) == norm;
    });
    if (it == rec.channels.end()) {
      std::string have;
      for (const auto& c : rec.channels) {
        if (!have.empty()) have += ", ";
        have += c.label;
      }
      throw DataError(rec.record_id + ": channel '" + want + "' not found (available: " + have +
                      ")");
    }
    out.channels.push_back(*it);
  }
  return out;
}

std::vector<double> decimation_filter_taps(int factor) {
  constexpr double kPi = 3.14159265358979323846;
  if (factor < 1) throw ConfigError("decimation factor must be >= 1");
  if (factor == 1) return {1.0};
  // Passband edge 0.8x and stopband edge 1.0x the new Nyquist; the -6 dB
  // point sits midway at 0.9x. Hamming window sized for that transition.
  const double cutoff = 0.9 / (2.0 * factor);       // cycles per input sample
  const double transition = 0.2 / (2.0 * factor);   // normalized width
  int taps = static_cast<int>(std::ceil(3.3 / transition));
  if (taps % 2 == 0) ++taps;
  const int mid = (taps - 1) / 2;
  std::vector<double> h(static_cast<size_t>(taps));
  double sum = 0.0;
  for (int k = 0; k < taps; ++k) {
    const int m = k - mid;
    const double x = 2.0 * kPi * cutoff * m;
    const double sinc = (m == 0) ? 2.0 * cutoff : std::sin(x) / (kPi * m);
    const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * k / (taps - 1));
    h[static_cast<size_t>(k)] = sinc * window;
    sum += h[static_cast<size_t>(k)];
  }
  for (auto& v : h) v /= sum;
  return h;
}

Recording decimate(const Recording& rec, int factor) {
  validate_recording(rec);
  if (factor < 1) throw ConfigError("decimation factor must be >= 1");
  if (factor == 1) return rec;
  if (rec.sample_rate_hz % factor != 0) {
    throw ConfigError(rec.record_id + ": sample rate " + std::to_string(rec.sample_rate_hz) +
                      " not divisible by decimation factor " + std::to_string(factor));
  }
  const auto taps = decimation_filter_taps(factor);
  const int mid = (static_cast<int>(taps.size()) - 1) / 2;

  Recording out;
  out.record_id = rec.record_id;
  out.sample_rate_hz = rec.sample_rate_hz / factor;
  out.seizure_events = rec.seizure_events;
  out.duration_s = rec.duration_s;
  for (const auto& ch : rec.channels) {
    const auto& x = ch.samples;
    const int64_t n = static_cast<int64_t>(x.size());
    Channel oc;
    oc.label = ch.label;
    oc.samples.reserve(static_cast<size_t>(n / factor));
    for (int64_t i = 0; i < n; i += factor) {
      double acc = 0.0;
      for (size_t k = 0; k < taps.size(); ++k) {
        const int64_t j = i + static_cast<int64_t>(k) - mid;
        if (j >= 0 && j < n) acc += taps[k] * x[static_cast<size_t>(j)];
      }
      oc.samples.push_back(acc);
    }
    out.channels.push_back(std::move(oc));
  }
  validate_recording(out);
  return out;
}

std::vector<LabeledWindow> windowize(const Recording& rec, double window_s, double stride_s,
                                     const LabelRule& rule) {
  validate_recording(rec);
  const double rate = rec.sample_rate_hz;
  const double wlen_f = window_s * rate;
  const double step_f = stride_s * rate;
  const int64_t wlen = static_cast<int64_t>(std::llround(wlen_f));
  const int64_t step = static_cast<int64_t>(std::llround(step_f));
  if (std::abs(wlen_f - wlen) > 1e-9 || std::abs(step_f - step) > 1e-9 || wlen < 1 || step < 1) {
    throw ConfigError("windowize: window and stride must be whole sample counts (window " +
                      std::to_string(window_s) + "s, stride " + std::to_string(stride_s) + "s at " +
                      std::to_string(rec.sample_rate_hz) + " Hz)");
  }
  if (!(rule.min_overlap > 0.0) || rule.min_overlap > 1.0) {
    throw ConfigError("windowize: min_overlap must be in (0, 1]");
  }

  const int64_t n = rec.sample_count();
  std::vector<LabeledWindow> out;
  if (wlen > n) return out;  // window longer than the recording: no windows
  const int64_t count = (n - wlen) / step + 1;
  const int64_t C = static_cast<int64_t>(rec.channels.size());

  for (int64_t w = 0; w < count; ++w) {
    const int64_t s0 = w * step;
    LabeledWindow lw;
    lw.record_id = rec.record_id;
    lw.start_s = static_cast<double>(s0) / rate;
    lw.data = Tensor({C, wlen});
    for (int64_t c = 0; c < C; ++c) {
      const auto& src = rec.channels[static_cast<size_t>(c)].samples;
      float* dst = lw.data.raw() + c * wlen;
      for (int64_t t = 0; t < wlen; ++t) {
        dst[t] = static_cast<float>(src[static_cast<size_t>(s0 + t)]);
      }
    }
    const double ws = lw.start_s;
    const double we = ws + window_s;
    double best_overlap = 0.0;
    for (const auto& [es, ee] : rec.seizure_events) {
      best_overlap = std::max(best_overlap, std::min(we, ee) - std::max(ws, es));
    }
    lw.label = best_overlap >= rule.min_overlap * window_s ? 1 : 0;
    out.push_back(std::move(lw));
  }
  return out;
}

// --- Window cache --------------------------------------------------------

namespace {
constexpr char kCacheMagic[4] = {'E', 'P', 'W', 'C'};
constexpr uint32_t kCacheVersion = 1;
}  // namespace

void save_window_cache(const std::filesystem::path& path,
                       std::span<const LabeledWindow> windows) {
  if (windows.empty()) throw DataError("window cache: nothing to save");
  const int64_t C = windows.front().data.extent(0);
  const int64_t T = windows.front().data.extent(1);

  std::vector<std::string> ids;
  for (const auto& w : windows) {
    if (w.data.rank() != 2 || w.data.extent(0) != C || w.data.extent(1) != T) {
      throw DataError("window cache: inconsistent window shapes");
    }
    if (std::find(ids.begin(), ids.end(), w.record_id) == ids.end()) ids.push_back(w.record_id);
  }

  ByteWriter bw;
  bw.write_raw(kCacheMagic, 4);
  bw.write<uint32_t>(kCacheVersion);
  bw.write<int64_t>(C);
  bw.write<int64_t>(T);
  bw.write<uint32_t>(static_cast<uint32_t>(ids.size()));
  for (const auto& id : ids) {
    bw.write<uint32_t>(static_cast<uint32_t>(id.size()));
    bw.write_string(id);
  }
  bw.write<uint64_t>(windows.size());
  for (const auto& w : windows) {
    const auto it = std::find(ids.begin(), ids.end(), w.record_id);
    bw.write<uint32_t>(static_cast<uint32_t>(it - ids.begin()));
    bw.write<double>(w.start_s);
    bw.write<uint8_t>(static_cast<uint8_t>(w.label));
    bw.write_raw(w.data.data().data(), w.data.data().size() * sizeof(float));
  }
  atomic_write_bytes(path, bw.bytes().data(), bw.bytes().size());
}

std::vector<LabeledWindow> load_window_cache(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "window cache " + path.string());
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kCacheMagic, 4) != 0) {
    throw FormatError("window cache " + path.string() + ": bad magic bytes");
  }
  if (r.read<uint32_t>() != kCacheVersion) {
    throw FormatError("window cache " + path.string() + ": unsupported version");
  }
  const int64_t C = r.read<int64_t>();
  const int64_t T = r.read<int64_t>();
  const uint32_t id_count = r.read<uint32_t>();
  std::vector<std::string> ids;
  for (uint32_t i = 0; i < id_count; ++i) {
    const uint32_t len = r.read<uint32_t>();
    ids.push_back(r.read_string(len));
  }
  const uint64_t count = r.read<uint64_t>();
  std::vector<LabeledWindow> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    LabeledWindow w;
    const uint32_t idx = r.read<uint32_t>();
    if (idx >= ids.size()) {
      throw FormatError("window cache " + path.string() + ": record index out of range");
    }
    w.record_id = ids[idx];
    w.start_s = r.read<double>();
    w.label = r.read<uint8_t>();
    w.data = Tensor({C, T});
    r.read_raw(w.data.data().data(), w.data.data().size() * sizeof(float));
    out.push_back(std::move(w));
  }
  if (!r.done()) {
    throw FormatError("window cache " + path.string() + ": trailing bytes");
  }
  return out;
}

}  // namespace epidenet
