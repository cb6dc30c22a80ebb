// epidenet command line: synthetic data generation, training, leave-one-out
// evaluation, INT8 quantization, scoring and benchmarking over flat files.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 data or file format
// error, 4 run failure (training/evaluation died or a fold failed).

#include <CLI11.hpp>
#include <chrono>
#include <iostream>
#include <json.hpp>

#include "epidenet/io_util.hpp"
#include "epidenet/quantize.hpp"
#include "epidenet/reporting.hpp"
#include "epidenet/rng.hpp"
#include "epidenet/synth.hpp"
#include "epidenet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace epidenet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRun = 4;

const std::vector<std::string> kDefaultChannels = {"F7-T7", "T7-P7", "F8-T8", "T8-P8"};

// --- synthetic spec ---------------------------------------------------------

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.subjects = j.value("subjects", s.subjects);
  s.records_per_subject = j.value("records_per_subject", s.records_per_subject);
  s.record_seconds = j.value("record_seconds", s.record_seconds);
  s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
  if (j.contains("channels")) s.channel_labels = j["channels"].get<std::vector<std::string>>();
  if (j.contains("seizures_per_record")) {
    s.seizures_per_record = j["seizures_per_record"].get<std::vector<int>>();
  }
  s.seizures_min = j.value("seizures_min", s.seizures_min);
  s.seizures_max = j.value("seizures_max", s.seizures_max);
  s.seizure_duration_min_s = j.value("seizure_duration_min_s", s.seizure_duration_min_s);
  s.seizure_duration_max_s = j.value("seizure_duration_max_s", s.seizure_duration_max_s);
  s.snr = j.value("snr", s.snr);
  s.background_rms_uv = j.value("background_rms_uv", s.background_rms_uv);
  s.seed = j.value("seed", s.seed);
  return s;
}

json synth_spec_to_json(const SynthSpec& s) {
  json j;
  j["subjects"] = s.subjects;
  j["records_per_subject"] = s.records_per_subject;
  j["record_seconds"] = s.record_seconds;
  j["sample_rate_hz"] = s.sample_rate_hz;
  j["channels"] = s.channel_labels;
  j["seizures_per_record"] = s.seizures_per_record;
  j["seizures_min"] = s.seizures_min;
  j["seizures_max"] = s.seizures_max;
  j["seizure_duration_min_s"] = s.seizure_duration_min_s;
  j["seizure_duration_max_s"] = s.seizure_duration_max_s;
  j["snr"] = s.snr;
  j["background_rms_uv"] = s.background_rms_uv;
  j["seed"] = s.seed;
  return j;
}

void require_empty_or_force(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ConfigError("output directory '" + dir.string() +
                      "' exists and is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

std::string summary_text(const RecordSet& set) {
  std::ostringstream os;
  os << "Data Sampling Rate: " << set.records.front().sample_rate_hz << " Hz\n";
  os << "Channels: ";
  for (size_t i = 0; i < set.records.front().channels.size(); ++i) {
    if (i) os << ", ";
    os << set.records.front().channels[i].label;
  }
  os << "\n\n";
  for (const auto& rec : set.records) {
    os << "File Name: " << rec.record_id << ".edf\n";
    os << "Number of Seizures in File: " << rec.seizure_events.size() << "\n";
    for (size_t i = 0; i < rec.seizure_events.size(); ++i) {
      os << "Seizure " << (i + 1)
         << " Start Time: " << static_cast<long long>(rec.seizure_events[i].first)
         << " seconds\n";
      os << "Seizure " << (i + 1)
         << " End Time: " << static_cast<long long>(rec.seizure_events[i].second) << " seconds\n";
    }
    os << "\n";
  }
  return os.str();
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, bool force) {
  json spec_json;
  try {
    spec_json = json::parse(read_file_bytes(spec_path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse synth spec '" + spec_path + "': " + e.what());
  }
  const SynthSpec spec = synth_spec_from_json(spec_json);
  validate_synth_spec(spec);
  const fs::path out(out_dir);
  require_empty_or_force(out, force);

  const auto sets = synth_dataset(spec);
  json manifest;
  manifest["spec"] = synth_spec_to_json(spec);
  manifest["records"] = json::array();
  double total_hours = 0.0;
  int total_seizures = 0;
  for (const auto& set : sets) {
    const fs::path sdir = out / set.subject_id;
    fs::create_directories(sdir);
    atomic_write_text(sdir / "summary.txt", summary_text(set));
    for (const auto& rec : set.records) {
      write_edf_file(rec, sdir / (rec.record_id + ".edf"));
      json r;
      r["subject"] = set.subject_id;
      r["record_id"] = rec.record_id;
      r["file"] = set.subject_id + "/" + rec.record_id + ".edf";
      r["duration_s"] = rec.duration_s;
      r["sample_rate_hz"] = rec.sample_rate_hz;
      json events = json::array();
      for (const auto& [s, e] : rec.seizure_events) events.push_back({s, e});
      r["events"] = events;
      manifest["records"].push_back(r);
      total_hours += rec.duration_s / 3600.0;
      total_seizures += static_cast<int>(rec.seizure_events.size());
    }
  }
  manifest["total_hours"] = total_hours;
  manifest["total_seizures"] = total_seizures;
  atomic_write_text(out / "manifest.json", manifest.dump(2) + "\n");
  atomic_write_text(out / "config.json", synth_spec_to_json(spec).dump(2) + "\n");
  std::cout << "wrote " << manifest["records"].size() << " records, "
            << format_fixed(total_hours, 3) << " hours, " << total_seizures << " seizures to "
            << out_dir << "\n";
  return 0;
}

// --- dataset loading ---------------------------------------------------------

struct DatasetOptions {
  std::vector<std::string> channels = kDefaultChannels;
  bool all_channels = false;
  int decimate_factor = 1;
};

RecordSet load_subject_dir(const fs::path& dir, const fs::path& summary_path,
                           const DatasetOptions& opt) {
  const std::string text(reinterpret_cast<const char*>(read_file_bytes(summary_path).data()),
                         read_file_bytes(summary_path).size());
  const auto events_by_file = parse_chbmit_summary(text);

  RecordSet set;
  set.subject_id = dir.filename().string();
  std::vector<fs::path> edfs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".edf") edfs.push_back(entry.path());
  }
  std::sort(edfs.begin(), edfs.end());
  if (edfs.empty()) throw DataError("no .edf files in " + dir.string());

  for (const auto& path : edfs) {
    Recording rec = parse_edf_file(path);
    const std::string fname = path.filename().string();
    const auto it = events_by_file.find(fname);
    if (it != events_by_file.end()) rec.seizure_events = it->second;
    if (!opt.all_channels) rec = select_channels(rec, opt.channels);
    if (opt.decimate_factor > 1) rec = decimate(rec, opt.decimate_factor);
    validate_recording(rec);
    set.records.push_back(std::move(rec));
  }
  return set;
}

std::vector<RecordSet> load_dataset(const std::string& data_dir, const std::string& summary_file,
                                    const DatasetOptions& opt) {
  const fs::path root(data_dir);
  if (!fs::exists(root)) throw DataError("dataset directory '" + data_dir + "' does not exist");

  if (!summary_file.empty()) {
    return {load_subject_dir(root, summary_file, opt)};
  }
  if (fs::exists(root / "summary.txt")) {
    return {load_subject_dir(root, root / "summary.txt", opt)};
  }
  std::vector<RecordSet> sets;
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "summary.txt")) {
      subdirs.push_back(entry.path());
    }
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& d : subdirs) sets.push_back(load_subject_dir(d, d / "summary.txt", opt));
  if (sets.empty()) {
    throw DataError("no subjects found under '" + data_dir +
                    "' (expected summary.txt next to the .edf files)");
  }
  return sets;
}

std::vector<LabeledWindow> all_windows(const RecordSet& set, double window_s, double stride_s,
                                       double min_overlap) {
  std::vector<LabeledWindow> out;
  for (const auto& r : set.records) {
    auto ws = windowize(r, window_s, stride_s, LabelRule{min_overlap});
    out.insert(out.end(), ws.begin(), ws.end());
  }
  return out;
}

// --- shared option bundles ----------------------------------------------------

struct CommonLoocvArgs {
  std::string data_dir;
  std::string summary_file;
  std::string out_dir;
  std::string channels_csv;
  int decimate_factor = 1;
  double window_s = 4.0;
  double stride_s = 0.0;  // 0 -> window_s
  double min_overlap = 0.5;
  double tolerance_s = 30.0;
  int seeds = 5;
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  std::string balance = "oversample";
  int patience = 0;  // 0 -> off
  std::string loss = "ce";
  double alpha = 0.0;
  double beta = 0.0;
  std::string alpha_grid_csv;
  std::string beta_grid_csv;
  std::string select = "bounded";
  double spec_floor = 99.0;
  uint64_t seed = 0;
  int threads = 0;  // 0 -> hardware
  bool force = false;
};

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

DatasetOptions dataset_options(const CommonLoocvArgs& a) {
  DatasetOptions opt;
  opt.decimate_factor = a.decimate_factor;
  if (a.channels_csv == "all") {
    opt.all_channels = true;
  } else if (!a.channels_csv.empty()) {
    opt.channels.clear();
    std::istringstream is(a.channels_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (!tok.empty()) opt.channels.push_back(tok);
    }
  }
  return opt;
}

TrainConfig train_config(const CommonLoocvArgs& a) {
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.learning_rate;
  if (a.optimizer == "adam") {
    tc.optimizer = Optimizer::adam;
  } else if (a.optimizer == "sgd") {
    tc.optimizer = Optimizer::sgd_momentum;
  } else {
    throw ConfigError("unknown --optimizer '" + a.optimizer + "' (adam|sgd)");
  }
  if (a.balance == "oversample") {
    tc.class_balance = ClassBalance::oversample_positive;
  } else if (a.balance == "none") {
    tc.class_balance = ClassBalance::none;
  } else {
    throw ConfigError("unknown --balance '" + a.balance + "' (oversample|none)");
  }
  if (a.patience > 0) tc.early_stop_patience = a.patience;
  tc.loss.alpha = a.alpha;
  tc.loss.beta = a.beta;
  tc.seed = a.seed;
  if (a.loss != "ce" && a.loss != "sswce") {
    throw ConfigError("unknown --loss '" + a.loss + "' (ce|sswce)");
  }
  if (a.loss == "ce" && a.alpha_grid_csv.empty() && (a.alpha != 0.0 || a.beta != 0.0)) {
    throw ConfigError("--loss ce does not take alpha/beta (use --loss sswce)");
  }
  validate_train_config(tc);
  return tc;
}

json loocv_config_json(const CommonLoocvArgs& a, const ModelConfig& mc) {
  json j;
  j["data"] = a.data_dir;
  j["channels"] = a.channels_csv.empty() ? "default-temporal" : a.channels_csv;
  j["decimate"] = a.decimate_factor;
  j["window_s"] = a.window_s;
  j["stride_s"] = a.stride_s > 0 ? a.stride_s : a.window_s;
  j["min_overlap"] = a.min_overlap;
  j["tolerance_s"] = a.tolerance_s;
  j["seeds"] = a.seeds;
  j["epochs"] = a.epochs;
  j["batch_size"] = a.batch_size;
  j["learning_rate"] = a.learning_rate;
  j["optimizer"] = a.optimizer;
  j["balance"] = a.balance;
  j["patience"] = a.patience;
  j["loss"] = a.loss;
  j["alpha"] = a.alpha;
  j["beta"] = a.beta;
  j["alpha_grid"] = a.alpha_grid_csv;
  j["beta_grid"] = a.beta_grid_csv;
  j["select"] = a.select;
  j["spec_floor"] = a.spec_floor;
  j["seed"] = a.seed;
  j["model_C"] = mc.channels_C;
  j["model_T"] = mc.samples_T;
  return j;
}

struct CellStore {
  std::mutex mu;
  std::map<std::pair<int, int>, TrainResult> cells;

  std::function<void(int, int, const TrainResult&)> collector() {
    return [this](int fold, int rep, const TrainResult& tr) {
      std::lock_guard<std::mutex> lock(mu);
      cells.emplace(std::make_pair(fold, rep), tr);
    };
  }
};

void write_cell_artifacts(const fs::path& dir, const CellStore& store) {
  for (const auto& [key, tr] : store.cells) {
    const std::string stem = "fold" + std::to_string(key.first) + "_rep" +
                             std::to_string(key.second);
    save_checkpoint(tr.model, dir / "checkpoints" / (stem + ".ckpt"));
    std::ostringstream os;
    for (size_t e = 0; e < tr.epoch_loss.size(); ++e) {
      json line;
      line["epoch"] = e;
      line["loss"] = tr.epoch_loss[e];
      os << line.dump() << "\n";
    }
    atomic_write_text(dir / "logs" / (stem + ".jsonl"), os.str());
  }
}

int cmd_loocv(const CommonLoocvArgs& a) {
  const DatasetOptions dopt = dataset_options(a);
  const auto sets = load_dataset(a.data_dir, a.summary_file, dopt);
  const double stride = a.stride_s > 0 ? a.stride_s : a.window_s;

  const int rate = sets.front().records.front().sample_rate_hz;
  ModelConfig mc;
  mc.channels_C = static_cast<int64_t>(sets.front().records.front().channels.size());
  mc.samples_T = static_cast<int64_t>(a.window_s * rate);

  const fs::path out(a.out_dir);
  require_empty_or_force(out, a.force);
  atomic_write_text(out / "config.json", loocv_config_json(a, mc).dump(2) + "\n");

  LoocvRunSpec spec;
  spec.model = mc;
  spec.train = train_config(a);
  spec.loocv.window_s = a.window_s;
  spec.loocv.stride_s = stride;
  spec.loocv.label_rule.min_overlap = a.min_overlap;
  spec.loocv.tolerance_s = a.tolerance_s;
  spec.loocv.seeds = a.seeds;
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int threads = a.threads > 0 ? a.threads : std::max(1, hw);
  if (!a.alpha_grid_csv.empty() || a.loss == "sswce") {
    spec.alpha_grid = parse_grid(a.alpha_grid_csv);
    spec.beta_grid = parse_grid(a.beta_grid_csv);
    if (a.loss == "sswce" && spec.alpha_grid.empty() && a.alpha_grid_csv.empty() &&
        a.alpha == 0.0 && a.beta == 0.0) {
      spec.alpha_grid = default_loss_weight_grid();
      spec.beta_grid = default_loss_weight_grid();
    }
    if (!spec.alpha_grid.empty() && spec.beta_grid.empty()) {
      throw ConfigError("--alpha-grid needs --beta-grid");
    }
  }
  const bool grid_mode = !spec.alpha_grid.empty();
  if (grid_mode) {
    spec.grid_threads = threads;
    spec.loocv.threads = 1;
  } else {
    spec.loocv.threads = threads;
  }
  if (a.select == "bounded") {
    spec.select = GridSelect::bounded_fph;
  } else if (a.select == "sensitivity") {
    spec.select = GridSelect::sensitivity;
  } else if (a.select == "spec-floor") {
    spec.select = GridSelect::sensitivity_at_spec;
    spec.spec_floor_pct = a.spec_floor;
  } else {
    throw ConfigError("unknown --select '" + a.select + "' (bounded|sensitivity|spec-floor)");
  }

  bool any_failed = false;
  std::vector<EvalReport> subject_raw, subject_smoothed;
  std::ostringstream tables;
  for (const auto& set : sets) {
    LoocvRunSpec sspec = spec;
    CellStore store;
    if (!grid_mode) sspec.loocv.on_trained = store.collector();

    SubjectOutcome outcome = run_subject(set, sspec);
    any_failed = any_failed || outcome.result.any_failed;

    const fs::path sdir = sets.size() == 1 ? out : out / set.subject_id;
    fs::create_directories(sdir);
    atomic_write_text(sdir / "runs.csv",
                      runs_csv_header() +
                          runs_csv(set.subject_id, outcome.alpha, outcome.beta, outcome.result));
    if (grid_mode) {
      atomic_write_text(sdir / "grid.csv", grid_csv(outcome.grid_runs));
      // train the selected cell's checkpoints (baseline cells are reported
      // in grid.csv; only the winner ships artifacts)
      LoocvOptions reopts = sspec.loocv;
      reopts.on_trained = store.collector();
      TrainConfig tc = sspec.train;
      tc.loss.alpha = outcome.alpha;
      tc.loss.beta = outcome.beta;
      run_loocv(set, sspec.model, tc, reopts);
    }
    write_cell_artifacts(sdir, store);
    const std::string table = aggregate_table(outcome);
    atomic_write_text(sdir / "aggregate.txt", table);
    tables << table;
    subject_raw.push_back(outcome.result.aggregate_raw);
    subject_smoothed.push_back(outcome.result.aggregate_smoothed);
  }

  if (sets.size() > 1) {
    const EvalReport overall_raw = aggregate_folds(subject_raw);
    const EvalReport overall_smoothed = aggregate_folds(subject_smoothed);
    std::ostringstream os;
    os << "all subjects  Sens " << format_fixed(overall_raw.window.sensitivity_pct, 2) << "% ("
       << format_fixed(overall_smoothed.window.sensitivity_pct, 2) << "%)  Spec "
       << format_fixed(overall_raw.window.specificity_pct, 2) << "% ("
       << format_fixed(overall_smoothed.window.specificity_pct, 2) << "%)  FP/h "
       << format_fixed(overall_raw.event.fp_per_hour, 2) << " ("
       << format_fixed(overall_smoothed.event.fp_per_hour, 2) << ")  Detected "
       << format_detected(overall_raw.event.detected, overall_raw.event.total) << " ("
       << format_detected(overall_smoothed.event.detected, overall_smoothed.event.total) << ")\n";
    tables << os.str();
    atomic_write_text(out / "aggregate.txt", tables.str());
  }
  std::cout << tables.str();
  return any_failed ? kExitRun : 0;
}

int cmd_train(const CommonLoocvArgs& a) {
  const DatasetOptions dopt = dataset_options(a);
  const auto sets = load_dataset(a.data_dir, a.summary_file, dopt);
  if (sets.size() != 1) throw ConfigError("train expects a single-subject dataset");
  const double stride = a.stride_s > 0 ? a.stride_s : a.window_s;
  const auto windows = all_windows(sets[0], a.window_s, stride, a.min_overlap);

  const int rate = sets[0].records.front().sample_rate_hz;
  ModelConfig mc;
  mc.channels_C = static_cast<int64_t>(sets[0].records.front().channels.size());
  mc.samples_T = static_cast<int64_t>(a.window_s * rate);

  const fs::path out(a.out_dir);
  require_empty_or_force(out, a.force);
  atomic_write_text(out / "config.json", loocv_config_json(a, mc).dump(2) + "\n");

  const TrainResult tr = train(mc, windows, train_config(a));
  save_checkpoint(tr.model, out / "model.ckpt");
  std::ostringstream os;
  for (size_t e = 0; e < tr.epoch_loss.size(); ++e) {
    json line;
    line["epoch"] = e;
    line["loss"] = tr.epoch_loss[e];
    os << line.dump() << "\n";
  }
  atomic_write_text(out / "train_log.jsonl", os.str());
  std::cout << "trained " << tr.steps << " steps over " << tr.epoch_loss.size()
            << " epochs; final loss " << format_fixed(tr.epoch_loss.back(), 6) << "\n";
  return 0;
}

// --- quantize ----------------------------------------------------------------

std::vector<Tensor> calibration_windows(const std::string& source, const DatasetOptions& dopt,
                                        double window_s, double stride_s, double min_overlap,
                                        int limit) {
  std::vector<LabeledWindow> windows;
  const fs::path p(source);
  if (fs::is_regular_file(p)) {
    windows = load_window_cache(p);
  } else {
    const auto sets = load_dataset(source, "", dopt);
    for (const auto& set : sets) {
      auto ws = all_windows(set, window_s, stride_s, min_overlap);
      windows.insert(windows.end(), ws.begin(), ws.end());
    }
  }
  if (windows.empty()) throw DataError("calibration source '" + source + "' yields no windows");
  if (limit > 0 && static_cast<int>(windows.size()) > limit) {
    windows.resize(static_cast<size_t>(limit));
  }
  std::vector<Tensor> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(normalized_input(w.data));
  return out;
}

int cmd_quantize(const std::string& checkpoint, const std::string& calib_source,
                 const std::string& out_bundle, bool percentile, int calib_count,
                 const CommonLoocvArgs& a) {
  const Model model = load_checkpoint(checkpoint);
  DatasetOptions dopt = dataset_options(a);
  const double stride = a.stride_s > 0 ? a.stride_s : a.window_s;
  const auto windows =
      calibration_windows(calib_source, dopt, a.window_s, stride, a.min_overlap, calib_count);
  for (const auto& w : windows) {
    if (w.extent(0) != model.config().channels_C || w.extent(1) != model.config().samples_T) {
      throw DataError("calibration windows (" + w.shape_string() +
                      ") do not match checkpoint model (C=" +
                      std::to_string(model.config().channels_C) +
                      ", T=" + std::to_string(model.config().samples_T) + ")");
    }
  }

  CalibOptions copt;
  copt.percentile_clip = percentile;
  const auto ranges = calibrate(model, windows, copt);
  const QuantizedModel qm = quantize_model(model, ranges);
  export_quantized(qm, out_bundle);
  atomic_write_text(fs::path(out_bundle).replace_extension(".manifest.txt"),
                    quantized_manifest(qm));

  // float-vs-INT8 comparison over the calibration windows
  int agree = 0;
  for (const auto& w : windows) {
    Tensor batch = w.reshaped({1, 1, model.config().channels_C, model.config().samples_T});
    const Tensor logits = model.forward(batch);
    const int fl = logits.at(0, 1) > logits.at(0, 0) ? 1 : 0;
    const auto q = quantized_forward(qm, w);
    const int ql = q.logits[1] > q.logits[0] ? 1 : 0;
    agree += fl == ql;
  }
  const double agreement = static_cast<double>(agree) / static_cast<double>(windows.size());
  std::ostringstream os;
  os << "metric,value\n";
  os << "argmax_agreement," << format_fixed(agreement, 6) << "\n";
  os << "windows," << windows.size() << "\n";
  atomic_write_text(fs::path(out_bundle).replace_extension(".compare.csv"), os.str());
  std::cout << "bundle written to " << out_bundle << "\n"
            << "argmax agreement float vs INT8 on " << windows.size()
            << " calibration windows: " << format_fixed(100.0 * agreement, 2) << "%\n";
  return 0;
}

// --- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& bundle, const std::string& data,
             const std::string& out_dir, bool table, const CommonLoocvArgs& a) {
  if (checkpoint.empty() == bundle.empty()) {
    throw ConfigError("eval needs exactly one of --checkpoint or --bundle");
  }
  const DatasetOptions dopt = dataset_options(a);
  const auto sets = load_dataset(data, a.summary_file, dopt);
  const double stride = a.stride_s > 0 ? a.stride_s : a.window_s;

  std::optional<Model> model;
  std::optional<QuantizedModel> qm;
  int64_t need_C, need_T;
  if (!checkpoint.empty()) {
    model = load_checkpoint(checkpoint);
    need_C = model->config().channels_C;
    need_T = model->config().samples_T;
  } else {
    qm = load_quantized(bundle);
    need_C = qm->channels_C;
    need_T = qm->samples_T;
  }

  const fs::path out(out_dir);
  fs::create_directories(out);
  std::ostringstream csv;
  csv << "subject,record,smoothing,tp,fp,tn,fn,sensitivity_pct,specificity_pct,"
         "fp_per_hour,detected,total\n";

  std::vector<EvalReport> raw_reports, smoothed_reports;
  for (const auto& set : sets) {
    for (const auto& rec : set.records) {
      const auto windows = windowize(rec, a.window_s, stride, LabelRule{a.min_overlap});
      if (windows.empty()) continue;
      if (windows.front().data.extent(0) != need_C || windows.front().data.extent(1) != need_T) {
        throw DataError("record '" + rec.record_id + "' windows " +
                        windows.front().data.shape_string() + " do not match model (C=" +
                        std::to_string(need_C) + ", T=" + std::to_string(need_T) + ")");
      }
      std::vector<uint8_t> pred;
      if (model) {
        pred = predict_labels(*model, windows);
      } else {
        pred.reserve(windows.size());
        for (const auto& w : windows) {
          const auto q = quantized_forward(*qm, normalized_input(w.data));
          pred.push_back(q.logits[1] > q.logits[0] ? 1 : 0);
        }
      }
      PredictionTrack track;
      track.record_id = rec.record_id;
      track.hop_s = stride;
      track.window_len_s = a.window_s;
      track.duration_h = rec.duration_s / 3600.0;
      for (const auto& w : windows) track.window_starts_s.push_back(w.start_s);
      track.raw_labels = pred;
      track.smoothed_labels = majority_smooth(pred);

      std::vector<uint8_t> truth(windows.size());
      for (size_t i = 0; i < windows.size(); ++i) truth[i] = static_cast<uint8_t>(windows[i].label);

      for (const bool smooth : {false, true}) {
        EvalReport r;
        r.window = window_metrics(smooth ? *track.smoothed_labels : track.raw_labels, truth);
        r.event = event_metrics(track, rec.seizure_events, a.tolerance_s, smooth);
        r.smoothed = smooth;
        r.record_ids = {rec.record_id};
        (smooth ? smoothed_reports : raw_reports).push_back(r);
        csv << set.subject_id << ',' << rec.record_id << ',' << (smooth ? "smoothed" : "raw")
            << ',' << format_fixed(r.window.tp, 1) << ',' << format_fixed(r.window.fp, 1) << ','
            << format_fixed(r.window.tn, 1) << ',' << format_fixed(r.window.fn, 1) << ','
            << (r.window.sensitivity_defined ? format_fixed(r.window.sensitivity_pct, 6)
                                             : "undefined")
            << ','
            << (r.window.specificity_defined ? format_fixed(r.window.specificity_pct, 6)
                                             : "undefined")
            << ',' << format_fixed(r.event.fp_per_hour, 6) << ','
            << format_fixed(r.event.detected, 1) << ',' << format_fixed(r.event.total, 1) << '\n';
      }
    }
  }
  atomic_write_text(out / "eval.csv", csv.str());
  const EvalReport araw = aggregate_folds(raw_reports);
  const EvalReport asm_ = aggregate_folds(smoothed_reports);
  if (table) {
    std::cout << "Sens " << format_fixed(araw.window.sensitivity_pct, 2) << "% ("
              << format_fixed(asm_.window.sensitivity_pct, 2) << "%)  Spec "
              << format_fixed(araw.window.specificity_pct, 2) << "% ("
              << format_fixed(asm_.window.specificity_pct, 2) << "%)  FP/h "
              << format_fixed(araw.event.fp_per_hour, 2) << " ("
              << format_fixed(asm_.event.fp_per_hour, 2) << ")  Detected "
              << format_detected(araw.event.detected, araw.event.total) << " ("
              << format_detected(asm_.event.detected, asm_.event.total) << ")\n";
  } else {
    std::cout << "wrote " << (out / "eval.csv").string() << "\n";
  }
  return 0;
}

// --- bench ----------------------------------------------------------------------

int cmd_bench(const std::string& checkpoint, const std::string& bundle, int repeats) {
  std::optional<Model> model;
  std::optional<QuantizedModel> qm;
  ModelConfig mc;
  if (!checkpoint.empty()) {
    model = load_checkpoint(checkpoint);
    mc = model->config();
  }
  if (!bundle.empty()) {
    qm = load_quantized(bundle);
    mc.channels_C = qm->channels_C;
    mc.samples_T = qm->samples_T;
    mc.activation = qm->activation;
  }
  if (!model && !qm) throw ConfigError("bench needs --checkpoint and/or --bundle");

  const MacCount macs = count_macs(mc);
  std::cout << "per-layer MACs:\n";
  for (const auto& [name, m] : macs.per_layer) {
    std::cout << "  " << name << ": " << m << "\n";
  }
  std::cout << "total MACs: " << macs.total << "\n";
  if (model) {
    std::cout << "float32 parameter bytes: " << model->parameter_count() * 4 << "\n";
  }
  if (qm) {
    int64_t pbytes = 0;
    for (const auto& c : qm->convs) {
      pbytes += static_cast<int64_t>(c.weights.size()) + static_cast<int64_t>(c.bias.size()) * 4;
    }
    pbytes += static_cast<int64_t>(qm->dense.weights.size()) +
              static_cast<int64_t>(qm->dense.bias.size()) * 4;
    std::cout << "int8 parameter bytes: " << pbytes << "\n";
  }

  Rng rng(1);
  Tensor window({mc.channels_C, mc.samples_T});
  for (auto& v : window.data()) v = static_cast<float>(rng.uniform(-2.0, 2.0));

  using clock = std::chrono::steady_clock;
  if (model) {
    Tensor batch = window.reshaped({1, 1, mc.channels_C, mc.samples_T});
    for (int i = 0; i < 10; ++i) (void)model->forward(batch);
    const auto t0 = clock::now();
    for (int i = 0; i < repeats; ++i) (void)model->forward(batch);
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    std::cout << "float path: " << format_fixed(repeats / dt, 1) << " windows/s, "
              << format_fixed(static_cast<double>(macs.total) * repeats / dt / 1e6, 1)
              << " MMAC/s\n";
  }
  if (qm) {
    const auto q_in = quantize_input(window, qm->input);
    for (int i = 0; i < 10; ++i) (void)quantized_forward_q(*qm, q_in);
    const auto t0 = clock::now();
    for (int i = 0; i < repeats; ++i) (void)quantized_forward_q(*qm, q_in);
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    std::cout << "int8 path: " << format_fixed(repeats / dt, 1) << " windows/s, "
              << format_fixed(static_cast<double>(macs.total) * repeats / dt / 1e6, 1)
              << " MMAC/s\n";
  }
  return 0;
}

// --- report ----------------------------------------------------------------------

int cmd_report(const std::string& runs_path) {
  const auto bytes = read_file_bytes(runs_path);
  std::istringstream is(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty runs csv");

  struct Key {
    std::string subject;
    int fold;
    bool smoothed;
    bool operator<(const Key& o) const {
      return std::tie(subject, fold, smoothed) < std::tie(o.subject, o.fold, o.smoothed);
    }
  };
  std::map<Key, std::vector<EvalReport>> cells;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    if (f.size() < 18 || f[7] == "failed") continue;
    EvalReport r;
    r.smoothed = f[7] == "smoothed";
    r.window.tp = std::stod(f[8]);
    r.window.fp = std::stod(f[9]);
    r.window.tn = std::stod(f[10]);
    r.window.fn = std::stod(f[11]);
    if (f[12] != "undefined") {
      r.window.sensitivity_pct = std::stod(f[12]);
      r.window.sensitivity_defined = true;
    }
    if (f[13] != "undefined") {
      r.window.specificity_pct = std::stod(f[13]);
      r.window.specificity_defined = true;
    }
    r.event.fp_per_hour = std::stod(f[14]);
    r.event.fp_runs = std::stod(f[15]);
    r.event.detected = std::stod(f[16]);
    r.event.total = std::stod(f[17]);
    cells[Key{f[0], std::stoi(f[1]), r.smoothed}].push_back(r);
  }
  if (cells.empty()) throw DataError("no usable rows in " + runs_path);

  for (const bool smoothed : {false, true}) {
    std::map<std::string, std::vector<EvalReport>> folds_by_subject;
    for (const auto& [key, reports] : cells) {
      if (key.smoothed != smoothed) continue;
      folds_by_subject[key.subject].push_back(aggregate_mean(reports));
    }
    for (const auto& [subject, folds] : folds_by_subject) {
      const EvalReport agg = aggregate_folds(folds);
      std::cout << subject << (smoothed ? " smoothed" : " raw     ") << "  Sens "
                << format_fixed(agg.window.sensitivity_pct, 2) << "%  Spec "
                << format_fixed(agg.window.specificity_pct, 2) << "%  FP/h "
                << format_fixed(agg.event.fp_per_hour, 2) << "  Detected "
                << format_detected(agg.event.detected, agg.event.total) << "\n";
    }
  }
  return 0;
}

void add_common_options(CLI::App* cmd, CommonLoocvArgs& a, bool with_train, bool with_out) {
  cmd->add_option("--channels", a.channels_csv,
                  "comma-separated channel labels, or 'all' (default: temporal montage)");
  cmd->add_option("--decimate", a.decimate_factor, "integer decimation factor");
  cmd->add_option("--window", a.window_s, "window length in seconds (default 4)");
  cmd->add_option("--stride", a.stride_s, "window stride in seconds (default: window length)");
  cmd->add_option("--min-overlap", a.min_overlap, "seizure overlap fraction for label 1");
  cmd->add_option("--tolerance", a.tolerance_s, "event detection tolerance in seconds");
  if (with_out) {
    cmd->add_option("--out", a.out_dir, "output directory")->required();
    cmd->add_flag("--force", a.force, "overwrite a non-empty output directory");
  }
  if (with_train) {
    cmd->add_option("--seeds", a.seeds, "seed repetitions per fold (default 5)");
    cmd->add_option("--epochs", a.epochs, "training epochs");
    cmd->add_option("--batch", a.batch_size, "batch size");
    cmd->add_option("--lr", a.learning_rate, "learning rate");
    cmd->add_option("--optimizer", a.optimizer, "adam|sgd");
    cmd->add_option("--balance", a.balance, "oversample|none");
    cmd->add_option("--patience", a.patience, "early-stop patience in epochs (0 = off)");
    cmd->add_option("--loss", a.loss, "ce|sswce");
    cmd->add_option("--alpha", a.alpha, "specificity weight (sswce)");
    cmd->add_option("--beta", a.beta, "sensitivity weight (sswce)");
    cmd->add_option("--alpha-grid", a.alpha_grid_csv, "comma-separated alpha candidates");
    cmd->add_option("--beta-grid", a.beta_grid_csv, "comma-separated beta candidates");
    cmd->add_option("--select", a.select, "grid selection: bounded|sensitivity|spec-floor");
    cmd->add_option("--spec-floor", a.spec_floor, "specificity floor for spec-floor selection");
    cmd->add_option("--seed", a.seed, "root seed");
    cmd->add_option("--threads", a.threads, "worker threads (0 = hardware)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seizure detection toolkit: synthetic EEG, training, LOOCV, INT8, scoring"};
  app.require_subcommand(1);

  // synth
  std::string spec_path, out_dir;
  bool force = false;
  auto* synth = app.add_subcommand("synth", "generate a synthetic EEG dataset (EDF + summary)");
  synth->add_option("--spec", spec_path, "synthetic dataset spec (json)")->required();
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_flag("--force", force, "overwrite a non-empty output directory");

  // loocv
  CommonLoocvArgs loocv_args;
  auto* loocv = app.add_subcommand("loocv", "leave-one-record-out training and evaluation");
  loocv->add_option("--data", loocv_args.data_dir, "dataset directory")->required();
  loocv->add_option("--summary", loocv_args.summary_file, "explicit summary file path");
  add_common_options(loocv, loocv_args, true, true);

  // train
  CommonLoocvArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train one model on every window of a subject");
  train_cmd->add_option("--data", train_args.data_dir, "dataset directory")->required();
  train_cmd->add_option("--summary", train_args.summary_file, "explicit summary file path");
  add_common_options(train_cmd, train_args, true, true);

  // quantize
  std::string q_checkpoint, q_calib, q_out;
  bool q_percentile = false;
  int q_count = 256;
  CommonLoocvArgs q_args;
  auto* quant = app.add_subcommand("quantize", "post-training INT8 quantization of a checkpoint");
  quant->add_option("--checkpoint", q_checkpoint, "trained model checkpoint")->required();
  quant->add_option("--calib", q_calib, "calibration source: dataset dir or window cache")
      ->required();
  quant->add_option("--out", q_out, "output bundle path")->required();
  quant->add_flag("--percentile", q_percentile, "99.9th percentile range clipping");
  quant->add_option("--calib-count", q_count, "max calibration windows (default 256)");
  add_common_options(quant, q_args, false, false);

  // eval
  std::string e_checkpoint, e_bundle, e_data, e_out;
  bool e_table = false;
  CommonLoocvArgs e_args;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint or INT8 bundle on a dataset");
  eval_cmd->add_option("--checkpoint", e_checkpoint, "float model checkpoint");
  eval_cmd->add_option("--bundle", e_bundle, "INT8 bundle");
  eval_cmd->add_option("--data", e_data, "dataset directory")->required();
  eval_cmd->add_option("--out", e_out, "output directory")->required();
  eval_cmd->add_option("--summary", e_args.summary_file, "explicit summary file path");
  eval_cmd->add_flag("--table", e_table, "print a table row instead of the csv path");
  add_common_options(eval_cmd, e_args, false, false);

  // bench
  std::string b_checkpoint, b_bundle;
  int b_repeats = 200;
  auto* bench = app.add_subcommand("bench", "MAC counts, parameter bytes, host throughput");
  bench->add_option("--checkpoint", b_checkpoint, "float model checkpoint");
  bench->add_option("--bundle", b_bundle, "INT8 bundle");
  bench->add_option("--repeats", b_repeats, "timed inferences (default 200)");

  // report
  std::string r_runs;
  auto* report = app.add_subcommand("report", "re-aggregate a runs.csv into a table");
  report->add_option("--runs", r_runs, "runs.csv from a loocv run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(spec_path, out_dir, force);
    if (loocv->parsed()) return cmd_loocv(loocv_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (quant->parsed()) {
      return cmd_quantize(q_checkpoint, q_calib, q_out, q_percentile, q_count, q_args);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(e_checkpoint, e_bundle, e_data, e_out, e_table, e_args);
    }
    if (bench->parsed()) return cmd_bench(b_checkpoint, b_bundle, b_repeats);
    if (report->parsed()) return cmd_report(r_runs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitRun;
  }
  return 0;
}
