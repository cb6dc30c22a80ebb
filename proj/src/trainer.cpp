#include "epidenet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

#include "epidenet/rng.hpp"

namespace epidenet {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (cfg.early_stop_patience && *cfg.early_stop_patience < 1) {
    throw ConfigError("early_stop_patience must be >= 1 when set");
  }
  validate_loss_config(cfg.loss);
}

Tensor normalized_input(const Tensor& window) {
  if (window.rank() != 2) {
    throw ShapeError("normalized_input expects a (C,T) window, got " + window.shape_string());
  }
  const int64_t C = window.extent(0), T = window.extent(1);
  Tensor out({C, T});
  for (int64_t c = 0; c < C; ++c) {
    const float* src = window.raw() + c * T;
    double mean = 0.0;
    for (int64_t t = 0; t < T; ++t) mean += src[t];
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (int64_t t = 0; t < T; ++t) {
      const double d = src[t] - mean;
      var += d * d;
    }
    var /= static_cast<double>(T);
    const double inv = 1.0 / (std::sqrt(var) + 1e-6);
    float* dst = out.raw() + c * T;
    for (int64_t t = 0; t < T; ++t) {
      dst[t] = static_cast<float>((src[t] - mean) * inv);
    }
  }
  return out;
}

std::vector<size_t> oversample_batch(Rng& rng, const std::vector<size_t>& positives,
                                     const std::vector<size_t>& negatives, int batch_size) {
  if (positives.empty() || negatives.empty() || batch_size < 1) {
    throw ConfigError("oversample_batch: needs non-empty pools and batch_size >= 1");
  }
  std::vector<size_t> batch(static_cast<size_t>(batch_size));
  for (auto& idx : batch) {
    const auto& pool = rng.uniform() < 0.5 ? positives : negatives;
    idx = pool[rng.uniform_int(pool.size())];
  }
  return batch;
}

namespace {

struct OptimizerState {
  std::vector<Tensor> m;  // momentum / first moment
  std::vector<Tensor> v;  // second moment (adam only)
  int64_t step = 0;

  void init(std::vector<Model::ParamRef>& params, bool adam) {
    for (const auto& p : params) {
      m.emplace_back(p.value->shape());
      if (adam) v.emplace_back(p.value->shape());
    }
  }
};

void apply_sgd_momentum(std::vector<Model::ParamRef>& params, OptimizerState& st, double lr) {
  constexpr float kMomentum = 0.9f;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].value->data();
    const auto& grad = params[i].grad->data();
    auto& mom = st.m[i].data();
    for (size_t j = 0; j < value.size(); ++j) {
      mom[j] = kMomentum * mom[j] + grad[j];
      value[j] -= static_cast<float>(lr) * mom[j];
    }
  }
}

void apply_adam(std::vector<Model::ParamRef>& params, OptimizerState& st, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++st.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].value->data();
    const auto& grad = params[i].grad->data();
    auto& m = st.m[i].data();
    auto& v = st.v[i].data();
    for (size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = static_cast<float>(kBeta1 * m[j] + (1.0 - kBeta1) * g);
      v[j] = static_cast<float>(kBeta2 * v[j] + (1.0 - kBeta2) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + kEps));
    }
  }
}

std::vector<Tensor> prepare_inputs(std::span<const LabeledWindow> windows, bool normalize,
                                   const ModelConfig& cfg) {
  std::vector<Tensor> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (w.data.rank() != 2 || w.data.extent(0) != cfg.channels_C ||
        w.data.extent(1) != cfg.samples_T) {
      throw ShapeError("window shape " + w.data.shape_string() + " does not match model (C=" +
                       std::to_string(cfg.channels_C) + ", T=" + std::to_string(cfg.samples_T) +
                       ")");
    }
    out.push_back(normalize ? normalized_input(w.data) : w.data);
  }
  return out;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, std::span<const LabeledWindow> windows,
                  const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (windows.empty()) throw ConfigError("train: no windows");

  std::vector<size_t> positives, negatives;
  for (size_t i = 0; i < windows.size(); ++i) {
    (windows[i].label ? positives : negatives).push_back(i);
  }
  if (cfg.class_balance == ClassBalance::oversample_positive &&
      (positives.empty() || negatives.empty())) {
    throw ConfigError("train: oversample_positive needs at least one window of each class (" +
                      std::to_string(positives.size()) + " positive, " +
                      std::to_string(negatives.size()) + " negative)");
  }

  ModelConfig mc = model_config;
  mc.seed = Rng::child_seed(cfg.seed, 0);
  Model model(mc);
  auto params = model.params();
  OptimizerState opt;
  opt.init(params, cfg.optimizer == Optimizer::adam);

  const std::vector<Tensor> inputs = prepare_inputs(windows, cfg.normalize, model_config);

  Rng shuffle_rng(Rng::child_seed(cfg.seed, 1));
  Rng sample_rng(Rng::child_seed(cfg.seed, 2));

  const int64_t C = model_config.channels_C, T = model_config.samples_T;
  const size_t n = windows.size();
  const int64_t steps_per_epoch =
      static_cast<int64_t>((n + static_cast<size_t>(cfg.batch_size) - 1) /
                           static_cast<size_t>(cfg.batch_size));

  std::vector<double> epoch_losses;
  int64_t steps = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  int stall = 0;

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.class_balance == ClassBalance::none) shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;

    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<size_t> batch_idx;
      if (cfg.class_balance == ClassBalance::oversample_positive) {
        batch_idx = oversample_batch(sample_rng, positives, negatives, cfg.batch_size);
      } else {
        const size_t b0 = static_cast<size_t>(step) * static_cast<size_t>(cfg.batch_size);
        const size_t b1 = std::min(n, b0 + static_cast<size_t>(cfg.batch_size));
        batch_idx.assign(order.begin() + static_cast<int64_t>(b0),
                         order.begin() + static_cast<int64_t>(b1));
      }

      const int64_t B = static_cast<int64_t>(batch_idx.size());
      Tensor batch({B, 1, C, T});
      std::vector<int> labels(static_cast<size_t>(B));
      for (int64_t b = 0; b < B; ++b) {
        const size_t idx = batch_idx[static_cast<size_t>(b)];
        std::copy(inputs[idx].data().begin(), inputs[idx].data().end(),
                  batch.data().begin() + b * C * T);
        labels[static_cast<size_t>(b)] = windows[idx].label;
      }

      Tensor logits = model.forward_train(batch);
      auto lr = sswce<float>(labels, logits, cfg.loss);
      if (!std::isfinite(lr.loss)) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(step));
      }
      model.zero_grad();
      model.backward(lr.d_logits);
      if (cfg.optimizer == Optimizer::adam) {
        apply_adam(params, opt, cfg.learning_rate);
      } else {
        apply_sgd_momentum(params, opt, cfg.learning_rate);
      }
      epoch_loss += lr.loss;
      ++steps;
    }

    epoch_loss /= static_cast<double>(steps_per_epoch);
    epoch_losses.push_back(epoch_loss);

    if (cfg.early_stop_patience) {
      if (epoch_loss < best_loss - 1e-6) {
        best_loss = epoch_loss;
        stall = 0;
      } else if (++stall >= *cfg.early_stop_patience) {
        break;
      }
    }
  }
  return TrainResult{std::move(model), std::move(epoch_losses), steps};
}

std::vector<uint8_t> predict_labels(const Model& model, std::span<const LabeledWindow> windows,
                                    bool normalize) {
  const auto& cfg = model.config();
  const std::vector<Tensor> inputs = prepare_inputs(windows, normalize, cfg);
  const int64_t C = cfg.channels_C, T = cfg.samples_T;
  std::vector<uint8_t> out(windows.size(), 0);
  constexpr int64_t kChunk = 64;
  for (size_t base = 0; base < inputs.size(); base += kChunk) {
    const int64_t B = static_cast<int64_t>(std::min<size_t>(kChunk, inputs.size() - base));
    Tensor batch({B, 1, C, T});
    for (int64_t b = 0; b < B; ++b) {
      std::copy(inputs[base + static_cast<size_t>(b)].data().begin(),
                inputs[base + static_cast<size_t>(b)].data().end(),
                batch.data().begin() + b * C * T);
    }
    const Tensor logits = model.forward(batch);
    for (int64_t b = 0; b < B; ++b) {
      out[base + static_cast<size_t>(b)] = logits.at(b, 1) > logits.at(b, 0) ? 1 : 0;
    }
  }
  return out;
}

FoldPlan make_fold_plan(const RecordSet& set) {
  for (const auto& r : set.records) validate_recording(r);
  const auto seizure_ids = set.seizure_record_ids();
  if (seizure_ids.size() < 2) {
    throw ConfigError("subject '" + set.subject_id + "' has " +
                      std::to_string(seizure_ids.size()) +
                      " seizure-containing record(s); leave-one-out needs >= 2 "
                      "(use a single-fold holdout instead)");
  }
  std::vector<std::string> all_ids;
  for (const auto& r : set.records) all_ids.push_back(r.record_id);
  std::sort(all_ids.begin(), all_ids.end());

  FoldPlan plan;
  plan.subject_id = set.subject_id;
  for (const auto& held : seizure_ids) {
    Fold f;
    f.held_out = held;
    for (const auto& id : all_ids) {
      if (id != held) f.training.push_back(id);
    }
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

namespace {

const Recording& find_record(const RecordSet& set, const std::string& id) {
  for (const auto& r : set.records) {
    if (r.record_id == id) return r;
  }
  throw DataError("record '" + id + "' not found in subject '" + set.subject_id + "'");
}

CellResult run_cell(const RecordSet& set, const FoldPlan& plan, int fold, int rep,
                    const ModelConfig& model_config, const TrainConfig& train_config,
                    const LoocvOptions& options,
                    const std::map<std::string, std::vector<LabeledWindow>>& windows_by_record) {
  CellResult cell;
  cell.fold = fold;
  cell.rep = rep;
  cell.held_out = plan.folds[static_cast<size_t>(fold)].held_out;
  cell.seed = Rng::child_seed(train_config.seed, static_cast<uint64_t>(fold) << 32 | 0x10000,
                              static_cast<uint64_t>(rep));

  const Recording& held = find_record(set, cell.held_out);
  const auto& eval_windows = windows_by_record.at(cell.held_out);

  std::vector<LabeledWindow> train_windows;
  for (const auto& id : plan.folds[static_cast<size_t>(fold)].training) {
    const auto& ws = windows_by_record.at(id);
    train_windows.insert(train_windows.end(), ws.begin(), ws.end());
  }
  // Leakage guard: the held-out record must never contribute training data.
  for (const auto& w : train_windows) {
    if (w.record_id == cell.held_out) {
      throw Error("LOOCV leakage: window from held-out record '" + cell.held_out +
                  "' in training set");
    }
  }

  std::vector<uint8_t> predicted;
  if (options.predictor_override) {
    predicted = options.predictor_override(train_windows, eval_windows, cell.seed);
  } else {
    TrainConfig tc = train_config;
    tc.seed = cell.seed;
    TrainResult tr = train(model_config, train_windows, tc);
    predicted = predict_labels(tr.model, eval_windows, tc.normalize);
    if (options.on_trained) options.on_trained(fold, rep, tr);
  }
  if (predicted.size() != eval_windows.size()) {
    throw Error("predictor returned " + std::to_string(predicted.size()) + " labels for " +
                std::to_string(eval_windows.size()) + " windows");
  }

  PredictionTrack track;
  track.record_id = cell.held_out;
  track.hop_s = options.stride_s;
  track.window_len_s = options.window_s;
  track.duration_h = held.duration_s / 3600.0;
  for (const auto& w : eval_windows) track.window_starts_s.push_back(w.start_s);
  track.raw_labels = predicted;
  track.smoothed_labels = majority_smooth(predicted);

  std::vector<uint8_t> truth(eval_windows.size());
  for (size_t i = 0; i < eval_windows.size(); ++i) {
    truth[i] = static_cast<uint8_t>(eval_windows[i].label);
  }

  cell.raw.window = window_metrics(track.raw_labels, truth);
  cell.raw.event = event_metrics(track, held.seizure_events, options.tolerance_s, false);
  cell.raw.record_ids = {cell.held_out};
  cell.raw.seed = cell.seed;
  cell.raw.smoothed = false;

  cell.smoothed.window = window_metrics(*track.smoothed_labels, truth);
  cell.smoothed.event = event_metrics(track, held.seizure_events, options.tolerance_s, true);
  cell.smoothed.record_ids = {cell.held_out};
  cell.smoothed.seed = cell.seed;
  cell.smoothed.smoothed = true;
  return cell;
}

}  // namespace

LoocvResult run_loocv(const RecordSet& set, const ModelConfig& model_config,
                      const TrainConfig& train_config, const LoocvOptions& options) {
  if (options.seeds < 1) throw ConfigError("run_loocv: seeds must be >= 1");
  LoocvResult result;
  result.plan = make_fold_plan(set);
  result.plan.repetitions = options.seeds;

  std::map<std::string, std::vector<LabeledWindow>> windows_by_record;
  for (const auto& r : set.records) {
    windows_by_record[r.record_id] =
        windowize(r, options.window_s, options.stride_s, options.label_rule);
  }

  const int folds = static_cast<int>(result.plan.folds.size());
  const int total = folds * options.seeds;
  result.cells.resize(static_cast<size_t>(total));

  const int threads =
      std::max(1, std::min(options.threads, total));
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= total) break;
      const int fold = i / options.seeds;
      const int rep = i % options.seeds;
      CellResult& cell = result.cells[static_cast<size_t>(i)];
      try {
        cell = run_cell(set, result.plan, fold, rep, model_config, train_config, options,
                        windows_by_record);
      } catch (const std::exception& e) {
        cell.fold = fold;
        cell.rep = rep;
        cell.held_out = result.plan.folds[static_cast<size_t>(fold)].held_out;
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<std::string> errors;
  for (int f = 0; f < folds; ++f) {
    std::vector<EvalReport> raw, smoothed;
    for (int k = 0; k < options.seeds; ++k) {
      const auto& cell = result.cells[static_cast<size_t>(f * options.seeds + k)];
      if (cell.failed) {
        result.any_failed = true;
        errors.push_back("fold " + std::to_string(f) + " rep " + std::to_string(k) + ": " +
                         cell.error);
        continue;
      }
      raw.push_back(cell.raw);
      smoothed.push_back(cell.smoothed);
    }
    if (raw.empty()) continue;  // whole fold failed; flagged above
    result.fold_raw.push_back(aggregate_mean(raw));
    result.fold_smoothed.push_back(aggregate_mean(smoothed));
  }
  if (result.fold_raw.empty()) {
    std::string detail;
    for (const auto& e : errors) detail += "\n  " + e;
    throw Error("run_loocv: every cell failed:" + detail);
  }
  result.aggregate_raw = aggregate_folds(result.fold_raw);
  result.aggregate_smoothed = aggregate_folds(result.fold_smoothed);
  return result;
}

}  // namespace epidenet
