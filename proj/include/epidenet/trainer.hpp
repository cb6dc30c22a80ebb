#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epidenet/dataio.hpp"
#include "epidenet/eval.hpp"
#include "epidenet/loss.hpp"
#include "epidenet/model.hpp"

namespace epidenet {

enum class Optimizer { sgd_momentum, adam };
enum class ClassBalance { none, oversample_positive };

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  LossConfig loss;
  ClassBalance class_balance = ClassBalance::oversample_positive;
  uint64_t seed = 0;
  std::optional<int> early_stop_patience;
  bool normalize = true;  // per-window, per-channel z-score before the net
};

void validate_train_config(const TrainConfig& cfg);

// Per-channel z-score of one (C,T) window. Applied identically at training,
// evaluation and quantization time.
Tensor normalized_input(const Tensor& window);

// Class-balanced batch: each slot flips a fair coin between the positive and
// negative pools, then draws uniformly inside the pool.
std::vector<size_t> oversample_batch(class Rng& rng, const std::vector<size_t>& positives,
                                     const std::vector<size_t>& negatives, int batch_size);

struct TrainResult {
  Model model;
  std::vector<double> epoch_loss;
  int64_t steps = 0;
};

// Deterministic given cfg.seed: initialization, shuffling and sampling all
// derive from it. Aborts with the epoch/step index if the loss goes
// non-finite.
TrainResult train(const ModelConfig& model_config, std::span<const LabeledWindow> windows,
                  const TrainConfig& cfg);

// Binary window predictions (argmax over the two logits).
std::vector<uint8_t> predict_labels(const Model& model, std::span<const LabeledWindow> windows,
                                    bool normalize = true);

struct Fold {
  std::string held_out;                // seizure-containing record
  std::vector<std::string> training;   // every other record, background included
};

struct FoldPlan {
  std::string subject_id;
  std::vector<Fold> folds;  // sorted by held-out record id
  int repetitions = 5;
};

// One fold per seizure-containing record; seizure-free records join every
// training set. Requires >= 2 seizure records.
FoldPlan make_fold_plan(const RecordSet& set);

struct LoocvOptions {
  double window_s = 4.0;
  double stride_s = 4.0;
  LabelRule label_rule;
  double tolerance_s = 30.0;
  int seeds = 5;
  int threads = 1;
  // Called per trained cell with the model and loss curve (not called when a
  // predictor override runs). May run on worker threads.
  std::function<void(int fold, int rep, const TrainResult&)> on_trained;
  // Test hook: replaces train+predict for a cell. Receives training windows,
  // evaluation windows and the cell seed; returns predicted labels.
  std::function<std::vector<uint8_t>(std::span<const LabeledWindow>,
                                     const std::vector<LabeledWindow>&, uint64_t)>
      predictor_override;
};

struct CellResult {
  int fold = 0;
  int rep = 0;
  uint64_t seed = 0;
  std::string held_out;
  EvalReport raw;
  EvalReport smoothed;
  bool failed = false;
  std::string error;
};

struct LoocvResult {
  FoldPlan plan;
  std::vector<CellResult> cells;               // fold-major, then rep
  std::vector<EvalReport> fold_raw;            // per-fold mean over seeds
  std::vector<EvalReport> fold_smoothed;
  EvalReport aggregate_raw;                    // fold means averaged, tallies summed
  EvalReport aggregate_smoothed;
  bool any_failed = false;
};

// Full leave-one-record-out protocol: train fold x seed cells, score the
// held-out record raw and smoothed, aggregate seeds then folds. Per-cell
// failures are flagged and do not abort the remaining cells.
LoocvResult run_loocv(const RecordSet& set, const ModelConfig& model_config,
                      const TrainConfig& train_config, const LoocvOptions& options);

}  // namespace epidenet
