#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "epidenet/model.hpp"
#include "epidenet/tensor.hpp"

// Post-training INT8 quantization and an integer-only inference path.
// Weights are per-tensor symmetric INT8 (zero point 0, -128 excluded),
// activations per-tensor affine INT8, biases INT32 at input*weight scale.
// INT32 accumulators are mapped back to INT8 with a fixed-point multiplier
// (m0, shift) where m0/2^31 * 2^shift approximates the real scale ratio.
// Rounding is half-away-from-zero throughout.

namespace epidenet {

struct QuantParams {
  double scale = 1.0;
  int32_t zero_point = 0;
};

// Affine params for an observed [lo, hi] range. The range is widened to
// include zero, and degenerate ranges are opened by +-1e-3 so the scale
// stays positive.
QuantParams quant_params_for_range(double lo, double hi);

// Symmetric per-tensor weight scale: max|w| / 127 (never zero).
double weight_scale_for(const Tensor& weights);

struct RequantMultiplier {
  int32_t m0 = 0;  // in [2^30, 2^31)
  int shift = 0;   // value represented: m0 / 2^31 * 2^shift
};

// Fixed-point encoding of a positive real multiplier, accurate to ~2^-31.
RequantMultiplier requant_multiplier(double real_multiplier);

// clamp-free core: round_half_away_from_zero(acc * m0 / 2^(31-shift)).
int32_t requantize(int32_t acc, RequantMultiplier m);

int8_t quantize_value(double x, const QuantParams& p);
double dequantize_value(int8_t q, const QuantParams& p);

// --- Calibration ----------------------------------------------------------

struct ActivationRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct ActivationRanges {
  ActivationRange input;
  std::array<ActivationRange, Model::kConvCount> conv;  // post-activation
  ActivationRange logits;
};

struct CalibOptions {
  bool percentile_clip = false;  // default min/max
  double percentile = 99.9;      // symmetric: clip at (100-p) and p
};

// Runs the float model over the calibration windows (already preprocessed
// (C,T) tensors) and records per-point activation ranges.
ActivationRanges calibrate(const Model& model, std::span<const Tensor> windows,
                           const CalibOptions& options = {});

// --- Quantized model -------------------------------------------------------

struct QConvLayer {
  std::vector<int64_t> weight_shape;  // (Cout, Cin, kh, kw) or (K, F) for dense
  std::vector<int8_t> weights;
  std::vector<int32_t> bias;
  double weight_scale = 1.0;
  QuantParams output;
  RequantMultiplier requant;
  bool relu_fused = false;
};

struct QuantizedModel {
  int64_t channels_C = 0;
  int64_t samples_T = 0;
  Activation activation = Activation::relu;
  QuantParams input;
  std::array<QConvLayer, Model::kConvCount> convs;
  std::array<PoolExtent, 4> pools;
  QConvLayer dense;
};

QuantizedModel quantize_model(const Model& model, const ActivationRanges& ranges);

// --- Integer-only inference -------------------------------------------------

TensorT<int8_t> quantize_input(const Tensor& window, const QuantParams& params);

// Integer kernels; accumulate in INT32 exactly, no float in the hot path.
TensorT<int8_t> quantized_conv2d(const TensorT<int8_t>& input, const QConvLayer& layer,
                                 int32_t input_zero_point);
TensorT<int8_t> quantized_maxpool(const TensorT<int8_t>& input, PoolExtent pool);
TensorT<int8_t> quantized_global_avg_pool(const TensorT<int8_t>& input);
std::vector<int8_t> quantized_dense(const TensorT<int8_t>& input, const QConvLayer& layer,
                                    int32_t input_zero_point);

struct QForwardResult {
  std::array<int8_t, 2> q_logits{};
  std::array<double, 2> logits{};  // dequantized
};

// window: float (C,T), same preprocessing as training. Quantizes the input
// with the model's input params and runs the integer pipeline.
QForwardResult quantized_forward(const QuantizedModel& qm, const Tensor& window);
QForwardResult quantized_forward_q(const QuantizedModel& qm, const TensorT<int8_t>& q_window);

// --- Deployment bundle -------------------------------------------------------

// Self-describing binary bundle plus a human-readable manifest (per-layer
// MACs, parameter bytes, activation bytes).
void export_quantized(const QuantizedModel& qm, const std::filesystem::path& bundle_path);
QuantizedModel load_quantized(const std::filesystem::path& bundle_path);
std::string quantized_manifest(const QuantizedModel& qm);

}  // namespace epidenet
