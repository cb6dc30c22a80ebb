#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epidenet/layers.hpp"
#include "epidenet/tensor.hpp"

namespace epidenet {

enum class Activation : uint8_t { none = 0, relu = 1 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct ModelConfig {
  int64_t channels_C = 4;
  int64_t samples_T = 1024;
  uint64_t seed = 0;
  Activation activation = Activation::relu;
};

// Six-block network: five conv blocks (conv + pool) and a dense head.
//   block 1: Conv2D 4 filters, kernel (1,4);  MaxPool (1,8)
//   block 2: Conv2D 16 filters, kernel (1,16); MaxPool (1,4)
//   block 3: Conv2D 16 filters, kernel (1,8);  MaxPool (1,4)
//   block 4: Conv2D 16 filters, kernel (16,1); MaxPool (4,1)
//   block 5: Conv2D 16 filters, kernel (8,1);  global average pool
//   block 6: Dense 16 -> 2
// Convs are same-padded, pools truncate, relu (configurable) after each conv.
class Model {
 public:
  static constexpr int kConvCount = 5;

  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // batch: (N, 1, C, T) -> logits (N, 2). Softmax is applied only inside the
  // loss / evaluation paths, never here.
  Tensor forward(const Tensor& batch) const;

  // Training-mode forward: caches activations for backward().
  Tensor forward_train(const Tensor& batch);

  // Backpropagates d_logits (N, 2); accumulates parameter gradients.
  void backward(const Tensor& d_logits);

  struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
  };
  std::vector<ParamRef> params();

  void zero_grad();

  int64_t parameter_count() const;

  Conv2DLayer<float>& conv(int i) { return convs_[static_cast<size_t>(i)]; }
  const Conv2DLayer<float>& conv(int i) const { return convs_[static_cast<size_t>(i)]; }
  DenseLayer<float>& dense() { return dense_; }
  const DenseLayer<float>& dense() const { return dense_; }
  PoolExtent pool(int i) const { return pools_[static_cast<size_t>(i)].pool(); }

 private:
  void check_batch(const Tensor& batch) const;

  ModelConfig config_;
  std::array<Conv2DLayer<float>, kConvCount> convs_;
  std::array<MaxPoolLayer<float>, 4> pools_;
  GlobalAvgPoolLayer<float> gap_;
  DenseLayer<float> dense_;
  std::array<ReluLayer<float>, kConvCount> relus_;
  bool train_cached_ = false;
};

// Parameters initialized fan-in-uniform from the config seed; identical seeds
// give bit-identical parameters. Throws ConfigError when T < 128 (the pooling
// chain needs T//128 >= 1) or C < 1.
Model build_model(const ModelConfig& config);

struct LayerShape {
  std::string name;                   // e.g. "conv1", "pool1", ...
  std::vector<int64_t> output_shape;  // (channels, height, width) or (features)
};

// Per-layer output shapes for a config, without building parameters.
std::vector<LayerShape> intermediate_shapes(const ModelConfig& config);

struct MacCount {
  std::vector<std::pair<std::string, int64_t>> per_layer;
  int64_t total = 0;
};

// Multiply-accumulate accounting: conv contributes Cout*Cin*kh*kw*Hout*Wout,
// dense F*K, pooling and activations zero.
MacCount count_macs(const ModelConfig& config);

// Checkpoint: magic, version, config block, then per-layer shape + raw
// little-endian float32 payloads. Round-trips bit-exactly.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace epidenet
