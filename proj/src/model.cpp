#include "epidenet/model.hpp"

#include <cmath>

#include "epidenet/io_util.hpp"
#include "epidenet/rng.hpp"

namespace epidenet {

namespace {

constexpr char kCheckpointMagic[4] = {'E', 'P', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;

struct ConvSpec {
  int64_t filters;
  int64_t kh;
  int64_t kw;
};

constexpr std::array<ConvSpec, Model::kConvCount> kConvSpecs = {{
    {4, 1, 4},
    {16, 1, 16},
    {16, 1, 8},
    {16, 16, 1},
    {16, 8, 1},
}};

constexpr std::array<PoolExtent, 4> kPoolSpecs = {{
    {1, 8},
    {1, 4},
    {1, 4},
    {4, 1},
}};

constexpr int64_t kDenseIn = 16;
constexpr int64_t kDenseOut = 2;

void validate_config(const ModelConfig& cfg) {
  if (cfg.channels_C < 1) {
    throw ConfigError("channels_C must be >= 1, got " + std::to_string(cfg.channels_C));
  }
  if (cfg.samples_T / 128 < 1) {
    throw ConfigError("samples_T=" + std::to_string(cfg.samples_T) +
                      " too small for the pooling chain (needs T//128 >= 1)");
  }
  if (cfg.channels_C / 4 < 1) {
    throw ConfigError("channels_C=" + std::to_string(cfg.channels_C) +
                      " too small for the pooling chain (needs C//4 >= 1)");
  }
}

Tensor init_uniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "none"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "none") return Activation::none;
  throw ConfigError("unknown activation '" + s + "' (expected relu|none)");
}

Model::Model(const ModelConfig& config) : config_(config) {
  validate_config(config_);
  Rng rng(config_.seed);
  int64_t in_ch = 1;
  for (int i = 0; i < kConvCount; ++i) {
    const auto& spec = kConvSpecs[static_cast<size_t>(i)];
    const int64_t fan_in = in_ch * spec.kh * spec.kw;
    Tensor w = init_uniform({spec.filters, in_ch, spec.kh, spec.kw}, fan_in, rng);
    Tensor b = init_uniform({spec.filters}, fan_in, rng);
    convs_[static_cast<size_t>(i)] = Conv2DLayer<float>(std::move(w), std::move(b));
    in_ch = spec.filters;
  }
  for (size_t i = 0; i < kPoolSpecs.size(); ++i) {
    pools_[i] = MaxPoolLayer<float>(kPoolSpecs[i]);
  }
  Tensor dw = init_uniform({kDenseOut, kDenseIn}, kDenseIn, rng);
  Tensor db = init_uniform({kDenseOut}, kDenseIn, rng);
  dense_ = DenseLayer<float>(std::move(dw), std::move(db));
}

Model build_model(const ModelConfig& config) { return Model(config); }

void Model::check_batch(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.extent(1) != 1 || batch.extent(2) != config_.channels_C ||
      batch.extent(3) != config_.samples_T) {
    throw ShapeError("batch shape " + batch.shape_string() + " does not match model input (N,1," +
                     std::to_string(config_.channels_C) + "," + std::to_string(config_.samples_T) +
                     ")");
  }
}

Tensor Model::forward(const Tensor& batch) const {
  check_batch(batch);
  const bool relu = config_.activation == Activation::relu;
  Tensor x = batch;
  for (int i = 0; i < kConvCount; ++i) {
    const auto& c = convs_[static_cast<size_t>(i)];
    x = conv2d_forward(x, c.weights(), c.bias());
    if (relu) x = relu_forward(x);
    if (i < 4) {
      x = maxpool_forward(x, kPoolSpecs[static_cast<size_t>(i)]);
    } else {
      x = global_avg_pool(x);
    }
  }
  x = x.reshaped({x.extent(0), kDenseIn});
  return dense_forward(x, dense_.weights(), dense_.bias());
}

Tensor Model::forward_train(const Tensor& batch) {
  check_batch(batch);
  const bool relu = config_.activation == Activation::relu;
  Tensor x = batch;
  for (int i = 0; i < kConvCount; ++i) {
    x = convs_[static_cast<size_t>(i)].forward(x, true);
    if (relu) x = relus_[static_cast<size_t>(i)].forward(x, true);
    if (i < 4) {
      x = pools_[static_cast<size_t>(i)].forward(x, true);
    } else {
      x = gap_.forward(x, true);
    }
  }
  x = x.reshaped({x.extent(0), kDenseIn});
  train_cached_ = true;
  return dense_.forward(x, true);
}

void Model::backward(const Tensor& d_logits) {
  if (!train_cached_) throw Error("model backward called before forward_train");
  const bool relu = config_.activation == Activation::relu;
  Tensor g = dense_.backward(d_logits);
  g = g.reshaped({g.extent(0), kDenseIn, 1, 1});
  for (int i = kConvCount - 1; i >= 0; --i) {
    if (i < 4) {
      g = pools_[static_cast<size_t>(i)].backward(g);
    } else {
      g = gap_.backward(g);
    }
    if (relu) g = relus_[static_cast<size_t>(i)].backward(g);
    g = convs_[static_cast<size_t>(i)].backward(g);
  }
}

std::vector<Model::ParamRef> Model::params() {
  std::vector<ParamRef> out;
  for (int i = 0; i < kConvCount; ++i) {
    auto& c = convs_[static_cast<size_t>(i)];
    const std::string tag = "conv" + std::to_string(i + 1);
    out.push_back({tag + ".weights", &c.weights(), &c.grad_weights()});
    out.push_back({tag + ".bias", &c.bias(), &c.grad_bias()});
  }
  out.push_back({"dense.weights", &dense_.weights(), &dense_.grad_weights()});
  out.push_back({"dense.bias", &dense_.bias(), &dense_.grad_bias()});
  return out;
}

void Model::zero_grad() {
  for (auto& c : convs_) c.zero_grad();
  dense_.zero_grad();
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const auto& c : convs_) n += c.weights().size() + c.bias().size();
  n += dense_.weights().size() + dense_.bias().size();
  return n;
}

std::vector<LayerShape> intermediate_shapes(const ModelConfig& config) {
  validate_config(config);
  std::vector<LayerShape> shapes;
  int64_t ch = 1, h = config.channels_C, w = config.samples_T;
  for (int i = 0; i < Model::kConvCount; ++i) {
    const auto& spec = kConvSpecs[static_cast<size_t>(i)];
    ch = spec.filters;  // same padding preserves (h, w)
    shapes.push_back({"conv" + std::to_string(i + 1), {ch, h, w}});
    if (i < 4) {
      const auto& p = kPoolSpecs[static_cast<size_t>(i)];
      h /= p.h;
      w /= p.w;
      shapes.push_back({"pool" + std::to_string(i + 1), {ch, h, w}});
    } else {
      h = 1;
      w = 1;
      shapes.push_back({"gap", {ch, h, w}});
    }
  }
  shapes.push_back({"dense", {kDenseOut}});
  return shapes;
}

MacCount count_macs(const ModelConfig& config) {
  validate_config(config);
  MacCount mc;
  int64_t in_ch = 1, h = config.channels_C, w = config.samples_T;
  for (int i = 0; i < Model::kConvCount; ++i) {
    const auto& spec = kConvSpecs[static_cast<size_t>(i)];
    const int64_t macs = spec.filters * in_ch * spec.kh * spec.kw * h * w;
    mc.per_layer.emplace_back("conv" + std::to_string(i + 1), macs);
    in_ch = spec.filters;
    if (i < 4) {
      const auto& p = kPoolSpecs[static_cast<size_t>(i)];
      h /= p.h;
      w /= p.w;
      mc.per_layer.emplace_back("pool" + std::to_string(i + 1), 0);
    } else {
      h = 1;
      w = 1;
      mc.per_layer.emplace_back("gap", 0);
    }
  }
  mc.per_layer.emplace_back("dense", kDenseIn * kDenseOut);
  for (const auto& [name, macs] : mc.per_layer) mc.total += macs;
  return mc;
}

namespace {

void write_param_tensor(ByteWriter& w, const Tensor& t) {
  w.write<uint32_t>(static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) w.write<int64_t>(t.extent(i));
  w.write_raw(t.data().data(), t.data().size() * sizeof(float));
}

void read_param_tensor(ByteReader& r, Tensor& t, const std::string& name) {
  const auto rank = r.read<uint32_t>();
  if (rank != static_cast<uint32_t>(t.rank())) {
    throw FormatError("checkpoint: " + name + " rank " + std::to_string(rank) +
                      " does not match model rank " + std::to_string(t.rank()));
  }
  for (int i = 0; i < t.rank(); ++i) {
    const auto d = r.read<int64_t>();
    if (d != t.extent(i)) {
      throw FormatError("checkpoint: " + name + " extent " + std::to_string(d) +
                        " does not match model extent " + std::to_string(t.extent(i)));
    }
  }
  r.read_raw(t.data().data(), t.data().size() * sizeof(float));
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.write_raw(kCheckpointMagic, 4);
  w.write<uint32_t>(kCheckpointVersion);
  const auto& cfg = model.config();
  w.write<int64_t>(cfg.channels_C);
  w.write<int64_t>(cfg.samples_T);
  w.write<uint8_t>(static_cast<uint8_t>(cfg.activation));
  w.write<uint64_t>(cfg.seed);
  w.write<uint32_t>(Model::kConvCount + 1);
  for (int i = 0; i < Model::kConvCount; ++i) {
    w.write<uint8_t>(0);  // conv
    write_param_tensor(w, model.conv(i).weights());
    write_param_tensor(w, model.conv(i).bias());
  }
  w.write<uint8_t>(1);  // dense
  write_param_tensor(w, model.dense().weights());
  write_param_tensor(w, model.dense().bias());
  atomic_write_bytes(path, w.bytes().data(), w.bytes().size());
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "checkpoint " + path.string());
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint " + path.string() + ": bad magic bytes");
  }
  const auto version = r.read<uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + ": unsupported version " +
                      std::to_string(version));
  }
  ModelConfig cfg;
  cfg.channels_C = r.read<int64_t>();
  cfg.samples_T = r.read<int64_t>();
  cfg.activation = static_cast<Activation>(r.read<uint8_t>());
  cfg.seed = r.read<uint64_t>();
  Model model(cfg);
  const auto layer_count = r.read<uint32_t>();
  if (layer_count != Model::kConvCount + 1) {
    throw FormatError("checkpoint " + path.string() + ": unexpected layer count " +
                      std::to_string(layer_count));
  }
  for (int i = 0; i < Model::kConvCount; ++i) {
    if (r.read<uint8_t>() != 0) {
      throw FormatError("checkpoint " + path.string() + ": layer " + std::to_string(i) +
                        " is not a conv layer");
    }
    const std::string tag = "conv" + std::to_string(i + 1);
    read_param_tensor(r, model.conv(i).weights(), tag + ".weights");
    read_param_tensor(r, model.conv(i).bias(), tag + ".bias");
  }
  if (r.read<uint8_t>() != 1) {
    throw FormatError("checkpoint " + path.string() + ": final layer is not dense");
  }
  read_param_tensor(r, model.dense().weights(), "dense.weights");
  read_param_tensor(r, model.dense().bias(), "dense.bias");
  if (!r.done()) {
    throw FormatError("checkpoint " + path.string() + ": trailing bytes after parameters");
  }
  return model;
}

}  // namespace epidenet
