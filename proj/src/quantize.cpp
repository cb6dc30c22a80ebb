#include "epidenet/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <sstream>

#include "epidenet/io_util.hpp"

namespace epidenet {

namespace {

constexpr double kDegenerateHalfWidth = 1e-3;
constexpr char kBundleMagic[4] = {'E', 'P', 'Q', 'B'};
constexpr uint32_t kBundleVersion = 1;

int64_t round_half_away(double x) {
  return static_cast<int64_t>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

}  // namespace

QuantParams quant_params_for_range(double lo, double hi) {
  if (!(hi >= lo)) throw ConfigError("quant range: hi < lo");
  if (hi - lo < 1e-12) {
    lo -= kDegenerateHalfWidth;
    hi += kDegenerateHalfWidth;
  }
  lo = std::min(lo, 0.0);  // zero must be exactly representable
  hi = std::max(hi, 0.0);
  QuantParams p;
  p.scale = (hi - lo) / 255.0;
  const double zp = -128.0 - lo / p.scale;
  p.zero_point = static_cast<int32_t>(std::clamp<int64_t>(round_half_away(zp), -128, 127));
  return p;
}

double weight_scale_for(const Tensor& weights) {
  double amax = 0.0;
  for (float w : weights.data()) amax = std::max(amax, std::abs(static_cast<double>(w)));
  if (amax < 1e-12) amax = kDegenerateHalfWidth;
  return amax / 127.0;
}

RequantMultiplier requant_multiplier(double real_multiplier) {
  if (!(real_multiplier > 0.0)) {
    throw ConfigError("requant multiplier must be positive, got " +
                      std::to_string(real_multiplier));
  }
  int exp = 0;
  const double frac = std::frexp(real_multiplier, &exp);  // frac in [0.5, 1)
  int64_t m0 = round_half_away(frac * 2147483648.0);      // * 2^31
  if (m0 == (int64_t{1} << 31)) {
    m0 >>= 1;
    ++exp;
  }
  RequantMultiplier m;
  m.m0 = static_cast<int32_t>(m0);
  m.shift = exp;
  return m;
}

int32_t requantize(int32_t acc, RequantMultiplier m) {
  // round_half_away_from_zero((acc * m0) >> (31 - shift)), in 128-bit so the
  // shift never overflows even for very small multipliers.
  const int total_shift = 31 - m.shift;
  __int128 prod = static_cast<__int128>(acc) * static_cast<__int128>(m.m0);
  if (total_shift <= 0) {
    prod <<= -total_shift;
    return static_cast<int32_t>(prod);
  }
  const __int128 half = static_cast<__int128>(1) << (total_shift - 1);
  __int128 rounded;
  if (prod >= 0) {
    rounded = (prod + half) >> total_shift;
  } else {
    rounded = -((-prod + half) >> total_shift);
  }
  return static_cast<int32_t>(rounded);
}

int8_t quantize_value(double x, const QuantParams& p) {
  const int64_t q = round_half_away(x / p.scale) + p.zero_point;
  return static_cast<int8_t>(std::clamp<int64_t>(q, -128, 127));
}

double dequantize_value(int8_t q, const QuantParams& p) {
  return p.scale * (static_cast<double>(q) - p.zero_point);
}

// --- Calibration ----------------------------------------------------------

namespace {

struct PointObserver {
  bool collect_all = false;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::vector<float> values;

  void observe(const Tensor& t) {
    for (float v : t.data()) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
      if (collect_all) values.push_back(v);
    }
  }

  ActivationRange range(const CalibOptions& opt) {
    if (!std::isfinite(lo)) throw ConfigError("calibrate: no observations");
    if (!opt.percentile_clip || values.empty()) return {lo, hi};
    std::sort(values.begin(), values.end());
    const double plo = (100.0 - opt.percentile) / 100.0;
    const double phi = opt.percentile / 100.0;
    const auto at = [&](double q) {
      const double pos = q * static_cast<double>(values.size() - 1);
      const size_t i = static_cast<size_t>(pos);
      const size_t j = std::min(i + 1, values.size() - 1);
      const double frac = pos - static_cast<double>(i);
      return (1.0 - frac) * values[i] + frac * values[j];
    };
    return {at(plo), at(phi)};
  }
};

}  // namespace

ActivationRanges calibrate(const Model& model, std::span<const Tensor> windows,
                           const CalibOptions& options) {
  if (windows.empty()) throw ConfigError("calibrate: need at least one calibration window");
  if (options.percentile_clip && !(options.percentile > 50.0 && options.percentile <= 100.0)) {
    throw ConfigError("calibrate: percentile must be in (50, 100]");
  }
  const auto& cfg = model.config();
  const bool relu = cfg.activation == Activation::relu;

  PointObserver input_obs;
  input_obs.collect_all = options.percentile_clip;
  std::array<PointObserver, Model::kConvCount> conv_obs;
  for (auto& o : conv_obs) o.collect_all = options.percentile_clip;
  PointObserver logits_obs;
  logits_obs.collect_all = options.percentile_clip;

  for (const auto& w : windows) {
    if (w.rank() != 2 || w.extent(0) != cfg.channels_C || w.extent(1) != cfg.samples_T) {
      throw ShapeError("calibrate: window shape " + w.shape_string() + " does not match model");
    }
    Tensor x = w.reshaped({1, 1, cfg.channels_C, cfg.samples_T});
    input_obs.observe(x);
    for (int i = 0; i < Model::kConvCount; ++i) {
      const auto& c = model.conv(i);
      x = conv2d_forward(x, c.weights(), c.bias());
      if (relu) x = relu_forward(x);
      conv_obs[static_cast<size_t>(i)].observe(x);
      x = i < 4 ? maxpool_forward(x, model.pool(i)) : global_avg_pool(x);
    }
    x = x.reshaped({1, int64_t{16}});
    const Tensor logits = dense_forward(x, model.dense().weights(), model.dense().bias());
    logits_obs.observe(logits);
  }

  ActivationRanges r;
  r.input = input_obs.range(options);
  for (int i = 0; i < Model::kConvCount; ++i) {
    r.conv[static_cast<size_t>(i)] = conv_obs[static_cast<size_t>(i)].range(options);
  }
  r.logits = logits_obs.range(options);
  return r;
}

// --- Quantized model construction -------------------------------------------

namespace {

QConvLayer quantize_layer(const Tensor& weights, const Tensor& bias, const QuantParams& in_params,
                          const ActivationRange& out_range, bool relu_fused) {
  QConvLayer q;
  q.weight_shape = weights.shape();
  q.weight_scale = weight_scale_for(weights);
  q.weights.reserve(weights.data().size());
  for (float w : weights.data()) {
    const int64_t v = round_half_away(static_cast<double>(w) / q.weight_scale);
    q.weights.push_back(static_cast<int8_t>(std::clamp<int64_t>(v, -127, 127)));
  }
  const double bias_scale = in_params.scale * q.weight_scale;
  q.bias.reserve(bias.data().size());
  for (float b : bias.data()) {
    const int64_t v = round_half_away(static_cast<double>(b) / bias_scale);
    q.bias.push_back(static_cast<int32_t>(
        std::clamp<int64_t>(v, std::numeric_limits<int32_t>::min() / 2,
                            std::numeric_limits<int32_t>::max() / 2)));
  }
  double lo = out_range.lo, hi = out_range.hi;
  if (relu_fused) lo = std::max(lo, 0.0);
  q.output = quant_params_for_range(lo, hi);
  q.requant = requant_multiplier(bias_scale / q.output.scale);
  q.relu_fused = relu_fused;
  return q;
}

}  // namespace

QuantizedModel quantize_model(const Model& model, const ActivationRanges& ranges) {
  const auto& cfg = model.config();
  const bool relu = cfg.activation == Activation::relu;
  QuantizedModel qm;
  qm.channels_C = cfg.channels_C;
  qm.samples_T = cfg.samples_T;
  qm.activation = cfg.activation;
  qm.input = quant_params_for_range(ranges.input.lo, ranges.input.hi);

  QuantParams in_params = qm.input;
  for (int i = 0; i < Model::kConvCount; ++i) {
    const auto& c = model.conv(i);
    qm.convs[static_cast<size_t>(i)] =
        quantize_layer(c.weights(), c.bias(), in_params, ranges.conv[static_cast<size_t>(i)], relu);
    in_params = qm.convs[static_cast<size_t>(i)].output;
    if (i < 4) qm.pools[static_cast<size_t>(i)] = model.pool(i);
  }
  qm.dense = quantize_layer(model.dense().weights(), model.dense().bias(), in_params,
                            ranges.logits, false);
  return qm;
}

// --- Integer kernels ----------------------------------------------------------

TensorT<int8_t> quantize_input(const Tensor& window, const QuantParams& params) {
  TensorT<int8_t> out(window.shape());
  for (int64_t i = 0; i < window.size(); ++i) {
    out[i] = quantize_value(window[i], params);
  }
  return out;
}

namespace {

int8_t requantize_to_output(int32_t acc, const QConvLayer& layer) {
  const int32_t v = requantize(acc, layer.requant) + layer.output.zero_point;
  const int32_t lower = layer.relu_fused ? layer.output.zero_point : -128;
  return static_cast<int8_t>(std::clamp(v, std::max(lower, -128), 127));
}

}  // namespace

TensorT<int8_t> quantized_conv2d(const TensorT<int8_t>& input, const QConvLayer& layer,
                                 int32_t input_zero_point) {
  if (input.rank() != 4 || layer.weight_shape.size() != 4) {
    throw ShapeError("quantized_conv2d: expects rank-4 input and weights");
  }
  const int64_t N = input.extent(0), Cin = input.extent(1);
  const int64_t H = input.extent(2), W = input.extent(3);
  const int64_t Cout = layer.weight_shape[0], kh = layer.weight_shape[2],
                kw = layer.weight_shape[3];
  if (layer.weight_shape[1] != Cin) {
    throw ShapeError("quantized_conv2d: channel mismatch");
  }
  const int64_t ph = (kh - 1) / 2;
  const int64_t pw = (kw - 1) / 2;
  TensorT<int8_t> out({N, Cout, H, W});
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t co = 0; co < Cout; ++co) {
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          int32_t acc = layer.bias[static_cast<size_t>(co)];
          for (int64_t ci = 0; ci < Cin; ++ci) {
            for (int64_t dy = 0; dy < kh; ++dy) {
              const int64_t iy = y + dy - ph;
              if (iy < 0 || iy >= H) continue;
              for (int64_t dx = 0; dx < kw; ++dx) {
                const int64_t ix = x + dx - pw;
                if (ix < 0 || ix >= W) continue;
                const int32_t xv =
                    static_cast<int32_t>(input.at(n, ci, iy, ix)) - input_zero_point;
                const int32_t wv = layer.weights[static_cast<size_t>(
                    ((co * Cin + ci) * kh + dy) * kw + dx)];
                acc += xv * wv;
              }
            }
          }
          out.at(n, co, y, x) = requantize_to_output(acc, layer);
        }
      }
    }
  }
  return out;
}

TensorT<int8_t> quantized_maxpool(const TensorT<int8_t>& input, PoolExtent pool) {
  return maxpool_forward(input, pool);
}

TensorT<int8_t> quantized_global_avg_pool(const TensorT<int8_t>& input) {
  const int64_t N = input.extent(0), C = input.extent(1);
  const int64_t H = input.extent(2), W = input.extent(3);
  TensorT<int8_t> out({N, C, 1, 1});
  const int32_t count = static_cast<int32_t>(H * W);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      int32_t sum = 0;
      const int8_t* base = input.raw() + ((n * C + c) * H) * W;
      for (int64_t i = 0; i < H * W; ++i) sum += base[i];
      // round-to-nearest (half away from zero) integer division
      int32_t q;
      if (sum >= 0) {
        q = (sum + count / 2) / count;
      } else {
        q = -((-sum + count / 2) / count);
      }
      out.at(n, c, 0, 0) = static_cast<int8_t>(std::clamp(q, -128, 127));
    }
  }
  return out;
}

std::vector<int8_t> quantized_dense(const TensorT<int8_t>& input, const QConvLayer& layer,
                                    int32_t input_zero_point) {
  const int64_t K = layer.weight_shape[0], F = layer.weight_shape[1];
  if (input.size() != F) throw ShapeError("quantized_dense: input size mismatch");
  std::vector<int8_t> out(static_cast<size_t>(K));
  for (int64_t k = 0; k < K; ++k) {
    int32_t acc = layer.bias[static_cast<size_t>(k)];
    for (int64_t f = 0; f < F; ++f) {
      const int32_t xv = static_cast<int32_t>(input[f]) - input_zero_point;
      const int32_t wv = layer.weights[static_cast<size_t>(k * F + f)];
      acc += xv * wv;
    }
    out[static_cast<size_t>(k)] = requantize_to_output(acc, layer);
  }
  return out;
}

QForwardResult quantized_forward_q(const QuantizedModel& qm, const TensorT<int8_t>& q_window) {
  if (q_window.rank() != 2 || q_window.extent(0) != qm.channels_C ||
      q_window.extent(1) != qm.samples_T) {
    throw ShapeError("quantized_forward: window shape " + q_window.shape_string() +
                     " does not match model (C=" + std::to_string(qm.channels_C) +
                     ", T=" + std::to_string(qm.samples_T) + ")");
  }
  TensorT<int8_t> x = q_window.reshaped({1, 1, qm.channels_C, qm.samples_T});
  int32_t zp_in = qm.input.zero_point;
  for (int i = 0; i < Model::kConvCount; ++i) {
    const auto& layer = qm.convs[static_cast<size_t>(i)];
    x = quantized_conv2d(x, layer, zp_in);
    x = i < 4 ? quantized_maxpool(x, qm.pools[static_cast<size_t>(i)])
              : quantized_global_avg_pool(x);
    zp_in = layer.output.zero_point;
  }
  x = x.reshaped({1, int64_t{16}});
  TensorT<int8_t> flat = x.reshaped({int64_t{16}});
  const auto q_logits = quantized_dense(flat, qm.dense, zp_in);

  QForwardResult r;
  r.q_logits = {q_logits[0], q_logits[1]};
  r.logits = {dequantize_value(q_logits[0], qm.dense.output),
              dequantize_value(q_logits[1], qm.dense.output)};
  return r;
}

QForwardResult quantized_forward(const QuantizedModel& qm, const Tensor& window) {
  return quantized_forward_q(qm, quantize_input(window, qm.input));
}

// --- Bundle ----------------------------------------------------------------

namespace {

void write_qlayer(ByteWriter& w, const QConvLayer& l) {
  w.write<uint32_t>(static_cast<uint32_t>(l.weight_shape.size()));
  for (int64_t d : l.weight_shape) w.write<int64_t>(d);
  w.write<double>(l.weight_scale);
  w.write<double>(l.output.scale);
  w.write<int32_t>(l.output.zero_point);
  w.write<int32_t>(l.requant.m0);
  w.write<int32_t>(l.requant.shift);
  w.write<uint8_t>(l.relu_fused ? 1 : 0);
  w.write<uint64_t>(l.weights.size());
  w.write_raw(l.weights.data(), l.weights.size());
  w.write<uint64_t>(l.bias.size());
  w.write_raw(l.bias.data(), l.bias.size() * sizeof(int32_t));
}

QConvLayer read_qlayer(ByteReader& r) {
  QConvLayer l;
  const uint32_t rank = r.read<uint32_t>();
  if (rank < 1 || rank > 4) throw FormatError("bundle: bad weight rank");
  for (uint32_t i = 0; i < rank; ++i) l.weight_shape.push_back(r.read<int64_t>());
  l.weight_scale = r.read<double>();
  l.output.scale = r.read<double>();
  l.output.zero_point = r.read<int32_t>();
  l.requant.m0 = r.read<int32_t>();
  l.requant.shift = r.read<int32_t>();
  l.relu_fused = r.read<uint8_t>() != 0;
  const uint64_t wn = r.read<uint64_t>();
  if (wn != static_cast<uint64_t>(Tensor::element_count(l.weight_shape))) {
    throw FormatError("bundle: weight payload size does not match shape");
  }
  l.weights.resize(wn);
  r.read_raw(l.weights.data(), wn);
  const uint64_t bn = r.read<uint64_t>();
  l.bias.resize(bn);
  r.read_raw(l.bias.data(), bn * sizeof(int32_t));
  return l;
}

}  // namespace

void export_quantized(const QuantizedModel& qm, const std::filesystem::path& bundle_path) {
  ByteWriter w;
  w.write_raw(kBundleMagic, 4);
  w.write<uint32_t>(kBundleVersion);
  w.write<int64_t>(qm.channels_C);
  w.write<int64_t>(qm.samples_T);
  w.write<uint8_t>(static_cast<uint8_t>(qm.activation));
  w.write<double>(qm.input.scale);
  w.write<int32_t>(qm.input.zero_point);
  for (const auto& c : qm.convs) write_qlayer(w, c);
  for (const auto& p : qm.pools) {
    w.write<int64_t>(p.h);
    w.write<int64_t>(p.w);
  }
  write_qlayer(w, qm.dense);
  atomic_write_bytes(bundle_path, w.bytes().data(), w.bytes().size());
}

QuantizedModel load_quantized(const std::filesystem::path& bundle_path) {
  const auto bytes = read_file_bytes(bundle_path);
  ByteReader r(bytes, "bundle " + bundle_path.string());
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kBundleMagic, 4) != 0) {
    throw FormatError("bundle " + bundle_path.string() + ": bad magic bytes");
  }
  if (r.read<uint32_t>() != kBundleVersion) {
    throw FormatError("bundle " + bundle_path.string() + ": unsupported version");
  }
  QuantizedModel qm;
  qm.channels_C = r.read<int64_t>();
  qm.samples_T = r.read<int64_t>();
  qm.activation = static_cast<Activation>(r.read<uint8_t>());
  qm.input.scale = r.read<double>();
  qm.input.zero_point = r.read<int32_t>();
  for (auto& c : qm.convs) c = read_qlayer(r);
  for (auto& p : qm.pools) {
    p.h = r.read<int64_t>();
    p.w = r.read<int64_t>();
  }
  qm.dense = read_qlayer(r);
  if (!r.done()) throw FormatError("bundle " + bundle_path.string() + ": trailing bytes");
  return qm;
}

std::string quantized_manifest(const QuantizedModel& qm) {
  ModelConfig cfg;
  cfg.channels_C = qm.channels_C;
  cfg.samples_T = qm.samples_T;
  cfg.activation = qm.activation;
  const MacCount macs = count_macs(cfg);
  const auto shapes = intermediate_shapes(cfg);

  std::ostringstream os;
  os << "quantized model manifest\n";
  os << "input: C=" << qm.channels_C << " T=" << qm.samples_T
     << " scale=" << format_fixed(qm.input.scale, 9) << " zp=" << qm.input.zero_point << "\n";
  os << "layer            macs  param_bytes  activation_bytes\n";
  int64_t total_params = 0, total_act = 0;
  size_t shape_idx = 0;
  auto act_bytes = [&](const std::string& name) {
    for (; shape_idx < shapes.size(); ++shape_idx) {
      if (shapes[shape_idx].name == name) {
        int64_t b = 1;
        for (int64_t d : shapes[shape_idx].output_shape) b *= d;
        return b;  // int8: one byte per element
      }
    }
    return int64_t{0};
  };
  auto emit = [&](const std::string& name, int64_t mac, const QConvLayer& l) {
    const int64_t pbytes = static_cast<int64_t>(l.weights.size()) +
                           static_cast<int64_t>(l.bias.size()) * 4;
    const int64_t abytes = act_bytes(name);
    total_params += pbytes;
    total_act = std::max(total_act, abytes);
    os << name;
    for (size_t i = name.size(); i < 8; ++i) os << ' ';
    os << std::setw(12) << mac << std::setw(13) << pbytes << std::setw(18) << abytes << "\n";
  };
  for (int i = 0; i < Model::kConvCount; ++i) {
    emit("conv" + std::to_string(i + 1), macs.per_layer[static_cast<size_t>(i) * 2].second,
         qm.convs[static_cast<size_t>(i)]);
  }
  emit("dense", macs.per_layer.back().second, qm.dense);
  os << "total macs: " << macs.total << "\n";
  os << "total parameter bytes: " << total_params << "\n";
  os << "peak activation bytes (largest layer output): " << total_act << "\n";
  return os.str();
}

}  // namespace epidenet
