#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "epidenet/errors.hpp"
#include "epidenet/tensor.hpp"

// Forward and analytic backward passes for the exact layer set the network
// needs: same-padded conv2d, truncating maxpool, global average pool, dense
// and relu. Loops are ordered so the innermost axis streams contiguously.

namespace epidenet {

struct PoolExtent {
  int64_t h = 1;
  int64_t w = 1;
};

template <typename T>
struct LayerGradT {
  TensorT<T> d_input;
  std::optional<TensorT<T>> d_weights;  // absent for pooling / relu
  std::optional<TensorT<T>> d_bias;
};

using LayerGrad = LayerGradT<float>;

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Same-padding split: floor((k-1)/2) before, ceil((k-1)/2) after. The
// asymmetric split is what keeps even kernel widths size-preserving.
inline int64_t pad_before(int64_t k) { return (k - 1) / 2; }

}  // namespace detail

// out[n,co,y,x] = bias[co] + sum_{ci,dy,dx} in[n,ci,y+dy-ph,x+dx-pw] * w[co,ci,dy,dx]
// with zero padding so spatial extents are preserved.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& bias) {
  detail::require(input.rank() == 4, "conv2d: input must be rank 4, got " + input.shape_string());
  detail::require(weights.rank() == 4,
                  "conv2d: weights must be rank 4, got " + weights.shape_string());
  const int64_t N = input.extent(0), Cin = input.extent(1);
  const int64_t H = input.extent(2), W = input.extent(3);
  const int64_t Cout = weights.extent(0), kh = weights.extent(2), kw = weights.extent(3);
  detail::require(weights.extent(1) == Cin,
                  "conv2d: input channels " + std::to_string(Cin) + " != weight channels " +
                      std::to_string(weights.extent(1)));
  detail::require(bias.rank() == 1 && bias.extent(0) == Cout,
                  "conv2d: bias shape " + bias.shape_string() + " != (" + std::to_string(Cout) + ")");

  const int64_t ph = detail::pad_before(kh);
  const int64_t pw = detail::pad_before(kw);
  TensorT<T> out({N, Cout, H, W});

  for (int64_t n = 0; n < N; ++n) {
    for (int64_t co = 0; co < Cout; ++co) {
      T* out_base = out.raw() + ((n * Cout + co) * H) * W;
      const T b = bias[co];
      for (int64_t i = 0; i < H * W; ++i) out_base[i] = b;
      for (int64_t ci = 0; ci < Cin; ++ci) {
        for (int64_t dy = 0; dy < kh; ++dy) {
          for (int64_t dx = 0; dx < kw; ++dx) {
            const T wv = weights.at(co, ci, dy, dx);
            if (wv == T(0)) continue;
            const int64_t x_lo = std::max<int64_t>(0, pw - dx);
            const int64_t x_hi = std::min<int64_t>(W, W + pw - dx);
            if (x_lo >= x_hi) continue;
            const int64_t in_off = dx - pw;
            for (int64_t y = 0; y < H; ++y) {
              const int64_t iy = y + dy - ph;
              if (iy < 0 || iy >= H) continue;
              T* out_row = out_base + y * W;
              const T* in_row = input.raw() + (((n * Cin + ci) * H + iy) * W) + in_off;
              for (int64_t x = x_lo; x < x_hi; ++x) out_row[x] += wv * in_row[x];
            }
          }
        }
      }
    }
  }
  return out;
}

// Max over ph x pw tiles; trailing samples not filling a tile are dropped,
// so output extents are H/ph and W/pw with integer division. Optionally
// records the flat input index of each tile max for the backward pass.
template <typename T>
TensorT<T> maxpool_forward(const TensorT<T>& input, PoolExtent pool,
                           std::vector<int64_t>* argmax = nullptr) {
  detail::require(input.rank() == 4, "maxpool: input must be rank 4, got " + input.shape_string());
  detail::require(pool.h >= 1 && pool.w >= 1, "maxpool: pool extents must be >= 1");
  const int64_t N = input.extent(0), C = input.extent(1);
  const int64_t H = input.extent(2), W = input.extent(3);
  const int64_t Ho = H / pool.h, Wo = W / pool.w;
  if (Ho < 1 || Wo < 1) {
    throw ShapeError("maxpool: pool (" + std::to_string(pool.h) + "," + std::to_string(pool.w) +
                     ") larger than input extents " + input.shape_string());
  }
  TensorT<T> out({N, C, Ho, Wo});
  if (argmax) argmax->assign(static_cast<size_t>(out.size()), 0);

  int64_t o = 0;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const T* in_base = input.raw() + ((n * C + c) * H) * W;
      for (int64_t yo = 0; yo < Ho; ++yo) {
        for (int64_t xo = 0; xo < Wo; ++xo, ++o) {
          T best{};
          int64_t best_idx = -1;
          for (int64_t dy = 0; dy < pool.h; ++dy) {
            const int64_t iy = yo * pool.h + dy;
            const T* row = in_base + iy * W + xo * pool.w;
            for (int64_t dx = 0; dx < pool.w; ++dx) {
              if (best_idx < 0 || row[dx] > best) {
                best = row[dx];
                best_idx = ((n * C + c) * H + iy) * W + xo * pool.w + dx;
              }
            }
          }
          out[o] = best;
          if (argmax) (*argmax)[static_cast<size_t>(o)] = best_idx;
        }
      }
    }
  }
  return out;
}

// Mean over all H*W positions per channel -> (N,C,1,1).
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& input) {
  detail::require(input.rank() == 4, "gap: input must be rank 4, got " + input.shape_string());
  const int64_t N = input.extent(0), C = input.extent(1);
  const int64_t H = input.extent(2), W = input.extent(3);
  TensorT<T> out({N, C, 1, 1});
  const int64_t count = H * W;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const T* in_base = input.raw() + ((n * C + c) * H) * W;
      T sum = T(0);
      for (int64_t i = 0; i < count; ++i) sum += in_base[i];
      out.at(n, c, 0, 0) = sum / static_cast<T>(count);
    }
  }
  return out;
}

// out = input . weights^T + bias, input (N,F), weights (K,F), bias (K).
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& bias) {
  detail::require(input.rank() == 2, "dense: input must be rank 2, got " + input.shape_string());
  detail::require(weights.rank() == 2, "dense: weights must be rank 2, got " + weights.shape_string());
  const int64_t N = input.extent(0), F = input.extent(1);
  const int64_t K = weights.extent(0);
  detail::require(weights.extent(1) == F,
                  "dense: input features " + std::to_string(F) + " != weight columns " +
                      std::to_string(weights.extent(1)));
  detail::require(bias.rank() == 1 && bias.extent(0) == K,
                  "dense: bias shape " + bias.shape_string() + " != (" + std::to_string(K) + ")");
  TensorT<T> out({N, K});
  for (int64_t n = 0; n < N; ++n) {
    const T* in_row = input.raw() + n * F;
    for (int64_t k = 0; k < K; ++k) {
      const T* w_row = weights.raw() + k * F;
      T acc = bias[k];
      for (int64_t f = 0; f < F; ++f) acc += in_row[f] * w_row[f];
      out.at(n, k) = acc;
    }
  }
  return out;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
  TensorT<T> out = input;
  for (auto& x : out.data()) x = std::max(x, T(0));
  return out;
}

// --- Cached layers for training -------------------------------------------
//
// Each layer caches what its backward needs during forward(train=true);
// backward() returns d_input and accumulates parameter gradients in place.
// Calling backward before forward is rejected.

template <typename T>
class Conv2DLayer {
 public:
  Conv2DLayer() = default;
  Conv2DLayer(TensorT<T> weights, TensorT<T> bias)
      : weights_(std::move(weights)),
        bias_(std::move(bias)),
        grad_weights_(weights_.shape()),
        grad_bias_(bias_.shape()) {}

  TensorT<T> forward(const TensorT<T>& input, bool train = false) {
    if (train) {
      cached_input_ = input;
      has_cache_ = true;
    }
    return conv2d_forward(input, weights_, bias_);
  }

  TensorT<T> backward(const TensorT<T>& upstream) {
    if (!has_cache_) throw Error("conv2d backward called before forward");
    const TensorT<T>& in = cached_input_;
    const int64_t N = in.extent(0), Cin = in.extent(1), H = in.extent(2), W = in.extent(3);
    const int64_t Cout = weights_.extent(0), kh = weights_.extent(2), kw = weights_.extent(3);
    detail::require(upstream.shape() == std::vector<int64_t>({N, Cout, H, W}),
                    "conv2d backward: upstream shape " + upstream.shape_string() +
                        " does not match forward output");
    const int64_t ph = detail::pad_before(kh);
    const int64_t pw = detail::pad_before(kw);

    TensorT<T> d_input({N, Cin, H, W});
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t co = 0; co < Cout; ++co) {
        const T* g_base = upstream.raw() + ((n * Cout + co) * H) * W;
        {  // bias gradient
          T acc = T(0);
          for (int64_t i = 0; i < H * W; ++i) acc += g_base[i];
          grad_bias_[co] += acc;
        }
        for (int64_t ci = 0; ci < Cin; ++ci) {
          for (int64_t dy = 0; dy < kh; ++dy) {
            for (int64_t dx = 0; dx < kw; ++dx) {
              const int64_t x_lo = std::max<int64_t>(0, pw - dx);
              const int64_t x_hi = std::min<int64_t>(W, W + pw - dx);
              if (x_lo >= x_hi) continue;
              const int64_t in_off = dx - pw;
              const T wv = weights_.at(co, ci, dy, dx);
              T dw = T(0);
              for (int64_t y = 0; y < H; ++y) {
                const int64_t iy = y + dy - ph;
                if (iy < 0 || iy >= H) continue;
                const T* g_row = g_base + y * W;
                const T* in_row = in.raw() + (((n * Cin + ci) * H + iy) * W) + in_off;
                T* din_row = d_input.raw() + (((n * Cin + ci) * H + iy) * W) + in_off;
                for (int64_t x = x_lo; x < x_hi; ++x) {
                  dw += in_row[x] * g_row[x];
                  din_row[x] += wv * g_row[x];
                }
              }
              grad_weights_.at(co, ci, dy, dx) += dw;
            }
          }
        }
      }
    }
    return d_input;
  }

  TensorT<T>& weights() { return weights_; }
  TensorT<T>& bias() { return bias_; }
  const TensorT<T>& weights() const { return weights_; }
  const TensorT<T>& bias() const { return bias_; }
  TensorT<T>& grad_weights() { return grad_weights_; }
  TensorT<T>& grad_bias() { return grad_bias_; }

  void zero_grad() {
    std::fill(grad_weights_.data().begin(), grad_weights_.data().end(), T(0));
    std::fill(grad_bias_.data().begin(), grad_bias_.data().end(), T(0));
  }

 private:
  TensorT<T> weights_, bias_;
  TensorT<T> grad_weights_, grad_bias_;
  TensorT<T> cached_input_;
  bool has_cache_ = false;
};

template <typename T>
class MaxPoolLayer {
 public:
  MaxPoolLayer() = default;
  explicit MaxPoolLayer(PoolExtent pool) : pool_(pool) {}

  TensorT<T> forward(const TensorT<T>& input, bool train = false) {
    if (train) {
      TensorT<T> out = maxpool_forward(input, pool_, &argmax_);
      input_shape_ = input.shape();
      has_cache_ = true;
      return out;
    }
    return maxpool_forward(input, pool_);
  }

  TensorT<T> backward(const TensorT<T>& upstream) {
    if (!has_cache_) throw Error("maxpool backward called before forward");
    TensorT<T> d_input(input_shape_);
    const auto& g = upstream.data();
    detail::require(g.size() == argmax_.size(),
                    "maxpool backward: upstream size does not match forward output");
    for (size_t i = 0; i < argmax_.size(); ++i) {
      d_input[argmax_[i]] += g[i];
    }
    return d_input;
  }

  PoolExtent pool() const { return pool_; }

 private:
  PoolExtent pool_;
  std::vector<int64_t> argmax_;
  std::vector<int64_t> input_shape_;
  bool has_cache_ = false;
};

template <typename T>
class GlobalAvgPoolLayer {
 public:
  TensorT<T> forward(const TensorT<T>& input, bool train = false) {
    if (train) {
      input_shape_ = input.shape();
      has_cache_ = true;
    }
    return global_avg_pool(input);
  }

  TensorT<T> backward(const TensorT<T>& upstream) {
    if (!has_cache_) throw Error("gap backward called before forward");
    const int64_t N = input_shape_[0], C = input_shape_[1];
    const int64_t H = input_shape_[2], W = input_shape_[3];
    TensorT<T> d_input(input_shape_);
    const T inv = T(1) / static_cast<T>(H * W);
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t c = 0; c < C; ++c) {
        const T g = upstream.at(n, c, 0, 0) * inv;
        T* base = d_input.raw() + ((n * C + c) * H) * W;
        for (int64_t i = 0; i < H * W; ++i) base[i] = g;
      }
    }
    return d_input;
  }

 private:
  std::vector<int64_t> input_shape_;
  bool has_cache_ = false;
};

template <typename T>
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(TensorT<T> weights, TensorT<T> bias)
      : weights_(std::move(weights)),
        bias_(std::move(bias)),
        grad_weights_(weights_.shape()),
        grad_bias_(bias_.shape()) {}

  TensorT<T> forward(const TensorT<T>& input, bool train = false) {
    if (train) {
      cached_input_ = input;
      has_cache_ = true;
    }
    return dense_forward(input, weights_, bias_);
  }

  TensorT<T> backward(const TensorT<T>& upstream) {
    if (!has_cache_) throw Error("dense backward called before forward");
    const TensorT<T>& in = cached_input_;
    const int64_t N = in.extent(0), F = in.extent(1), K = weights_.extent(0);
    detail::require(upstream.shape() == std::vector<int64_t>({N, K}),
                    "dense backward: upstream shape " + upstream.shape_string() +
                        " does not match forward output");
    TensorT<T> d_input({N, F});
    for (int64_t n = 0; n < N; ++n) {
      const T* in_row = in.raw() + n * F;
      T* din_row = d_input.raw() + n * F;
      for (int64_t k = 0; k < K; ++k) {
        const T g = upstream.at(n, k);
        grad_bias_[k] += g;
        const T* w_row = weights_.raw() + k * F;
        T* dw_row = grad_weights_.raw() + k * F;
        for (int64_t f = 0; f < F; ++f) {
          dw_row[f] += g * in_row[f];
          din_row[f] += g * w_row[f];
        }
      }
    }
    return d_input;
  }

  TensorT<T>& weights() { return weights_; }
  TensorT<T>& bias() { return bias_; }
  const TensorT<T>& weights() const { return weights_; }
  const TensorT<T>& bias() const { return bias_; }
  TensorT<T>& grad_weights() { return grad_weights_; }
  TensorT<T>& grad_bias() { return grad_bias_; }

  void zero_grad() {
    std::fill(grad_weights_.data().begin(), grad_weights_.data().end(), T(0));
    std::fill(grad_bias_.data().begin(), grad_bias_.data().end(), T(0));
  }

 private:
  TensorT<T> weights_, bias_;
  TensorT<T> grad_weights_, grad_bias_;
  TensorT<T> cached_input_;
  bool has_cache_ = false;
};

template <typename T>
class ReluLayer {
 public:
  TensorT<T> forward(const TensorT<T>& input, bool train = false) {
    if (train) {
      mask_.assign(input.data().size(), 0);
      for (size_t i = 0; i < input.data().size(); ++i) mask_[i] = input.data()[i] > T(0);
      input_shape_ = input.shape();
      has_cache_ = true;
    }
    return relu_forward(input);
  }

  TensorT<T> backward(const TensorT<T>& upstream) {
    if (!has_cache_) throw Error("relu backward called before forward");
    TensorT<T> d_input(input_shape_);
    for (size_t i = 0; i < mask_.size(); ++i) {
      d_input.data()[i] = mask_[i] ? upstream.data()[i] : T(0);
    }
    return d_input;
  }

 private:
  std::vector<uint8_t> mask_;
  std::vector<int64_t> input_shape_;
  bool has_cache_ = false;
};

// --- Free backward wrappers -------------------------------------------------
// Convenience for gradient checks: zero the layer's parameter gradients, run
// one backward, and package (d_input, d_weights, d_bias).

template <typename T>
LayerGradT<T> layer_backward(Conv2DLayer<T>& layer, const TensorT<T>& upstream) {
  layer.zero_grad();
  LayerGradT<T> g;
  g.d_input = layer.backward(upstream);
  g.d_weights = layer.grad_weights();
  g.d_bias = layer.grad_bias();
  return g;
}

template <typename T>
LayerGradT<T> layer_backward(DenseLayer<T>& layer, const TensorT<T>& upstream) {
  layer.zero_grad();
  LayerGradT<T> g;
  g.d_input = layer.backward(upstream);
  g.d_weights = layer.grad_weights();
  g.d_bias = layer.grad_bias();
  return g;
}

template <typename T>
LayerGradT<T> layer_backward(MaxPoolLayer<T>& layer, const TensorT<T>& upstream) {
  LayerGradT<T> g;
  g.d_input = layer.backward(upstream);
  return g;
}

template <typename T>
LayerGradT<T> layer_backward(GlobalAvgPoolLayer<T>& layer, const TensorT<T>& upstream) {
  LayerGradT<T> g;
  g.d_input = layer.backward(upstream);
  return g;
}

template <typename T>
LayerGradT<T> layer_backward(ReluLayer<T>& layer, const TensorT<T>& upstream) {
  LayerGradT<T> g;
  g.d_input = layer.backward(upstream);
  return g;
}

}  // namespace epidenet
