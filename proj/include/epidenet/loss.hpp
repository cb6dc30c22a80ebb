#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epidenet/errors.hpp"
#include "epidenet/tensor.hpp"

// Cross-entropy plus sensitivity/specificity penalty terms:
//
//   loss = CE(y, p) + alpha * (1 - SP) + beta * (1 - SN)
//
// where p is the softmax probability of the positive class and SN/SP are
// soft (probability-weighted) confusion ratios over the batch, so the whole
// expression stays differentiable. With hard 0/1 predictions the soft counts
// reduce to the usual confusion matrix.

namespace epidenet {

struct LossConfig {
  double alpha = 0.0;
  double beta = 0.0;
  double epsilon = 1e-7;
};

inline void validate_loss_config(const LossConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.beta < 0.0) {
    throw ConfigError("loss weights must be non-negative (alpha=" + std::to_string(cfg.alpha) +
                      ", beta=" + std::to_string(cfg.beta) + ")");
  }
  if (!(cfg.epsilon > 0.0) || cfg.epsilon > 1e-6) {
    throw ConfigError("loss epsilon must be in (0, 1e-6], got " + std::to_string(cfg.epsilon));
  }
}

template <typename T>
struct SoftConfusionT {
  T tp{}, fp{}, tn{}, fn{};
  T sn{}, sp{};
};

using SoftConfusion = SoftConfusionT<double>;

// tp = sum y*p, fn = sum y*(1-p), tn = sum (1-y)(1-p), fp = sum (1-y)*p;
// sn = tp/(tp+fn+eps), sp = tn/(tn+fp+eps).
template <typename T>
SoftConfusionT<T> soft_confusion(std::span<const int> y, std::span<const T> p, double eps = 1e-7) {
  if (y.empty() || y.size() != p.size()) {
    throw ConfigError("soft_confusion: need equal-length non-empty labels and probabilities");
  }
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double pi = static_cast<double>(p[i]);
    if (y[i]) {
      tp += pi;
      fn += 1.0 - pi;
    } else {
      fp += pi;
      tn += 1.0 - pi;
    }
  }
  SoftConfusionT<T> c;
  c.tp = static_cast<T>(tp);
  c.fp = static_cast<T>(fp);
  c.tn = static_cast<T>(tn);
  c.fn = static_cast<T>(fn);
  c.sn = static_cast<T>(tp / (tp + fn + eps));
  c.sp = static_cast<T>(tn / (tn + fp + eps));
  return c;
}

// Softmax probability of the positive class (logit column 1), clamped to
// [eps, 1-eps] so log arguments stay finite.
template <typename T>
std::vector<T> positive_probability(const TensorT<T>& logits, double eps = 1e-7) {
  if (logits.rank() != 2 || logits.extent(1) != 2) {
    throw ShapeError("logits must have shape (N,2), got " + logits.shape_string());
  }
  const int64_t n = logits.extent(0);
  std::vector<T> p(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(logits.at(i, 0)) - static_cast<double>(logits.at(i, 1));
    double v = 1.0 / (1.0 + std::exp(d));
    if (v < eps) v = eps;
    if (v > 1.0 - eps) v = 1.0 - eps;
    p[static_cast<size_t>(i)] = static_cast<T>(v);
  }
  return p;
}

template <typename T>
struct LossResultT {
  T loss{};
  T ce{};
  SoftConfusionT<T> confusion;
  TensorT<T> d_logits;  // (N,2)
};

using LossResult = LossResultT<float>;

// Loss value and its exact analytic gradient w.r.t. the two logits.
//
// With P = count of positive labels and Q = count of negatives, the soft
// ratios reduce to sn = tp/(P+eps) and sp = tn/(Q+eps), so
//   dL/dp_i = (1/N) dCE_i/dp_i + alpha*(1-y_i)/(Q+eps) - beta*y_i/(P+eps)
// chain-ruled through the softmax (dp/dz1 = p(1-p), dp/dz0 = -p(1-p); zero
// where the epsilon clamp is active).
template <typename T>
LossResultT<T> sswce(std::span<const int> y, const TensorT<T>& logits, const LossConfig& cfg) {
  validate_loss_config(cfg);
  if (logits.rank() != 2 || logits.extent(1) != 2) {
    throw ShapeError("logits must have shape (N,2), got " + logits.shape_string());
  }
  const int64_t n = logits.extent(0);
  if (n < 1 || static_cast<size_t>(n) != y.size()) {
    throw ConfigError("sswce: need one label per logit row (labels " + std::to_string(y.size()) +
                      ", rows " + std::to_string(n) + ")");
  }
  const double eps = cfg.epsilon;

  std::vector<double> p(static_cast<size_t>(n));
  std::vector<bool> clamped(static_cast<size_t>(n), false);
  double positives = 0, negatives = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(logits.at(i, 0)) - static_cast<double>(logits.at(i, 1));
    double v = 1.0 / (1.0 + std::exp(d));
    if (v < eps) {
      v = eps;
      clamped[static_cast<size_t>(i)] = true;
    } else if (v > 1.0 - eps) {
      v = 1.0 - eps;
      clamped[static_cast<size_t>(i)] = true;
    }
    p[static_cast<size_t>(i)] = v;
    if (y[static_cast<size_t>(i)]) {
      positives += 1.0;
    } else {
      negatives += 1.0;
    }
  }

  double ce = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const size_t k = static_cast<size_t>(i);
    ce += y[k] ? -std::log(p[k]) : -std::log(1.0 - p[k]);
  }
  ce /= static_cast<double>(n);

  const auto conf = soft_confusion<double>(y, std::span<const double>(p), eps);
  const double loss = ce + cfg.alpha * (1.0 - conf.sp) + cfg.beta * (1.0 - conf.sn);

  TensorT<T> d_logits({n, 2});
  for (int64_t i = 0; i < n; ++i) {
    const size_t k = static_cast<size_t>(i);
    const double pi = p[k];
    double dldp = (y[k] ? -1.0 / pi : 1.0 / (1.0 - pi)) / static_cast<double>(n);
    dldp += cfg.alpha * (y[k] ? 0.0 : 1.0 / (negatives + eps));
    dldp -= cfg.beta * (y[k] ? 1.0 / (positives + eps) : 0.0);
    const double dpdz1 = clamped[k] ? 0.0 : pi * (1.0 - pi);
    d_logits.at(i, 1) = static_cast<T>(dldp * dpdz1);
    d_logits.at(i, 0) = static_cast<T>(-dldp * dpdz1);
  }

  LossResultT<T> out;
  out.loss = static_cast<T>(loss);
  out.ce = static_cast<T>(ce);
  out.confusion.tp = static_cast<T>(conf.tp);
  out.confusion.fp = static_cast<T>(conf.fp);
  out.confusion.tn = static_cast<T>(conf.tn);
  out.confusion.fn = static_cast<T>(conf.fn);
  out.confusion.sn = static_cast<T>(conf.sn);
  out.confusion.sp = static_cast<T>(conf.sp);
  out.d_logits = std::move(d_logits);
  return out;
}

// Plain cross-entropy: Eq-form collapse of sswce at alpha = beta = 0.
template <typename T>
LossResultT<T> cross_entropy(std::span<const int> y, const TensorT<T>& logits,
                             double epsilon = 1e-7) {
  LossConfig cfg;
  cfg.epsilon = epsilon;
  return sswce(y, logits, cfg);
}

}  // namespace epidenet
