#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "roadinspect/error.hpp"

namespace roadinspect {

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  double epsilon = 1e-7;  // probability clamp before log
};

struct LossGrad {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d logit
};

namespace detail {

// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

/// Sigmoid focal cross-entropy on a logit. y may be a smoothed target in [0,1].
///
///   p = sigmoid(z) clamped to [eps, 1 - eps]
///   loss = -a y (1-p)^g log p - (1-a)(1-y) p^g log(1-p)
///
/// The gradient is taken through the clamp, so it is zero wherever the clamp
/// is active.
inline LossGrad sigmoid_focal_ce(double z, double y, const FocalConfig& cfg = {}) {
  const double eps = cfg.epsilon;
  // p and 1-p are evaluated separately to keep the small tail accurate.
  double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  double q = z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
  double log_p = -detail::softplus(-z);
  double log_q = -detail::softplus(z);
  bool clamped = false;
  if (p < eps) {
    p = eps;
    q = 1.0 - eps;
    log_p = std::log(p);
    log_q = std::log1p(-eps);
    clamped = true;
  } else if (q < eps) {
    q = eps;
    p = 1.0 - eps;
    log_p = std::log1p(-eps);
    log_q = std::log(q);
    clamped = true;
  }
  const double a = cfg.alpha, g = cfg.gamma;
  const double pos_w = a * y * std::pow(q, g);
  const double neg_w = (1.0 - a) * (1.0 - y) * std::pow(p, g);
  LossGrad r;
  r.loss = -pos_w * log_p - neg_w * log_q;
  if (!clamped) {
    // dp/dz = p q folded into each term.
    r.grad = pos_w * (g * p * log_p - q) + neg_w * (p - g * q * log_q);
  }
  return r;
}

/// Numerically stable binary cross-entropy on a logit.
inline LossGrad bce_with_logits(double z, double y) {
  LossGrad r;
  r.loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  r.grad = (z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z))) - y;
  return r;
}

/// y * (1 - eps) + eps / 2.
inline double label_smooth(double y, double eps) { return y * (1.0 - eps) + eps / 2.0; }

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  // Set when the ratio had a zero denominator and was reported as 1.0.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

/// Accuracy/precision/recall with p >= threshold classified positive.
inline BinaryMetrics binary_metrics(std::span<const double> probs, std::span<const int> labels,
                                    double threshold = 0.5) {
  if (probs.size() != labels.size()) {
    throw LengthMismatch("binary_metrics: " + std::to_string(probs.size()) + " probabilities vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (probs.empty()) throw LengthMismatch("binary_metrics: empty input");
  BinaryMetrics m;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    const bool pos = labels[i] != 0;
    if (pred && pos) ++m.tp;
    else if (pred) ++m.fp;
    else if (pos) ++m.fn;
    else ++m.tn;
  }
  const auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(probs.size());
  m.precision = ratio(m.tp, m.tp + m.fp, m.precision_undefined);
  m.recall = ratio(m.tp, m.tp + m.fn, m.recall_undefined);
  return m;
}

}  // namespace roadinspect
