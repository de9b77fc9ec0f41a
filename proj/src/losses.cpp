#include "bake/losses.hpp"

#include <cmath>
#include <string>

#include "bake/error.hpp"
#include "bake/numerics.hpp"

namespace bake {

namespace {

void check_labels(std::span<const int> labels, const Tensor& logits) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for logits " + logits.shape_string());
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw ShapeError("loss: label " + std::to_string(y) + " out of range [0," +
                       std::to_string(logits.cols()) + ")");
    }
  }
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0, got " + std::to_string(tau));
}

// Mean over rows of -sum_k targets(i,k) log softmax(logits)(i,k); targets
// are treated as normalized so the gradient is (softmax - targets) / N.
Var soft_cross_entropy(Var logits, Tensor targets) {
  const Tensor& z = logits.value();
  const Tensor logp = log_softmax_rows(z);
  const auto n = static_cast<double>(z.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double q = targets.data()[i];
    if (q != 0.0) total -= q * logp.data()[i];
  }
  return logits.tape().record(Tensor::scalar(total / n), {logits},
                              [logits, targets = std::move(targets), n](Tape& t, const Tensor& g) {
                                Tensor gz = softmax_rows(logits.value());
                                gz -= targets;
                                gz *= g.item() / n;
                                t.accumulate(logits, gz);
                              });
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
  check_tau(tau);
  if (!(smoothing_epsilon >= 0.0 && smoothing_epsilon < 1.0)) {
    throw ConfigError("smoothing epsilon must lie in [0,1), got " + std::to_string(smoothing_epsilon));
  }
}

Tensor temperature_probs(const Tensor& logits, double tau) {
  check_tau(tau);
  return softmax_rows(logits * (1.0 / tau));
}

Var temperature_probs(Var logits, double tau) {
  check_tau(tau);
  return softmax_rows(scale(logits, 1.0 / tau));
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  check_labels(labels, logits.value());
  return soft_cross_entropy(logits, one_hot(labels, logits.value().cols()));
}

Var kl_distillation(Var logits, const SoftTargetBatch& targets, double tau) {
  check_tau(tau);
  const Tensor& z = logits.value();
  require_same_shape(z, targets.values(), "kl_distillation");
  const Tensor& q = targets.values();
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double s = 0.0;
    for (double v : q.row(i)) s += v;
    if (std::abs(s - 1.0) > 1e-6) {
      throw NumericError("kl_distillation: target row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
  const Tensor scaled = z * (1.0 / tau);
  const Tensor logp = log_softmax_rows(scaled);
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double qv = q.data()[i];
    if (qv > 0.0) total += qv * (std::log(qv) - logp.data()[i]);
  }
  const auto n = static_cast<double>(z.rows());
  const double weight = tau * tau / n;
  // d/dz of tau^2 * KL(q || softmax(z / tau)) is tau * (p - q).
  return logits.tape().record(Tensor::scalar(weight * total), {logits},
                              [logits, q, tau, n](Tape& t, const Tensor& g) {
                                Tensor gz = temperature_probs(logits.value(), tau);
                                gz -= q;
                                gz *= g.item() * tau / n;
                                t.accumulate(logits, gz);
                              });
}

Var label_smoothing_loss(Var logits, std::span<const int> labels, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw ConfigError("smoothing epsilon must lie in [0,1), got " + std::to_string(epsilon));
  }
  check_labels(labels, logits.value());
  const std::size_t k = logits.value().cols();
  Tensor targets(labels.size(), k, epsilon / static_cast<double>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) targets(i, static_cast<std::size_t>(labels[i])) += 1.0 - epsilon;
  return soft_cross_entropy(logits, std::move(targets));
}

BakeLossTerms bake_loss(Var logits, Var features, std::span<const int> labels, const BakeConfig& bake_cfg,
                        const LossConfig& loss_cfg) {
  loss_cfg.validate();
  if (features.value().rows() != logits.value().rows()) {
    throw ShapeError("bake_loss: features " + features.value().shape_string() + " vs logits " +
                     logits.value().shape_string());
  }
  Var ce = cross_entropy(logits, labels);
  const SoftTargetBatch q = build_soft_targets(features.value(), logits.value(), labels, bake_cfg);
  Var kl = kl_distillation(logits, q, loss_cfg.tau);
  BakeLossTerms terms;
  terms.cross_entropy = ce.value().item();
  terms.distillation = kl.value().item();
  terms.total = add(ce, scale(kl, loss_cfg.lambda));
  return terms;
}

}  // namespace bake
