#pragma once

// Training objectives. Every loss reduces over the batch by the mean.

#include <optional>
#include <span>

#include "bake/autodiff.hpp"
#include "bake/bake.hpp"
#include "bake/tensor.hpp"

namespace bake {

struct LossConfig {
  /// Distillation weight.
  double lambda = 1.0;
  /// Temperature of the distillation term.
  double tau = 4.0;
  /// Label smoothing strength for the smoothing baseline.
  double smoothing_epsilon = 0.1;

  void validate() const;
};

/// softmax(logits / tau) per row. Throws ConfigError for tau <= 0.
Tensor temperature_probs(const Tensor& logits, double tau);
Var temperature_probs(Var logits, double tau);

/// Mean over rows of -log softmax(logits)(label).
Var cross_entropy(Var logits, std::span<const int> labels);

/// Mean over rows of tau^2 * KL(q || softmax(logits / tau)), with 0 log 0 = 0.
/// Differentiable in `logits` only. Throws NumericError when a target row
/// does not sum to 1 within 1e-6.
Var kl_distillation(Var logits, const SoftTargetBatch& targets, double tau);

/// Cross-entropy against (1 - eps) one_hot + eps / K.
Var label_smoothing_loss(Var logits, std::span<const int> labels, double epsilon);

struct BakeLossTerms {
  Var total;
  double cross_entropy = 0.0;
  double distillation = 0.0;
};

/// cross_entropy + lambda * kl_distillation, the targets coming from
/// build_soft_targets on the same forward pass.
BakeLossTerms bake_loss(Var logits, Var features, std::span<const int> labels, const BakeConfig& bake_cfg,
                        const LossConfig& loss_cfg);

}  // namespace bake
