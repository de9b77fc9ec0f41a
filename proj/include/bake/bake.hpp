#pragma once

// Batch knowledge ensembling: refined soft targets built from one batch's
// features and predictions. Everything here runs on detached values.

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "bake/autodiff.hpp"
#include "bake/tensor.hpp"

namespace bake {

/// Row-stochastic N x N matrix with zero diagonal.
class AffinityMatrix {
 public:
  explicit AffinityMatrix(Tensor values) : values_(std::move(values)) {}
  const Tensor& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return values_(i, j); }

 private:
  Tensor values_;
};

/// Row-stochastic N x K targets. Never attached to a tape: entering a loss
/// as a constant, they contribute no gradient.
class SoftTargetBatch {
 public:
  explicit SoftTargetBatch(Tensor values) : values_(std::move(values)) {}
  const Tensor& values() const noexcept { return values_; }
  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }
  double operator()(std::size_t i, std::size_t k) const noexcept { return values_(i, k); }

 private:
  Tensor values_;
};

enum class PropagationMode { closed_form, iterate, one_step };

enum class KnowledgeSource { predictions, ground_truth_onehot };

struct BakeConfig {
  double omega = 0.5;
  double tau = 4.0;
  PropagationMode mode = PropagationMode::closed_form;
  /// Iteration count for PropagationMode::iterate.
  int iterations = 1;
  KnowledgeSource knowledge = KnowledgeSource::predictions;

  /// Throws ConfigError on omega outside [0,1], tau <= 0, iterations < 1,
  /// or omega == 1 under closed_form.
  void validate() const;
};

std::string to_string(PropagationMode mode, int iterations);
std::string to_string(KnowledgeSource source);

/// Parses "closed", "one-step" or "iterate:<t>". Throws ConfigError.
void parse_propagation(const std::string& text, PropagationMode& mode, int& iterations);
/// Parses "pred" or "onehot". Throws ConfigError.
KnowledgeSource parse_knowledge(const std::string& text);

/// Row softmax over cosine similarities with the diagonal excluded.
/// Throws NumericError for N < 2 or a zero feature row.
AffinityMatrix affinity_matrix(const Tensor& features);

/// omega * A P + (1 - omega) P.
SoftTargetBatch propagate_one_step(const AffinityMatrix& a, const Tensor& probs, double omega);

/// t rounds of Q <- omega * A Q + (1 - omega) P starting from Q = P.
SoftTargetBatch propagate_iterative(const AffinityMatrix& a, const Tensor& probs, double omega, int t);

/// (1 - omega) (I - omega A)^{-1} P, computed by a linear solve.
/// Throws ConfigError for omega >= 1 (use one_step there).
SoftTargetBatch propagate_closed_form(const AffinityMatrix& a, const Tensor& probs, double omega);

/// One-hot rows for `labels` over `num_classes` classes.
Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

/// Full target pipeline: P from softmax(logits / tau) or one-hot labels,
/// then the configured propagation. Throws ConfigError when the one-hot
/// source is selected without labels.
SoftTargetBatch build_soft_targets(const Tensor& features, const Tensor& logits,
                                   std::optional<std::span<const int>> labels, const BakeConfig& cfg);

/// Tape-level wrapper: builds targets from the current values of `features`
/// and `logits` and returns them as a constant node with no edges back.
Var soft_targets_node(Var features, Var logits, std::optional<std::span<const int>> labels,
                      const BakeConfig& cfg);

}  // namespace bake
