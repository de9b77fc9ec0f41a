#include "bake/bake.hpp"

#include <cmath>
#include <string>

#include "bake/error.hpp"
#include "bake/linalg.hpp"
#include "bake/losses.hpp"
#include "bake/numerics.hpp"

namespace bake {

namespace {

constexpr double kStochasticTolerance = 1e-8;

void check_propagation_inputs(const AffinityMatrix& a, const Tensor& probs, double omega) {
  if (a.size() != probs.rows()) {
    throw ShapeError("propagation: affinity " + a.values().shape_string() + " for predictions " +
                     probs.shape_string());
  }
  if (!(omega >= 0.0 && omega <= 1.0)) {
    throw ConfigError("omega must lie in [0,1], got " + std::to_string(omega));
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (double v : probs.row(i)) s += v;
    if (std::abs(s - 1.0) > kStochasticTolerance) {
      throw NumericError("propagation: prediction row " + std::to_string(i) + " sums to " +
                         std::to_string(s) + ", not 1");
    }
  }
}

}  // namespace

void BakeConfig::validate() const {
  if (!(omega >= 0.0 && omega <= 1.0)) {
    throw ConfigError("omega must lie in the valid range [0,1], got " + std::to_string(omega));
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0, got " + std::to_string(tau));
  if (mode == PropagationMode::iterate && iterations < 1) {
    throw ConfigError("iteration count must be >= 1, got " + std::to_string(iterations));
  }
  if (mode == PropagationMode::closed_form && omega >= 1.0) {
    throw ConfigError("omega = 1 has no closed form; use one-step propagation");
  }
}

std::string to_string(PropagationMode mode, int iterations) {
  switch (mode) {
    case PropagationMode::closed_form:
      return "closed";
    case PropagationMode::one_step:
      return "one-step";
    case PropagationMode::iterate:
      return "iterate:" + std::to_string(iterations);
  }
  return "?";
}

std::string to_string(KnowledgeSource source) {
  return source == KnowledgeSource::predictions ? "pred" : "onehot";
}

void parse_propagation(const std::string& text, PropagationMode& mode, int& iterations) {
  if (text == "closed") {
    mode = PropagationMode::closed_form;
    return;
  }
  if (text == "one-step") {
    mode = PropagationMode::one_step;
    return;
  }
  const std::string prefix = "iterate:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t used = 0;
    int t = 0;
    try {
      t = std::stoi(text.substr(prefix.size()), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size() - prefix.size() || t < 1) {
      throw ConfigError("propagation mode '" + text + "': iteration count must be a positive integer");
    }
    mode = PropagationMode::iterate;
    iterations = t;
    return;
  }
  throw ConfigError("unknown propagation mode '" + text + "' (expected closed, one-step or iterate:<t>)");
}

KnowledgeSource parse_knowledge(const std::string& text) {
  if (text == "pred") return KnowledgeSource::predictions;
  if (text == "onehot") return KnowledgeSource::ground_truth_onehot;
  throw ConfigError("unknown knowledge source '" + text + "' (expected pred or onehot)");
}

AffinityMatrix affinity_matrix(const Tensor& features) {
  const std::size_t n = features.rows();
  if (n < 2) {
    throw NumericError("affinity_matrix: degenerate batch of size " + std::to_string(n) +
                       " (need at least 2 samples)");
  }
  const Tensor unit = row_l2_normalize(features);
  const Tensor cosine = kernels::matmul_a_bt(unit, unit);
  const SoftmaxMask diag = SoftmaxMask::diagonal(n);
  return AffinityMatrix(softmax_rows(cosine, &diag));
}

SoftTargetBatch propagate_one_step(const AffinityMatrix& a, const Tensor& probs, double omega) {
  check_propagation_inputs(a, probs, omega);
  Tensor q = matmul(a.values(), probs);
  for (std::size_t i = 0; i < q.size(); ++i) q.data()[i] = omega * q.data()[i] + (1.0 - omega) * probs.data()[i];
  return SoftTargetBatch(std::move(q));
}

SoftTargetBatch propagate_iterative(const AffinityMatrix& a, const Tensor& probs, double omega, int t) {
  check_propagation_inputs(a, probs, omega);
  if (t < 1) throw ConfigError("iteration count must be >= 1, got " + std::to_string(t));
  Tensor q = probs;
  for (int step = 0; step < t; ++step) {
    Tensor next = matmul(a.values(), q);
    for (std::size_t i = 0; i < next.size(); ++i)
      next.data()[i] = omega * next.data()[i] + (1.0 - omega) * probs.data()[i];
    q = std::move(next);
  }
  return SoftTargetBatch(std::move(q));
}

SoftTargetBatch propagate_closed_form(const AffinityMatrix& a, const Tensor& probs, double omega) {
  check_propagation_inputs(a, probs, omega);
  if (omega >= 1.0) throw ConfigError("omega = 1 has no closed form; use one-step propagation");
  const std::size_t n = a.size();
  Tensor system(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) system(i, j) = (i == j ? 1.0 : 0.0) - omega * a(i, j);
  Tensor q = linear_solve(system, probs);
  q *= 1.0 - omega;
  return SoftTargetBatch(std::move(q));
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
  Tensor out(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ShapeError("label " + std::to_string(labels[i]) + " out of range [0," +
                       std::to_string(num_classes) + ")");
    }
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

SoftTargetBatch build_soft_targets(const Tensor& features, const Tensor& logits,
                                   std::optional<std::span<const int>> labels, const BakeConfig& cfg) {
  cfg.validate();
  if (features.rows() != logits.rows()) {
    throw ShapeError("build_soft_targets: features " + features.shape_string() + " vs logits " +
                     logits.shape_string());
  }
  Tensor probs;
  if (cfg.knowledge == KnowledgeSource::predictions) {
    probs = temperature_probs(logits, cfg.tau);
  } else {
    if (!labels) throw ConfigError("one-hot knowledge source requires ground-truth labels");
    if (labels->size() != logits.rows()) throw ShapeError("build_soft_targets: label count mismatch");
    probs = one_hot(*labels, logits.cols());
  }
  const AffinityMatrix a = affinity_matrix(features);
  switch (cfg.mode) {
    case PropagationMode::one_step:
      return propagate_one_step(a, probs, cfg.omega);
    case PropagationMode::iterate:
      return propagate_iterative(a, probs, cfg.omega, cfg.iterations);
    case PropagationMode::closed_form:
      break;
  }
  return propagate_closed_form(a, probs, cfg.omega);
}

Var soft_targets_node(Var features, Var logits, std::optional<std::span<const int>> labels,
                      const BakeConfig& cfg) {
  SoftTargetBatch q = build_soft_targets(features.value(), logits.value(), labels, cfg);
  return features.tape().constant(q.values());
}

}  // namespace bake
