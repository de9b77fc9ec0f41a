#pragma once

// The training loop: sample a batch, run one forward pass, build targets,
// take the loss, step SGD. Plus top-k evaluation.

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "bake/bake.hpp"
#include "bake/data.hpp"
#include "bake/losses.hpp"
#include "bake/model.hpp"
#include "bake/sampling.hpp"

namespace bake {

/// Linear warm-up to base_lr over `warmup_epochs`, then half-cosine decay to 0.
struct CosineSchedule {
  double warmup_epochs = 5.0;
};

/// base_lr * factor^(milestones passed).
struct StepSchedule {
  std::vector<int> milestones{100, 150};
  double factor = 0.1;
};

using Schedule = std::variant<CosineSchedule, StepSchedule>;

/// Learning rate at fractional epoch `epoch` of a `total_epochs` run.
double lr_at(const Schedule& schedule, double epoch, double base_lr, int total_epochs);

enum class Method { vanilla, label_smoothing, bake };

std::string to_string(Method m);
/// Accepts vanilla, ls / label_smoothing, bake. Throws ConfigError.
Method parse_method(const std::string& text);

struct TrainConfig {
  int epochs = 30;
  double base_lr = 0.1;
  double momentum = 0.9;
  Schedule schedule = CosineSchedule{};
  double weight_decay = 0.0;
  Method method = Method::bake;
  BakeConfig bake;
  /// For vanilla and label smoothing, m is forced to 0. The seed field is
  /// replaced by `seed` below.
  SamplerConfig sampler;
  LossConfig loss;
  std::uint64_t seed = 0;
  /// Random left-right flips; image datasets only.
  bool flip = false;

  void validate() const;
  /// Sampler settings actually used for this method.
  SamplerConfig effective_sampler() const;
};

/// One momentum-SGD update:
///   v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum, double weight_decay);

class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Applies sgd_step to every parameter; velocity buffers are created on first use.
  void step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

struct Accuracy {
  double top1 = 0.0;
  double top5 = 0.0;
};

/// Top-k hit counts with ties among logits broken toward the lower class index.
Accuracy evaluate(const Model& model, const Dataset& data);
Accuracy evaluate_logits(const Tensor& logits, std::span<const int> labels);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  /// Mean over the epoch's batches of the total objective.
  double train_loss = 0.0;
  /// Mean supervised term (label-smoothed for that baseline).
  double train_ce = 0.0;
  /// Mean distillation term before the lambda weight; 0 without BAKE.
  double train_kl = 0.0;
  double test_top1 = 0.0;
  double test_top5 = 0.0;
  double wall_seconds = 0.0;
  /// Mean wall time of one iteration.
  double iteration_seconds = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

TrainResult train(Model model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace bake
