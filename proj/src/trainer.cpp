#include "bake/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "bake/error.hpp"

namespace bake {

double lr_at(const Schedule& schedule, double epoch, double base_lr, int total_epochs) {
  if (const auto* cos = std::get_if<CosineSchedule>(&schedule)) {
    if (epoch < cos->warmup_epochs) return base_lr * epoch / cos->warmup_epochs;
    const double span = static_cast<double>(total_epochs) - cos->warmup_epochs;
    if (span <= 0.0) return base_lr;
    const double progress = std::clamp((epoch - cos->warmup_epochs) / span, 0.0, 1.0);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  const auto& step = std::get<StepSchedule>(schedule);
  double lr = base_lr;
  for (int m : step.milestones)
    if (epoch >= m) lr *= step.factor;
  return lr;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::vanilla:
      return "vanilla";
    case Method::label_smoothing:
      return "ls";
    case Method::bake:
      return "bake";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  if (text == "vanilla") return Method::vanilla;
  if (text == "ls" || text == "label_smoothing") return Method::label_smoothing;
  if (text == "bake") return Method::bake;
  throw ConfigError("unknown method '" + text + "' (expected vanilla, ls or bake)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(base_lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (const auto* step = std::get_if<StepSchedule>(&schedule)) {
    for (std::size_t i = 1; i < step->milestones.size(); ++i)
      if (step->milestones[i] <= step->milestones[i - 1]) throw ConfigError("milestones must be strictly increasing");
    if (!(step->factor > 0.0)) throw ConfigError("step factor must be > 0");
  } else if (std::get<CosineSchedule>(schedule).warmup_epochs < 0.0) {
    throw ConfigError("warm-up epochs must be >= 0");
  }
  sampler.validate();
  loss.validate();
  if (method == Method::bake) bake.validate();
}

SamplerConfig TrainConfig::effective_sampler() const {
  SamplerConfig s = sampler;
  if (method != Method::bake) s.m = 0;
  return s;
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum, double weight_decay) {
  require_same_shape(param, grad, "sgd_step");
  require_same_shape(param, velocity, "sgd_step velocity");
  for (std::size_t i = 0; i < param.size(); ++i) {
    double& v = velocity.data()[i];
    double& p = param.data()[i];
    v = momentum * v + grad.data()[i] + weight_decay * p;
    p -= lr * v;
  }
}

void SgdOptimizer::step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params.size()) throw ShapeError("optimizer: gradient count does not match parameters");
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.value.rows(), p.value.cols());
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_step(params[i].value, grads[i], velocity_[i], lr, momentum_, weight_decay_);
}

Accuracy evaluate_logits(const Tensor& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw ShapeError("evaluate: label count mismatch");
  if (labels.empty()) throw DataError("evaluate: empty dataset");
  std::size_t hit1 = 0;
  std::size_t hit5 = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const double zy = logits(i, y);
    // rank of y = classes that beat it; a tie beats y when its index is lower
    std::size_t rank = std::isnan(zy) ? logits.cols() : 0;
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      const double zk = logits(i, k);
      if (zk > zy || (zk == zy && k < y)) ++rank;
    }
    if (rank < 1) ++hit1;
    if (rank < 5) ++hit5;
  }
  const auto n = static_cast<double>(labels.size());
  return {static_cast<double>(hit1) / n, static_cast<double>(hit5) / n};
}

Accuracy evaluate(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw DataError("evaluate: empty dataset");
  return evaluate_logits(model.logits(data.inputs), data.labels);
}

TrainResult train(Model model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.input_dim() != model.descriptor().input_dim || test_set.input_dim() != model.descriptor().input_dim) {
    throw ShapeError("train: dataset input dimension does not match the model");
  }
  if (train_set.num_classes != model.descriptor().num_classes) {
    throw ShapeError("train: dataset class count does not match the model");
  }
  if (cfg.flip && !train_set.image) throw ConfigError("flip augmentation needs image data");

  using clock = std::chrono::steady_clock;
  SgdOptimizer optimizer(cfg.momentum, cfg.weight_decay);
  SamplerConfig sampler = cfg.effective_sampler();
  sampler.seed = cfg.seed;

  std::vector<EpochMetrics> history;
  std::vector<int> labels;
  std::vector<Tensor> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = clock::now();
    const auto batches = epoch_batches(train_set.class_index, sampler, static_cast<std::uint64_t>(epoch));
    if (batches.empty()) throw ConfigError("train: dataset smaller than one batch of anchors");
    std::mt19937_64 flip_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1)));

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr_at(cfg.schedule, epoch, cfg.base_lr, cfg.epochs);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& ids = batches[b];
      Tensor x = train_set.inputs.gather_rows(ids);
      if (cfg.flip) {
        std::bernoulli_distribution coin(0.5);
        for (std::size_t i = 0; i < x.rows(); ++i)
          if (coin(flip_rng)) flip_horizontal(x.row(i), *train_set.image);
      }
      labels.resize(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) labels[i] = train_set.labels[ids[i]];

      Tape tape;
      const ForwardPass pass = model.forward(tape, x);
      Var loss;
      double ce = 0.0;
      double kl = 0.0;
      switch (cfg.method) {
        case Method::vanilla:
          loss = cross_entropy(pass.logits, labels);
          ce = loss.value().item();
          break;
        case Method::label_smoothing:
          loss = label_smoothing_loss(pass.logits, labels, cfg.loss.smoothing_epsilon);
          ce = loss.value().item();
          break;
        case Method::bake: {
          const BakeLossTerms terms = bake_loss(pass.logits, pass.features, labels, cfg.bake, cfg.loss);
          loss = terms.total;
          ce = terms.cross_entropy;
          kl = terms.distillation;
          break;
        }
      }
      if (!std::isfinite(loss.value().item())) {
        throw NumericError("train: loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + " (diverged; try a smaller learning rate)");
      }
      tape.backward(loss);

      grads.clear();
      for (const Var& p : pass.params) grads.push_back(p.grad());
      const double progress = epoch + static_cast<double>(b) / static_cast<double>(batches.size());
      optimizer.step(model.parameters(), grads, lr_at(cfg.schedule, progress, cfg.base_lr, cfg.epochs));

      m.train_loss += loss.value().item();
      m.train_ce += ce;
      m.train_kl += kl;
    }
    const auto nb = static_cast<double>(batches.size());
    m.train_loss /= nb;
    m.train_ce /= nb;
    m.train_kl /= nb;
    const auto train_end = clock::now();
    const Accuracy acc = evaluate(model, test_set);
    m.test_top1 = acc.top1;
    m.test_top5 = acc.top5;
    m.wall_seconds = std::chrono::duration<double>(clock::now() - epoch_start).count();
    m.iteration_seconds = std::chrono::duration<double>(train_end - epoch_start).count() / nb;
    history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return {std::move(model), std::move(history)};
}

}  // namespace bake
