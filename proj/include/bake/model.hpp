#pragma once

// Classifiers factored as an encoder F followed by a linear head C, so one
// forward pass yields both the features (encoder output) and the logits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bake/autodiff.hpp"
#include "bake/kernels.hpp"
#include "bake/tensor.hpp"

namespace bake {

/// Optional convolutional stem: blocks of conv(k x k, pad k/2) -> ReLU -> 2x2 max pool.
struct ConvStem {
  kernels::ImageShape input;
  std::vector<std::size_t> channels{16, 32};
  std::size_t kernel = 3;

  friend bool operator==(const ConvStem&, const ConvStem&) = default;
};

struct ModelDescriptor {
  std::size_t input_dim = 0;
  /// Widths of the fully connected encoder layers, each followed by ReLU.
  std::vector<std::size_t> hidden{256, 128};
  std::size_t num_classes = 0;
  std::optional<ConvStem> conv;

  /// Throws ConfigError when the descriptor cannot be built.
  void validate() const;
  /// Width of the encoder output.
  std::size_t feature_dim() const;

  friend bool operator==(const ModelDescriptor&, const ModelDescriptor&) = default;
};

/// Number of trainable scalars a descriptor produces.
std::size_t parameter_count(const ModelDescriptor& desc);

struct Parameter {
  std::string name;
  Tensor value;
};

struct ForwardPass {
  Var features;
  Var logits;
  /// Tape leaves for each parameter, in declaration order.
  std::vector<Var> params;
};

class Model {
 public:
  /// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Model init(const ModelDescriptor& desc, std::uint64_t seed);

  /// Model with the given parameters; shapes are checked against the descriptor.
  static Model from_parameters(const ModelDescriptor& desc, std::vector<Parameter> params);

  const ModelDescriptor& descriptor() const noexcept { return desc_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  Parameter& parameter(const std::string& name);
  std::size_t parameter_count() const noexcept;

  /// Records a forward pass on `tape`. Parameters become leaves that require
  /// a gradient when `track_grad` is set.
  ForwardPass forward(Tape& tape, const Tensor& inputs, bool track_grad = true) const;

  /// Logits without gradient tracking, evaluated in chunks of `chunk` rows.
  Tensor logits(const Tensor& inputs, std::size_t chunk = 512) const;

 private:
  Model(ModelDescriptor desc, std::vector<Parameter> params) : desc_(std::move(desc)), params_(std::move(params)) {}

  ModelDescriptor desc_;
  std::vector<Parameter> params_;
};

/// Writes the checkpoint layout documented in the README: magic, descriptor,
/// then little-endian float32 parameter values in declaration order.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Throws DataError on a missing, truncated or malformed file.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace bake
