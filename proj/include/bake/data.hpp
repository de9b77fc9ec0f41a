#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bake/kernels.hpp"
#include "bake/sampling.hpp"
#include "bake/tensor.hpp"

namespace bake {

enum class Split { train, test };

std::string to_string(Split split);

/// Per-channel affine normalization, x <- (x - mean[c]) / std[c].
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;

  static Normalization identity(std::size_t channels);
  static Normalization cifar10();
  static Normalization cifar100();
};

struct Dataset {
  /// One example per row.
  Tensor inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  ClassIndex class_index;
  Split split = Split::train;
  /// Set for image data, where each row is channel-major C*H*W.
  std::optional<kernels::ImageShape> image;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t input_dim() const noexcept { return inputs.cols(); }

  /// Throws DataError if labels are out of range or the class index
  /// disagrees with them.
  void validate() const;
};

/// class -> example ids, ids ascending within each class.
ClassIndex build_class_index(std::span<const int> labels, std::size_t num_classes);

/// 64-bit FNV-1a over the class count, labels and input bit patterns, as 16 hex digits.
std::string fingerprint(const Dataset& data);

struct SynthConfig {
  std::size_t k_classes = 10;
  std::size_t per_class = 200;
  /// Test examples per class; 0 means per_class.
  std::size_t test_per_class = 0;
  std::size_t dim = 32;
  /// Standard deviation of each class around its center.
  double spread = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gaussian clusters: class centers drawn from N(0, I), examples from
/// N(center, spread^2 I). Train and test are independent draws.
std::pair<Dataset, Dataset> synth_clusters(const SynthConfig& cfg);

/// IDX image + label files (big-endian headers, magic 0x803 / 0x801).
/// Pixels are scaled to [0,1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 10, Split split = Split::train);

/// CIFAR binary batches. k_classes = 10 reads 1+3072 byte records;
/// k_classes = 100 reads 2+3072 byte records and keeps the fine label.
/// Channels are scaled to [0,1] then normalized with `norm`.
Dataset load_cifar_binary(std::span<const std::filesystem::path> paths, std::size_t k_classes,
                          const Normalization& norm, Split split = Split::train);

/// Flips each image row left-right in place.
void flip_horizontal(std::span<double> row, const kernels::ImageShape& shape);

}  // namespace bake
