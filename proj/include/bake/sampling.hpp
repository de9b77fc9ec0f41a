#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace bake {

/// Example ids grouped by class: index[c] lists every example labelled c.
using ClassIndex = std::vector<std::vector<std::size_t>>;

/// A mini-batch as example ids. Each anchor is followed by its companions.
using Batch = std::vector<std::size_t>;

struct SamplerConfig {
  /// Anchors per batch.
  std::size_t n_hat = 128;
  /// Same-class companions drawn per anchor.
  std::size_t m = 1;
  std::uint64_t seed = 0;

  std::size_t batch_size() const noexcept { return n_hat * (m + 1); }
  void validate() const;
};

/// Builds one epoch of batches.
///
/// Anchors are a fresh shuffle of every example, seeded by seed ^ epoch;
/// the trailing group of fewer than n_hat anchors is dropped. Each anchor
/// gets m companions from its own class: distinct and excluding the anchor
/// when the class is large enough, otherwise drawn with replacement (still
/// excluding the anchor whenever the class has a second member). m = 0 is
/// plain random batching. Throws ConfigError on an empty dataset, an empty
/// class or n_hat = 0.
std::vector<Batch> epoch_batches(const ClassIndex& index, const SamplerConfig& cfg, std::uint64_t epoch);

}  // namespace bake
