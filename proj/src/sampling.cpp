#include "bake/sampling.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "bake/error.hpp"

namespace bake {

void SamplerConfig::validate() const {
  if (n_hat == 0) throw ConfigError("n_hat must be positive");
}

std::vector<Batch> epoch_batches(const ClassIndex& index, const SamplerConfig& cfg, std::uint64_t epoch) {
  cfg.validate();
  std::size_t total = 0;
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (index[c].empty()) throw ConfigError("sampler: class " + std::to_string(c) + " has no examples");
    total += index[c].size();
  }
  if (total == 0) throw ConfigError("sampler: dataset is empty");

  std::vector<std::size_t> ids;
  std::vector<std::size_t> class_of;
  ids.reserve(total);
  for (std::size_t c = 0; c < index.size(); ++c) {
    for (std::size_t id : index[c]) {
      ids.push_back(id);
      if (class_of.size() <= id) class_of.resize(id + 1);
      class_of[id] = c;
    }
  }
  std::sort(ids.begin(), ids.end());

  std::mt19937_64 rng(cfg.seed ^ epoch);
  std::shuffle(ids.begin(), ids.end(), rng);

  const std::size_t n_batches = total / cfg.n_hat;
  std::vector<Batch> batches;
  batches.reserve(n_batches);
  std::vector<std::size_t> pool;
  for (std::size_t b = 0; b < n_batches; ++b) {
    Batch batch;
    batch.reserve(cfg.batch_size());
    for (std::size_t a = 0; a < cfg.n_hat; ++a) {
      const std::size_t anchor = ids[b * cfg.n_hat + a];
      batch.push_back(anchor);
      if (cfg.m == 0) continue;
      const auto& members = index[class_of[anchor]];
      pool.clear();
      for (std::size_t id : members)
        if (id != anchor) pool.push_back(id);
      if (pool.empty()) pool.push_back(anchor);
      if (pool.size() >= cfg.m) {
        // partial Fisher-Yates: m distinct companions
        for (std::size_t k = 0; k < cfg.m; ++k) {
          std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
          std::swap(pool[k], pool[pick(rng)]);
          batch.push_back(pool[k]);
        }
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t k = 0; k < cfg.m; ++k) batch.push_back(pool[pick(rng)]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace bake
