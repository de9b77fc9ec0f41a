#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "bake/error.hpp"
#include "bake/sampling.hpp"

namespace {

// classes[c] = sizes; ids assigned consecutively
bake::ClassIndex make_index(const std::vector<std::size_t>& sizes) {
  bake::ClassIndex index(sizes.size());
  std::size_t next = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    for (std::size_t i = 0; i < sizes[c]; ++i) index[c].push_back(next++);
  return index;
}

std::vector<std::size_t> class_of(const bake::ClassIndex& index) {
  std::size_t total = 0;
  for (const auto& members : index) total += members.size();
  std::vector<std::size_t> out(total);
  for (std::size_t c = 0; c < index.size(); ++c)
    for (std::size_t id : index[c]) out[id] = c;
  return out;
}

std::vector<std::size_t> anchors_of(const std::vector<bake::Batch>& batches, std::size_t m) {
  std::vector<std::size_t> out;
  for (const auto& b : batches)
    for (std::size_t i = 0; i < b.size(); i += m + 1) out.push_back(b[i]);
  return out;
}

}  // namespace

TEST_CASE("M = 0 is a plain shuffle") {
  const auto index = make_index({3, 5});
  const auto batches = bake::epoch_batches(index, {4, 0, 11}, 0);
  REQUIRE(batches.size() == 2);
  std::vector<std::size_t> all;
  for (const auto& b : batches) {
    CHECK(b.size() == 4);
    all.insert(all.end(), b.begin(), b.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(8);
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(all == expected);
}

TEST_CASE("M = 1, n_hat = 256 yields batches of 512") {
  const auto index = make_index(std::vector<std::size_t>(10, 60));
  const bake::SamplerConfig cfg{256, 1, 3};
  CHECK(cfg.batch_size() == 512);
  const auto batches = bake::epoch_batches(index, cfg, 0);
  REQUIRE(batches.size() == 2);
  for (const auto& b : batches) CHECK(b.size() == 512);
}

TEST_CASE("M = 3 attaches three distinct same-class companions per anchor") {
  const auto index = make_index({4, 5, 6, 7});
  const auto cls = class_of(index);
  const auto batches = bake::epoch_batches(index, {2, 3, 5}, 1);
  CHECK(batches.size() == 11);
  for (const auto& b : batches) {
    REQUIRE(b.size() == 8);
    for (std::size_t a = 0; a < b.size(); a += 4) {
      std::vector<std::size_t> group(b.begin() + static_cast<long>(a), b.begin() + static_cast<long>(a) + 4);
      for (std::size_t id : group) CHECK(cls[id] == cls[group[0]]);
      std::sort(group.begin(), group.end());
      CHECK(std::adjacent_find(group.begin(), group.end()) == group.end());
    }
  }
}

TEST_CASE("small classes fall back to draws with replacement") {
  SUBCASE("two members: companions repeat the other member") {
    const auto index = make_index({2, 2});
    const auto batches = bake::epoch_batches(index, {1, 3, 0}, 0);
    for (const auto& b : batches) {
      REQUIRE(b.size() == 4);
      const std::size_t other = index[b[0] / 2][0] == b[0] ? index[b[0] / 2][1] : index[b[0] / 2][0];
      for (std::size_t k = 1; k < 4; ++k) CHECK(b[k] == other);
    }
  }
  SUBCASE("singleton class repeats the anchor") {
    const auto index = make_index({1, 3});
    const auto batches = bake::epoch_batches(index, {4, 1, 0}, 0);
    REQUIRE(batches.size() == 1);
    for (std::size_t a = 0; a < 8; a += 2)
      if (batches[0][a] == 0) CHECK(batches[0][a + 1] == 0);
  }
}

TEST_CASE("trailing partial batch is dropped") {
  const auto index = make_index({5, 5});
  const auto batches = bake::epoch_batches(index, {4, 1, 0}, 2);
  CHECK(batches.size() == 2);
  CHECK(anchors_of(batches, 1).size() == 8);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS((void)bake::epoch_batches(make_index({3}), {0, 1, 0}, 0), bake::ConfigError);
  CHECK_THROWS_AS((void)bake::epoch_batches(make_index({3, 0}), {1, 1, 0}, 0), bake::ConfigError);
  CHECK_THROWS_AS((void)bake::epoch_batches(bake::ClassIndex{}, {1, 1, 0}, 0), bake::ConfigError);
}

TEST_CASE("property: coverage, companions and determinism") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> sizes(1 + rng() % 8);
    for (auto& s : sizes) s = 1 + rng() % 12;
    const auto index = make_index(sizes);
    const auto cls = class_of(index);
    const std::size_t total = cls.size();
    const bake::SamplerConfig cfg{1 + rng() % total, rng() % 4, rng()};
    const std::uint64_t epoch = rng() % 100;
    CAPTURE(trial);

    const auto batches = bake::epoch_batches(index, cfg, epoch);
    CHECK(batches.size() == total / cfg.n_hat);
    for (const auto& b : batches) {
      REQUIRE(b.size() == cfg.batch_size());
      for (std::size_t a = 0; a < b.size(); a += cfg.m + 1)
        for (std::size_t k = 1; k <= cfg.m; ++k) {
          CHECK(cls[b[a + k]] == cls[b[a]]);
          if (sizes[cls[b[a]]] >= 2) CHECK(b[a + k] != b[a]);
        }
    }

    // every example is an anchor at most once; exactly once when nothing is dropped
    auto anchors = anchors_of(batches, cfg.m);
    std::sort(anchors.begin(), anchors.end());
    CHECK(std::adjacent_find(anchors.begin(), anchors.end()) == anchors.end());
    CHECK(anchors.size() == batches.size() * cfg.n_hat);

    CHECK(bake::epoch_batches(index, cfg, epoch) == batches);
  }
}

TEST_CASE("exact anchor coverage when n_hat divides the dataset") {
  const auto index = make_index({6, 4, 10});
  for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
    auto anchors = anchors_of(bake::epoch_batches(index, {5, 2, 77}, epoch), 2);
    std::sort(anchors.begin(), anchors.end());
    std::vector<std::size_t> expected(20);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(anchors == expected);
  }
}

TEST_CASE("epochs and seeds reshuffle") {
  const auto index = make_index({50, 50});
  const bake::SamplerConfig cfg{10, 1, 4};
  CHECK(bake::epoch_batches(index, cfg, 0) != bake::epoch_batches(index, cfg, 1));
  CHECK(bake::epoch_batches(index, cfg, 0) != bake::epoch_batches(index, {10, 1, 5}, 0));
}
