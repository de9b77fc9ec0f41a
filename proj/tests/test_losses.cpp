#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bake/error.hpp"
#include "bake/losses.hpp"
#include "oracles.hpp"

using bake::Tensor;

namespace {

double direct_cross_entropy(const Tensor& z, const std::vector<int>& y) {
  const Tensor p = oracle::naive_softmax_row_temperature(z, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) total -= std::log(p(i, static_cast<std::size_t>(y[i])));
  return total / static_cast<double>(z.rows());
}

double direct_kl(const Tensor& z, const Tensor& q, double tau) {
  const Tensor p = oracle::naive_softmax_row_temperature(z, tau);
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q.data()[i] > 0.0) total += q.data()[i] * std::log(q.data()[i] / p.data()[i]);
  return tau * tau * total / static_cast<double>(z.rows());
}

std::vector<int> random_labels(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng() % k);
  return y;
}

}  // namespace

TEST_CASE("temperature_probs examples") {
  std::mt19937_64 rng(1);
  const Tensor flat = bake::temperature_probs(oracle::random_tensor(3, 6, rng, 5.0), 1e6);
  for (double v : flat.values()) CHECK(std::abs(v - 1.0 / 6.0) <= 1e-5);

  const Tensor a = bake::temperature_probs(Tensor::from_rows({{std::log(4.0), 0}}), 1.0);
  CHECK(a(0, 0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(a(0, 1) == doctest::Approx(0.2).epsilon(1e-14));
  const Tensor b = bake::temperature_probs(Tensor::from_rows({{2 * std::log(4.0), 0}}), 2.0);
  CHECK(b(0, 0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK_THROWS_AS((void)bake::temperature_probs(Tensor(1, 2), 0.0), bake::ConfigError);
  CHECK_THROWS_AS((void)bake::temperature_probs(Tensor(1, 2), -1.0), bake::ConfigError);
}

TEST_CASE("cross_entropy examples") {
  bake::Tape tape;
  const std::vector<int> y{3, 7};
  CHECK(bake::cross_entropy(tape.constant(Tensor(2, 10)), y).value().item() == doctest::Approx(std::log(10.0)));

  Tensor confident(2, 10);
  confident(0, 3) = 1e3;
  confident(1, 7) = 1e3;
  CHECK(bake::cross_entropy(tape.constant(confident), y).value().item() <= 1e-12);

  std::mt19937_64 rng(2);
  const Tensor z = oracle::random_tensor(9, 5, rng, 2.0);
  const auto labels = random_labels(9, 5, rng);
  CHECK(bake::cross_entropy(tape.constant(z), labels).value().item() ==
        doctest::Approx(direct_cross_entropy(z, labels)).epsilon(1e-12));

  CHECK_THROWS_AS((void)bake::cross_entropy(tape.constant(Tensor(2, 3)), std::vector<int>{0, 3}), bake::ShapeError);
  CHECK_THROWS_AS((void)bake::cross_entropy(tape.constant(Tensor(2, 3)), std::vector<int>{0, -1}), bake::ShapeError);
}

TEST_CASE("kl_distillation examples") {
  std::mt19937_64 rng(3);
  bake::Tape tape;
  const bake::Var z = tape.leaf(oracle::random_tensor(5, 4, rng, 2.0));
  const bake::SoftTargetBatch same(bake::temperature_probs(z.value(), 4.0));
  const bake::Var kl = bake::kl_distillation(z, same, 4.0);
  CHECK(std::abs(kl.value().item()) <= 1e-12);
  tape.backward(kl);
  CHECK(z.grad() == Tensor(5, 4));

  bake::Tape t2;
  const bake::SoftTargetBatch onehot(Tensor::from_rows({{1, 0}}));
  CHECK(bake::kl_distillation(t2.constant(Tensor(1, 2)), onehot, 1.0).value().item() ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-14));

  const Tensor zr = oracle::random_tensor(7, 6, rng, 3.0);
  const Tensor q = oracle::random_stochastic(7, 6, rng);
  CHECK(bake::kl_distillation(t2.constant(zr), bake::SoftTargetBatch(q), 4.0).value().item() ==
        doctest::Approx(direct_kl(zr, q, 4.0)).epsilon(1e-12));
}

TEST_CASE("kl_distillation rejects non-stochastic targets") {
  bake::Tape tape;
  CHECK_THROWS_AS((void)bake::kl_distillation(tape.constant(Tensor(1, 2)),
                                              bake::SoftTargetBatch(Tensor::from_rows({{0.5, 0.6}})), 1.0),
                  bake::NumericError);
}

TEST_CASE("property: KL is non-negative and vanishes only at q = p") {
  std::mt19937_64 rng(4);
  bake::Tape tape;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 6, k = 2 + rng() % 8;
    const Tensor z = oracle::random_tensor(n, k, rng, 3.0);
    const Tensor q = oracle::random_stochastic(n, k, rng);
    const double tau = 0.5 + static_cast<double>(rng() % 8);
    const double v = bake::kl_distillation(tape.constant(z), bake::SoftTargetBatch(q), tau).value().item();
    CHECK(v > 0.0);
  }
}

TEST_CASE("label_smoothing_loss examples") {
  std::mt19937_64 rng(5);
  bake::Tape tape;
  const Tensor z = oracle::random_tensor(6, 10, rng, 2.0);
  const auto y = random_labels(6, 10, rng);
  CHECK(bake::label_smoothing_loss(tape.constant(z), y, 0.0).value().item() ==
        doctest::Approx(bake::cross_entropy(tape.constant(z), y).value().item()).epsilon(1e-14));
  CHECK(bake::label_smoothing_loss(tape.constant(Tensor(6, 10)), y, 0.1).value().item() ==
        doctest::Approx(std::log(10.0)).epsilon(1e-14));

  // direct formula: -sum_k [(1-eps) 1{k=y} + eps/K] log p(k), averaged
  const double eps = 0.2;
  const Tensor p = oracle::naive_softmax_row_temperature(z, 1.0);
  double expected = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 10; ++k)
      expected -= ((k == static_cast<std::size_t>(y[i]) ? 1.0 - eps : 0.0) + eps / 10.0) * std::log(p(i, k));
  expected /= 6.0;
  CHECK(bake::label_smoothing_loss(tape.constant(z), y, eps).value().item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS((void)bake::label_smoothing_loss(tape.constant(z), y, 1.0), bake::ConfigError);
}

TEST_CASE("property: losses are invariant to per-row logit shifts") {
  std::mt19937_64 rng(6);
  bake::Tape tape;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng() % 6, k = 2 + rng() % 6;
    Tensor z = oracle::random_tensor(n, k, rng, 2.0);
    const auto y = random_labels(n, k, rng);
    const Tensor q = oracle::random_stochastic(n, k, rng);
    Tensor shifted = z;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = oracle::random_tensor(1, 1, rng, 50.0).item();
      for (double& v : shifted.row(i)) v += c;
    }
    auto ce = [&](const Tensor& t) { return bake::cross_entropy(tape.constant(t), y).value().item(); };
    auto kl = [&](const Tensor& t) {
      return bake::kl_distillation(tape.constant(t), bake::SoftTargetBatch(q), 4.0).value().item();
    };
    auto ls = [&](const Tensor& t) { return bake::label_smoothing_loss(tape.constant(t), y, 0.1).value().item(); };
    CHECK(ce(shifted) == doctest::Approx(ce(z)).epsilon(1e-10));
    CHECK(kl(shifted) == doctest::Approx(kl(z)).epsilon(1e-10));
    CHECK(ls(shifted) == doctest::Approx(ls(z)).epsilon(1e-10));
  }
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(7);
  const Tensor z = oracle::random_tensor(5, 4, rng, 2.0);
  const auto y = random_labels(5, 4, rng);
  const Tensor q = oracle::random_stochastic(5, 4, rng);
  auto grad_of = [&](auto make) {
    bake::Tape tape;
    const bake::Var v = tape.leaf(z);
    tape.backward(make(v));
    return v.grad();
  };
  auto value_of = [&](auto make) {
    return [make](const Tensor& t) {
      bake::Tape tape;
      return make(tape.constant(t)).value().item();
    };
  };
  auto ce = [&](bake::Var v) { return bake::cross_entropy(v, y); };
  auto kl = [&](bake::Var v) { return bake::kl_distillation(v, bake::SoftTargetBatch(q), 4.0); };
  auto ls = [&](bake::Var v) { return bake::label_smoothing_loss(v, y, 0.1); };
  CHECK(oracle::relative_error(grad_of(ce), oracle::central_difference(value_of(ce), z)) <= 1e-4);
  CHECK(oracle::relative_error(grad_of(kl), oracle::central_difference(value_of(kl), z)) <= 1e-4);
  CHECK(oracle::relative_error(grad_of(ls), oracle::central_difference(value_of(ls), z)) <= 1e-4);
}

TEST_CASE("bake_loss examples") {
  std::mt19937_64 rng(8);
  const Tensor z = oracle::random_tensor(8, 5, rng, 2.0);
  const Tensor f = oracle::random_tensor(8, 6, rng);
  const auto y = random_labels(8, 5, rng);
  bake::BakeConfig bcfg;
  bake::LossConfig lcfg;

  SUBCASE("lambda = 0 equals cross-entropy exactly") {
    lcfg.lambda = 0.0;
    bake::Tape tape;
    const auto terms = bake::bake_loss(tape.constant(z), tape.constant(f), y, bcfg, lcfg);
    CHECK(terms.total.value().item() == bake::cross_entropy(tape.constant(z), y).value().item());
  }

  SUBCASE("omega = 0 equals cross-entropy in value and gradient") {
    bcfg.omega = 0.0;
    bake::Tape t1;
    const bake::Var z1 = t1.leaf(z);
    const auto terms = bake::bake_loss(z1, t1.leaf(f), y, bcfg, lcfg);
    t1.backward(terms.total);
    bake::Tape t2;
    const bake::Var z2 = t2.leaf(z);
    const bake::Var ce = bake::cross_entropy(z2, y);
    t2.backward(ce);
    CHECK(std::abs(terms.total.value().item() - ce.value().item()) <= 1e-10);
    CHECK(bake::max_abs_diff(z1.grad(), z2.grad()) <= 1e-10);
  }

  SUBCASE("default hyperparameters recompose from the component oracles") {
    bake::Tape tape;
    const auto terms = bake::bake_loss(tape.constant(z), tape.constant(f), y, bcfg, lcfg);
    // independent recomposition: naive affinity, explicit series to
    // convergence, direct CE and KL formulas
    const Tensor p = oracle::naive_softmax_row_temperature(z, 4.0);
    const Tensor q = oracle::series_targets(oracle::naive_affinity(f), p, 0.5, 80);
    const double expected = direct_cross_entropy(z, y) + 1.0 * direct_kl(z, q, 4.0);
    CHECK(terms.total.value().item() == doctest::Approx(expected).epsilon(1e-10));
    CHECK(terms.cross_entropy == doctest::Approx(direct_cross_entropy(z, y)).epsilon(1e-12));
  }
}
