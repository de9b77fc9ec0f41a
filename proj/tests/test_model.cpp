#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "bake/error.hpp"
#include "bake/model.hpp"
#include "oracles.hpp"

using bake::Tensor;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("bake_kit_test_model_" + name);
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bake::ModelDescriptor mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t k) {
  bake::ModelDescriptor d;
  d.input_dim = in;
  d.hidden = std::move(hidden);
  d.num_classes = k;
  return d;
}

}  // namespace

TEST_CASE("zero head gives zero logits") {
  auto model = bake::Model::init(mlp(6, {8, 5}, 4), 1);
  model.parameter("head.weight").value = Tensor(5, 4);
  model.parameter("head.bias").value = Tensor(1, 4);
  std::mt19937_64 rng(1);
  CHECK(model.logits(oracle::random_tensor(7, 6, rng, 3.0)) == Tensor(7, 4));
}

TEST_CASE("one-layer encoder matches a hand matrix product") {
  const auto desc = mlp(2, {3}, 2);
  auto model = bake::Model::from_parameters(
      desc, {{"", Tensor::from_rows({{1, 0, 2}, {0, 1, -1}})},
             {"", Tensor::from_rows({{0, 0, 0.5}})},
             {"", Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}})},
             {"", Tensor::from_rows({{0, -1}})}});
  bake::Tape tape;
  const auto pass = model.forward(tape, Tensor::from_rows({{1, 1}, {2, -1}}));
  // h = relu(x W + b): [1, 1, 1.5] and [2, -1, 5.5 -> 5.5]
  CHECK(pass.features.value() == Tensor::from_rows({{1, 1, 1.5}, {2, 0, 5.5}}));
  CHECK(pass.logits.value() == Tensor::from_rows({{2.5, 1.5}, {7.5, 4.5}}));
  CHECK(model.parameters()[0].name == "fc0.weight");
  CHECK(model.parameters()[3].name == "head.bias");
}

TEST_CASE("duplicated input rows give duplicated outputs") {
  const auto model = bake::Model::init(mlp(5, {7, 6}, 3), 2);
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor(3, 5, rng);
  const std::vector<std::size_t> ids{0, 1, 0, 2, 1};
  bake::Tape tape;
  const auto pass = model.forward(tape, x.gather_rows(ids));
  const auto& f = pass.features.value();
  const auto& z = pass.logits.value();
  for (std::size_t j = 0; j < f.cols(); ++j) CHECK(f(0, j) == f(2, j));
  for (std::size_t j = 0; j < z.cols(); ++j) CHECK(z(1, j) == z(4, j));
}

TEST_CASE("forward rejects a wrong input width") {
  const auto model = bake::Model::init(mlp(5, {4}, 3), 0);
  bake::Tape tape;
  CHECK_THROWS_AS((void)model.forward(tape, Tensor(2, 4)), bake::ShapeError);
}

TEST_CASE("logits chunking agrees with one forward pass") {
  const auto model = bake::Model::init(mlp(4, {9, 6}, 5), 3);
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor(23, 4, rng);
  bake::Tape tape;
  CHECK(model.logits(x, 5) == model.forward(tape, x, false).logits.value());
}

TEST_CASE("init determinism and fan-in scaling") {
  const auto desc = mlp(100, {400}, 10);
  auto a = bake::Model::init(desc, 7);
  const auto b = bake::Model::init(desc, 7);
  const auto c = bake::Model::init(desc, 8);
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
  CHECK_FALSE(a.parameters()[0].value == c.parameters()[0].value);

  // head.weight has fan-in 400; fc0.weight has fan-in 100
  for (const auto& [name, fan_in] : {std::pair{"fc0.weight", 100.0}, std::pair{"head.weight", 400.0}}) {
    const auto& w = a.parameter(name).value.values();
    double mean = 0.0, sq = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (double v : w) sq += (v - mean) * (v - mean);
    const double empirical = std::sqrt(sq / static_cast<double>(w.size()));
    const double theoretical = 1.0 / std::sqrt(fan_in) / std::sqrt(3.0);
    CAPTURE(name);
    CHECK(std::abs(empirical / theoretical - 1.0) <= 0.2);
  }
}

TEST_CASE("parameter count is a function of the descriptor") {
  CHECK(bake::parameter_count(mlp(32, {256, 128}, 10)) == 32 * 256 + 256 + 256 * 128 + 128 + 128 * 10 + 10);
  CHECK(bake::Model::init(mlp(32, {256, 128}, 10), 0).parameter_count() ==
        bake::parameter_count(mlp(32, {256, 128}, 10)));
  bake::ModelDescriptor conv = mlp(3 * 8 * 8, {16}, 4);
  conv.conv = bake::ConvStem{{3, 8, 8}, {4, 6}, 3};
  // conv0 3->4, conv1 4->6, 6x2x2 = 24 features into fc0
  CHECK(bake::parameter_count(conv) == (4 * 27 + 4) + (6 * 36 + 6) + (24 * 16 + 16) + (16 * 4 + 4));
  CHECK(conv.feature_dim() == 16);
}

TEST_CASE("descriptor validation") {
  CHECK_THROWS_AS(mlp(0, {4}, 3).validate(), bake::ConfigError);
  CHECK_THROWS_AS(mlp(4, {4}, 1).validate(), bake::ConfigError);
  CHECK_THROWS_AS(mlp(4, {0}, 3).validate(), bake::ConfigError);
  bake::ModelDescriptor conv = mlp(10, {4}, 3);
  conv.conv = bake::ConvStem{{3, 8, 8}, {4}, 3};
  CHECK_THROWS_AS(conv.validate(), bake::ConfigError);
  CHECK_THROWS_AS((void)bake::Model::from_parameters(mlp(2, {3}, 2), {}), bake::ShapeError);
}

TEST_CASE("conv model runs forward and backward") {
  bake::ModelDescriptor desc = mlp(2 * 6 * 6, {5}, 3);
  desc.conv = bake::ConvStem{{2, 6, 6}, {3}, 3};
  const auto model = bake::Model::init(desc, 4);
  std::mt19937_64 rng(4);
  bake::Tape tape;
  const auto pass = model.forward(tape, oracle::random_tensor(4, 72, rng));
  CHECK(pass.features.value().cols() == 5);
  CHECK(pass.logits.value().cols() == 3);
  tape.backward(bake::sum(pass.logits));
  CHECK(pass.params[0].grad().rows() == 3);
}

TEST_CASE("checkpoint round trip") {
  bake::ModelDescriptor desc = mlp(2 * 4 * 4, {6, 5}, 3);
  desc.conv = bake::ConvStem{{2, 4, 4}, {3}, 3};
  const auto model = bake::Model::init(desc, 5);
  const auto path = temp_path("roundtrip.bin");
  bake::save_checkpoint(model, path);
  const auto loaded = bake::load_checkpoint(path);
  CHECK(loaded.descriptor() == desc);
  REQUIRE(loaded.parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(loaded.parameters()[i].name == model.parameters()[i].name);
    const auto& a = model.parameters()[i].value.values();
    const auto& b = loaded.parameters()[i].value.values();
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(b[j] == static_cast<double>(static_cast<float>(a[j])));
  }

  // saving the loaded model reproduces the file byte for byte
  const auto again = temp_path("roundtrip2.bin");
  bake::save_checkpoint(loaded, again);
  CHECK(read_bytes(path) == read_bytes(again));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("checkpoint errors") {
  const auto model = bake::Model::init(mlp(3, {4}, 2), 6);
  const auto path = temp_path("errors.bin");
  bake::save_checkpoint(model, path);
  const auto bytes = read_bytes(path);

  CHECK_THROWS_AS((void)bake::load_checkpoint(temp_path("does_not_exist.bin")), bake::DataError);

  auto bad = bytes;
  bad[0] = 'X';
  write_bytes(path, bad);
  CHECK_THROWS_AS((void)bake::load_checkpoint(path), bake::BadMagicError);

  write_bytes(path, {bytes.begin(), bytes.end() - 3});
  CHECK_THROWS_AS((void)bake::load_checkpoint(path), bake::TruncatedError);

  bad = bytes;
  bad.push_back(0);
  write_bytes(path, bad);
  CHECK_THROWS_AS((void)bake::load_checkpoint(path), bake::FormatError);
  std::filesystem::remove(path);
}
