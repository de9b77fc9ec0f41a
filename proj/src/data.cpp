#include "bake/data.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>

#include "bake/error.hpp"

namespace bake {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void require_header(const std::vector<unsigned char>& b, std::size_t header, const std::filesystem::path& path) {
  if (b.size() < header) {
    throw TruncatedError(path.string() + ": truncated header, expected " + std::to_string(header) +
                         " bytes, got " + std::to_string(b.size()));
  }
}

void check_payload(std::size_t expected, std::size_t actual, const std::filesystem::path& path) {
  if (actual < expected) {
    throw TruncatedError(path.string() + ": truncated payload, expected " + std::to_string(expected) +
                         " bytes, got " + std::to_string(actual));
  }
  if (actual > expected) {
    throw CountMismatchError(path.string() + ": header declares " + std::to_string(expected) +
                             " payload bytes but file holds " + std::to_string(actual));
  }
}

void fnv(std::uint64_t& h, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    h ^= (word >> (8 * i)) & 0xFF;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Normalization Normalization::identity(std::size_t channels) {
  return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

Normalization Normalization::cifar10() { return {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}}; }

Normalization Normalization::cifar100() { return {{0.5071, 0.4865, 0.4409}, {0.2673, 0.2564, 0.2762}}; }

void Dataset::validate() const {
  if (inputs.rows() != labels.size()) {
    throw DataError("dataset: " + std::to_string(inputs.rows()) + " inputs for " + std::to_string(labels.size()) +
                    " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw LabelRangeError("dataset: example " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                            " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  if (class_index != build_class_index(labels, num_classes)) throw DataError("dataset: class index disagrees with labels");
}

ClassIndex build_class_index(std::span<const int> labels, std::size_t num_classes) {
  ClassIndex index(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw LabelRangeError("label " + std::to_string(labels[i]) + " at example " + std::to_string(i) +
                            " outside [0," + std::to_string(num_classes) + ")");
    }
    index[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return index;
}

std::string fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv(h, data.num_classes);
  fnv(h, data.inputs.rows());
  fnv(h, data.inputs.cols());
  for (int y : data.labels) fnv(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)));
  for (double v : data.inputs.values()) fnv(h, std::bit_cast<std::uint64_t>(v));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void SynthConfig::validate() const {
  if (k_classes < 2) throw ConfigError("synthetic data: need at least 2 classes");
  if (per_class == 0 || dim == 0) throw ConfigError("synthetic data: counts must be positive");
  if (!(spread > 0.0)) throw ConfigError("synthetic data: spread must be > 0");
}

std::pair<Dataset, Dataset> synth_clusters(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Tensor centers(cfg.k_classes, cfg.dim);
  for (double& v : centers.values()) v = normal(rng);

  auto draw = [&](std::size_t per_class, Split split) {
    Dataset d;
    d.num_classes = cfg.k_classes;
    d.split = split;
    d.inputs = Tensor(cfg.k_classes * per_class, cfg.dim);
    d.labels.reserve(cfg.k_classes * per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < cfg.k_classes; ++c) {
      for (std::size_t i = 0; i < per_class; ++i, ++row) {
        for (std::size_t j = 0; j < cfg.dim; ++j) d.inputs(row, j) = centers(c, j) + cfg.spread * normal(rng);
        d.labels.push_back(static_cast<int>(c));
      }
    }
    d.class_index = build_class_index(d.labels, d.num_classes);
    return d;
  };

  Dataset train = draw(cfg.per_class, Split::train);
  Dataset test = draw(cfg.test_per_class == 0 ? cfg.per_class : cfg.test_per_class, Split::test);
  return {std::move(train), std::move(test)};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t num_classes,
                 Split split) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  require_header(ib, 16, images);
  require_header(lb, 8, labels);
  if (be32(ib, 0) != 0x00000803) {
    throw BadMagicError(images.string() + ": bad IDX image magic " + std::to_string(be32(ib, 0)));
  }
  if (be32(lb, 0) != 0x00000801) {
    throw BadMagicError(labels.string() + ": bad IDX label magic " + std::to_string(be32(lb, 0)));
  }
  const std::size_t count = be32(ib, 4);
  const std::size_t rows = be32(ib, 8);
  const std::size_t cols = be32(ib, 12);
  const std::size_t label_count = be32(lb, 4);
  check_payload(count * rows * cols, ib.size() - 16, images);
  check_payload(label_count, lb.size() - 8, labels);
  if (count != label_count) {
    throw CountMismatchError("IDX: " + std::to_string(count) + " images but " + std::to_string(label_count) +
                             " labels");
  }

  Dataset d;
  d.num_classes = num_classes;
  d.split = split;
  d.image = kernels::ImageShape{1, rows, cols};
  d.inputs = Tensor(count, rows * cols);
  for (std::size_t i = 0; i < count * rows * cols; ++i) d.inputs.data()[i] = ib[16 + i] / 255.0;
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) d.labels[i] = lb[8 + i];
  d.class_index = build_class_index(d.labels, num_classes);
  return d;
}

Dataset load_cifar_binary(std::span<const std::filesystem::path> paths, std::size_t k_classes,
                          const Normalization& norm, Split split) {
  if (k_classes != 10 && k_classes != 100) {
    throw ConfigError("CIFAR: class count must be 10 or 100, got " + std::to_string(k_classes));
  }
  constexpr std::size_t kPixels = 3 * 32 * 32;
  if (norm.mean.size() != 3 || norm.std.size() != 3) throw ConfigError("CIFAR: normalization needs 3 channels");
  const std::size_t label_bytes = k_classes == 100 ? 2 : 1;
  const std::size_t stride = label_bytes + kPixels;

  std::vector<std::vector<unsigned char>> files;
  std::size_t total = 0;
  for (const auto& p : paths) {
    files.push_back(read_file(p));
    if (files.back().empty() || files.back().size() % stride != 0) {
      throw FormatError(p.string() + ": " + std::to_string(files.back().size()) +
                        " bytes is not a whole number of " + std::to_string(stride) + "-byte records");
    }
    total += files.back().size() / stride;
  }

  Dataset d;
  d.num_classes = k_classes;
  d.split = split;
  d.image = kernels::ImageShape{3, 32, 32};
  d.inputs = Tensor(total, kPixels);
  d.labels.reserve(total);
  std::size_t row = 0;
  for (const auto& bytes : files) {
    for (std::size_t off = 0; off < bytes.size(); off += stride, ++row) {
      d.labels.push_back(bytes[off + label_bytes - 1]);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < 1024; ++p) {
          const double v = bytes[off + label_bytes + c * 1024 + p] / 255.0;
          d.inputs(row, c * 1024 + p) = (v - norm.mean[c]) / norm.std[c];
        }
      }
    }
  }
  d.class_index = build_class_index(d.labels, k_classes);
  return d;
}

void flip_horizontal(std::span<double> row, const kernels::ImageShape& shape) {
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t y = 0; y < shape.height; ++y) {
      auto* line = row.data() + (c * shape.height + y) * shape.width;
      std::reverse(line, line + shape.width);
    }
  }
}

}  // namespace bake
