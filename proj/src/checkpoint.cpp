#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bake/error.hpp"
#include "bake/model.hpp"

namespace bake {

namespace {

constexpr std::array<char, 8> kMagic{'B', 'A', 'K', 'E', 'K', 'I', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedError("checkpoint " + source_ + ": truncated, need " + std::to_string(pos_ + n) +
                           " bytes, file has " + std::to_string(bytes_.size()));
    }
  }
  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v) { return static_cast<std::uint32_t>(v); }

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const ModelDescriptor& d = model.descriptor();
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  w.u32(narrow(d.input_dim));
  w.u32(narrow(d.num_classes));
  w.u32(narrow(d.hidden.size()));
  for (std::size_t h : d.hidden) w.u32(narrow(h));
  w.u32(d.conv ? 1 : 0);
  if (d.conv) {
    w.u32(narrow(d.conv->input.channels));
    w.u32(narrow(d.conv->input.height));
    w.u32(narrow(d.conv->input.width));
    w.u32(narrow(d.conv->kernel));
    w.u32(narrow(d.conv->channels.size()));
    for (std::size_t c : d.conv->channels) w.u32(narrow(c));
  }
  w.u64(model.parameter_count());
  for (const auto& p : model.parameters())
    for (double v : p.value.values()) w.f32(static_cast<float>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint " + path.string() + " not found or unreadable");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());

  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kMagic) throw BadMagicError("checkpoint " + path.string() + ": bad magic bytes");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));

  ModelDescriptor d;
  d.input_dim = r.u32();
  d.num_classes = r.u32();
  d.hidden.resize(r.u32());
  for (auto& h : d.hidden) h = r.u32();
  if (r.u32() != 0) {
    ConvStem stem;
    stem.input.channels = r.u32();
    stem.input.height = r.u32();
    stem.input.width = r.u32();
    stem.kernel = r.u32();
    stem.channels.resize(r.u32());
    for (auto& c : stem.channels) c = r.u32();
    d.conv = stem;
  }
  try {
    d.validate();
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint " + path.string() + ": invalid descriptor: " + e.what());
  }

  Model shell = Model::init(d, 0);
  const std::uint64_t count = r.u64();
  if (count != shell.parameter_count()) {
    throw CountMismatchError("checkpoint " + path.string() + ": " + std::to_string(count) +
                             " values for a model with " + std::to_string(shell.parameter_count()));
  }
  for (auto& p : shell.parameters())
    for (double& v : p.value.values()) v = r.f32();
  if (r.remaining() != 0) throw FormatError("checkpoint " + path.string() + ": trailing bytes");
  return shell;
}

}  // namespace bake
