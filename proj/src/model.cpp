#include "bake/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "bake/error.hpp"

namespace bake {

namespace {

struct ParamShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::size_t fan_in;
};

kernels::ConvShape conv_block(const ConvStem& stem, std::size_t block) {
  kernels::ConvShape s;
  s.in = stem.input;
  for (std::size_t b = 0; b < block; ++b) {
    const kernels::ImageShape conv_out{stem.channels[b], s.in.height, s.in.width};
    s.in = {conv_out.channels, conv_out.height / 2, conv_out.width / 2};
  }
  s.out_channels = stem.channels[block];
  s.kernel = stem.kernel;
  s.pad = stem.kernel / 2;
  return s;
}

kernels::ImageShape stem_output(const ConvStem& stem) {
  kernels::ImageShape s = stem.input;
  for (std::size_t c : stem.channels) s = {c, s.height / 2, s.width / 2};
  return s;
}

std::vector<ParamShape> parameter_shapes(const ModelDescriptor& desc) {
  std::vector<ParamShape> shapes;
  std::size_t width = desc.input_dim;
  if (desc.conv) {
    for (std::size_t b = 0; b < desc.conv->channels.size(); ++b) {
      const kernels::ConvShape s = conv_block(*desc.conv, b);
      const std::size_t fan_in = s.in.channels * s.kernel * s.kernel;
      shapes.push_back({"conv" + std::to_string(b) + ".weight", s.out_channels, fan_in, fan_in});
      shapes.push_back({"conv" + std::to_string(b) + ".bias", 1, s.out_channels, fan_in});
    }
    width = stem_output(*desc.conv).size();
  }
  for (std::size_t l = 0; l < desc.hidden.size(); ++l) {
    shapes.push_back({"fc" + std::to_string(l) + ".weight", width, desc.hidden[l], width});
    shapes.push_back({"fc" + std::to_string(l) + ".bias", 1, desc.hidden[l], width});
    width = desc.hidden[l];
  }
  shapes.push_back({"head.weight", width, desc.num_classes, width});
  shapes.push_back({"head.bias", 1, desc.num_classes, width});
  return shapes;
}

}  // namespace

void ModelDescriptor::validate() const {
  if (input_dim == 0) throw ConfigError("model: input dimension must be positive");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("model: hidden widths must be positive");
  if (conv) {
    if (conv->input.size() != input_dim) {
      throw ConfigError("model: conv stem expects " + std::to_string(conv->input.size()) +
                        " inputs but input dimension is " + std::to_string(input_dim));
    }
    if (conv->channels.empty()) throw ConfigError("model: conv stem needs at least one block");
    if (conv->kernel == 0 || conv->kernel % 2 == 0) throw ConfigError("model: conv kernel must be odd");
    kernels::ImageShape s = conv->input;
    for (std::size_t c : conv->channels) {
      if (c == 0) throw ConfigError("model: conv channel counts must be positive");
      if (s.height < 2 || s.width < 2) throw ConfigError("model: conv stem pools the image away");
      s = {c, s.height / 2, s.width / 2};
    }
  }
}

std::size_t ModelDescriptor::feature_dim() const {
  if (!hidden.empty()) return hidden.back();
  return conv ? stem_output(*conv).size() : input_dim;
}

std::size_t parameter_count(const ModelDescriptor& desc) {
  desc.validate();
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(desc)) n += s.rows * s.cols;
  return n;
}

Model Model::init(const ModelDescriptor& desc, std::uint64_t seed) {
  desc.validate();
  std::mt19937_64 rng(seed);
  std::vector<Parameter> params;
  for (const auto& s : parameter_shapes(desc)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(s.rows, s.cols);
    for (double& v : t.values()) v = dist(rng);
    params.push_back({s.name, std::move(t)});
  }
  return Model(desc, std::move(params));
}

Model Model::from_parameters(const ModelDescriptor& desc, std::vector<Parameter> params) {
  desc.validate();
  const auto shapes = parameter_shapes(desc);
  if (shapes.size() != params.size()) {
    throw ShapeError("model: expected " + std::to_string(shapes.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].value.rows() != shapes[i].rows || params[i].value.cols() != shapes[i].cols) {
      throw ShapeError("model: parameter " + shapes[i].name + " has shape " + params[i].value.shape_string());
    }
    params[i].name = shapes[i].name;
  }
  return Model(desc, std::move(params));
}

Parameter& Model::parameter(const std::string& name) {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  if (it == params_.end()) throw Error("model: no parameter named " + name);
  return *it;
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ForwardPass Model::forward(Tape& tape, const Tensor& inputs, bool track_grad) const {
  if (inputs.cols() != desc_.input_dim) {
    throw ShapeError("model: input rows have " + std::to_string(inputs.cols()) + " values, expected " +
                     std::to_string(desc_.input_dim));
  }
  ForwardPass pass;
  for (const auto& p : params_) pass.params.push_back(tape.leaf(p.value, track_grad));

  std::size_t next = 0;
  Var h = tape.constant(inputs);
  if (desc_.conv) {
    for (std::size_t b = 0; b < desc_.conv->channels.size(); ++b) {
      const kernels::ConvShape s = conv_block(*desc_.conv, b);
      h = relu(conv2d(h, pass.params[next], pass.params[next + 1], s));
      h = maxpool2(h, s.out());
      next += 2;
    }
  }
  for (std::size_t l = 0; l < desc_.hidden.size(); ++l) {
    h = relu(add_row_bias(matmul(h, pass.params[next]), pass.params[next + 1]));
    next += 2;
  }
  pass.features = h;
  pass.logits = add_row_bias(matmul(h, pass.params[next]), pass.params[next + 1]);
  return pass;
}

Tensor Model::logits(const Tensor& inputs, std::size_t chunk) const {
  Tensor out(inputs.rows(), desc_.num_classes);
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < inputs.rows(); start += chunk) {
    const std::size_t stop = std::min(inputs.rows(), start + chunk);
    ids.resize(stop - start);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = start + i;
    Tape tape;
    const ForwardPass pass = forward(tape, inputs.gather_rows(ids), false);
    const Tensor& z = pass.logits.value();
    std::copy(z.values().begin(), z.values().end(), out.data() + start * out.cols());
  }
  return out;
}

}  // namespace bake
