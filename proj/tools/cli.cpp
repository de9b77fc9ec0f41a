#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "bake/data.hpp"
#include "bake/error.hpp"
#include "bake/kernels.hpp"
#include "bake/losses.hpp"
#include "bake/model.hpp"
#include "bake/trainer.hpp"

namespace bake::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolName = "bake_kit";
constexpr const char* kToolVersion = "0.1.0";

struct Options {
  std::string method = "bake";
  std::string omega = "0.5";
  double tau = 4.0;
  double lambda = 1.0;
  std::size_t m = 1;
  std::size_t n_hat = 128;
  std::string mode = "closed";
  std::string knowledge = "pred";
  double smoothing = 0.1;

  std::string dataset = "synth";
  std::size_t classes = 10;
  std::size_t per_class = 200;
  std::size_t test_per_class = 0;
  std::size_t dim = 32;
  double spread = 2.0;
  std::uint64_t data_seed = 0;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::string cifar_train;
  std::string cifar_test;
  std::string norm = "auto";

  std::string hidden = "256,128";
  std::string conv;
  std::size_t conv_kernel = 3;

  int epochs = 30;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::string schedule = "cosine:5";
  bool flip = false;
  std::uint64_t seed = 0;
  std::string out_dir = "bake_run";

  std::size_t seeds = 5;

  std::string checkpoint;
  std::string split = "test";
  std::size_t batch = 0;
};

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

// Numeric-looking option values are written to the manifest as JSON numbers.
json typed_value(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  long long i = 0;
  auto [pi, ei] = std::from_chars(text.data(), text.data() + text.size(), i);
  if (ei == std::errc() && pi == text.data() + text.size() && !text.empty()) return i;
  double d = 0.0;
  auto [pd, ed] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ed == std::errc() && pd == text.data() + text.size() && !text.empty() && std::isfinite(d)) return d;
  return text;
}

json resolved_config(const CLI::App& sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || opt->get_lnames().empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      value = opt->results().back();
      if (opt->get_type_size() == 0) value = opt->as<bool>() ? "true" : "false";
    } else {
      value = opt->get_default_str();
      if (opt->get_type_size() == 0 && value.empty()) value = "false";
    }
    cfg[name] = typed_value(value);
  }
  return cfg;
}

std::string config_text(const std::string& key, const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_number()) return value.dump();
  if (value.is_array()) {
    std::string joined;
    for (const auto& v : value) joined += (joined.empty() ? "" : ",") + config_text(key, v);
    return joined;
  }
  throw ConfigError("config key '" + key + "' must be a string, number, bool or list");
}

// Reads a JSON config (a flat {"flag-name": value} object, or a run manifest
// whose "config" member is one) and returns it as command-line tokens.
std::vector<std::string> config_tokens(const CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (doc.is_object() && doc.contains("config") && doc["config"].is_object()) doc = doc["config"];
  if (!doc.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : doc.items()) {
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt || key == "config" || key == "help") {
      throw ConfigError("config file " + path + ": '" + key + "' is not a " + sub.get_name() + " option");
    }
    if (value.is_null()) continue;
    const std::string text = config_text(key, value);
    if (opt->get_type_size() == 0) {
      if (text == "true") tokens.push_back("--" + key);
      else if (text != "false") throw ConfigError("config file " + path + ": '" + key + "' must be true or false");
      continue;
    }
    if (text.empty()) continue;
    tokens.push_back("--" + key);
    tokens.push_back(text);
  }
  return tokens;
}

// Config values go right after the subcommand name so that any flag given on
// the command line comes later and wins.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  std::size_t sub_at = 0;
  while (sub_at < args.size() && !app.get_subcommand_no_throw(args[sub_at])) ++sub_at;
  if (sub_at == args.size()) return args;
  const CLI::App& sub = *app.get_subcommand_no_throw(args[sub_at]);
  std::vector<std::string> tokens;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      const auto more = config_tokens(sub, args[i + 1]);
      tokens.insert(tokens.end(), more.begin(), more.end());
    } else if (args[i].rfind("--config=", 0) == 0) {
      const auto more = config_tokens(sub, args[i].substr(9));
      tokens.insert(tokens.end(), more.begin(), more.end());
    }
  }
  args.insert(args.begin() + static_cast<long>(sub_at) + 1, tokens.begin(), tokens.end());
  return args;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError(std::string(what) + ": '" + item + "' is not a non-negative integer");
    }
    out.push_back(v);
  }
  return out;
}

double parse_double(const std::string& text, const char* what) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty()) {
    throw ConfigError(std::string(what) + ": '" + text + "' is not a number");
  }
  return v;
}

void apply_thread_cap() {
  const char* env = std::getenv("BAKE_KIT_THREADS");
  if (!env || !*env) return;
  const std::string text(env);
  int n = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc() || p != text.data() + text.size() || n < 1) {
    throw ConfigError("BAKE_KIT_THREADS must be a positive integer, got '" + text + "'");
  }
  kernels::set_max_threads(n);
}

Normalization cifar_norm(const Options& o) {
  if (o.norm == "none") return Normalization::identity(3);
  if (o.norm == "auto") return o.classes == 100 ? Normalization::cifar100() : Normalization::cifar10();
  throw ConfigError("--norm must be auto or none, got '" + o.norm + "'");
}

std::pair<Dataset, Dataset> load_datasets(const Options& o) {
  if (o.dataset == "synth") {
    SynthConfig cfg;
    cfg.k_classes = o.classes;
    cfg.per_class = o.per_class;
    cfg.test_per_class = o.test_per_class;
    cfg.dim = o.dim;
    cfg.spread = o.spread;
    cfg.seed = o.data_seed;
    return synth_clusters(cfg);
  }
  if (o.dataset == "idx") {
    if (o.train_images.empty() || o.train_labels.empty() || o.test_images.empty() || o.test_labels.empty()) {
      throw ConfigError("--dataset idx needs --train-images, --train-labels, --test-images and --test-labels");
    }
    return {load_idx(o.train_images, o.train_labels, o.classes, Split::train),
            load_idx(o.test_images, o.test_labels, o.classes, Split::test)};
  }
  if (o.dataset == "cifar") {
    const auto train_paths = split_list(o.cifar_train);
    const auto test_paths = split_list(o.cifar_test);
    if (train_paths.empty() || test_paths.empty()) throw ConfigError("--dataset cifar needs --cifar-train and --cifar-test");
    const std::vector<fs::path> tr(train_paths.begin(), train_paths.end());
    const std::vector<fs::path> te(test_paths.begin(), test_paths.end());
    const Normalization norm = cifar_norm(o);
    return {load_cifar_binary(tr, o.classes, norm, Split::train), load_cifar_binary(te, o.classes, norm, Split::test)};
  }
  throw ConfigError("--dataset must be synth, idx or cifar, got '" + o.dataset + "'");
}

ModelDescriptor describe_model(const Options& o, const Dataset& train_set) {
  ModelDescriptor desc;
  desc.input_dim = train_set.input_dim();
  desc.hidden = parse_sizes(o.hidden, "--hidden");
  desc.num_classes = train_set.num_classes;
  if (!o.conv.empty()) {
    if (!train_set.image) throw ConfigError("--conv needs an image dataset (idx or cifar)");
    desc.conv = ConvStem{*train_set.image, parse_sizes(o.conv, "--conv"), o.conv_kernel};
  }
  desc.validate();
  return desc;
}

BakeConfig bake_config(const Options& o, double omega) {
  BakeConfig cfg;
  cfg.omega = omega;
  cfg.tau = o.tau;
  parse_propagation(o.mode, cfg.mode, cfg.iterations);
  cfg.knowledge = parse_knowledge(o.knowledge);
  return cfg;
}

TrainConfig train_config(const Options& o, Method method, double omega) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.base_lr = o.lr;
  cfg.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.schedule = parse_schedule(o.schedule);
  cfg.method = method;
  cfg.bake = bake_config(o, omega);
  cfg.sampler.n_hat = o.n_hat;
  cfg.sampler.m = o.m;
  cfg.loss.lambda = o.lambda;
  cfg.loss.tau = o.tau;
  cfg.loss.smoothing_epsilon = o.smoothing;
  cfg.seed = o.seed;
  cfg.flip = o.flip;
  cfg.validate();
  return cfg;
}

json metrics_record(const EpochMetrics& m) {
  return {{"epoch", m.epoch},           {"lr", m.lr},
          {"train_loss", m.train_loss}, {"train_ce", m.train_ce},
          {"train_kl", m.train_kl},     {"test_top1", m.test_top1},
          {"test_top5", m.test_top5}};
}

json timing_record(const EpochMetrics& m) {
  return {{"epoch", m.epoch}, {"wall_seconds", m.wall_seconds}, {"iteration_seconds", m.iteration_seconds}};
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

json manifest(const CLI::App& sub, const Options& o, const Dataset& train_set, const Dataset& test_set) {
  json doc = {{"tool", kToolName},
              {"version", kToolVersion},
              {"command", sub.get_name()},
              {"seed", o.seed},
              {"dataset_fingerprint", {{"train", fingerprint(train_set)}, {"test", fingerprint(test_set)}}}};
  if (o.dataset == "cifar") {
    const Normalization norm = cifar_norm(o);
    doc["normalization"] = {{"mean", norm.mean}, {"std", norm.std}};
  }
  doc["config"] = resolved_config(sub);
  return doc;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_train(const CLI::App& sub, const Options& o, std::ostream& out) {
  const Method method = parse_method(o.method);
  const TrainConfig cfg = train_config(o, method, parse_double(o.omega, "--omega"));
  const auto [train_set, test_set] = load_datasets(o);
  const ModelDescriptor desc = describe_model(o, train_set);

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  {
    auto f = open_output(dir / "manifest.json");
    f << manifest(sub, o, train_set, test_set).dump(2) << "\n";
  }
  auto metrics = open_output(dir / "metrics.jsonl");
  auto timing = open_output(dir / "timing.jsonl");

  out << "train " << to_string(method) << ": " << train_set.size() << " train / " << test_set.size()
      << " test examples, " << parameter_count(desc) << " parameters\n";
  const auto result = train(Model::init(desc, o.seed), train_set, test_set, cfg, [&](const EpochMetrics& m) {
    metrics << metrics_record(m).dump() << "\n" << std::flush;
    timing << timing_record(m).dump() << "\n" << std::flush;
    out << "epoch " << m.epoch + 1 << "/" << cfg.epochs << "  lr " << fixed(m.lr) << "  loss " << fixed(m.train_loss)
        << "  ce " << fixed(m.train_ce) << "  kl " << fixed(m.train_kl) << "  top1 " << fixed(m.test_top1) << "  top5 "
        << fixed(m.test_top5) << "\n";
  });
  save_checkpoint(result.model, dir / "model.bin");
  out << "wrote " << (dir / "metrics.jsonl").string() << " and " << (dir / "model.bin").string() << "\n";
  return kExitOk;
}

struct CompareRow {
  Method method;
  std::optional<double> omega;
  std::vector<double> top1;
  std::vector<double> top5;
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

int cmd_compare(const CLI::App& sub, const Options& o, std::ostream& out) {
  const auto methods = split_list(o.method);
  if (methods.empty()) throw ConfigError("compare needs at least one method in --method");
  const auto omega_text = split_list(o.omega);
  if (omega_text.empty()) throw ConfigError("compare needs at least one value in --omega");
  if (o.seeds == 0) throw ConfigError("--seeds must be positive");

  std::vector<CompareRow> rows;
  for (const auto& name : methods) {
    const Method method = parse_method(name);
    if (method != Method::bake) {
      rows.push_back({method, std::nullopt, {}, {}});
      continue;
    }
    for (const auto& w : omega_text) rows.push_back({method, parse_double(w, "--omega"), {}, {}});
  }
  for (const auto& row : rows) (void)train_config(o, row.method, row.omega.value_or(0.5));

  const auto [train_set, test_set] = load_datasets(o);
  const ModelDescriptor desc = describe_model(o, train_set);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir / "cells");
  {
    auto f = open_output(dir / "manifest.json");
    f << manifest(sub, o, train_set, test_set).dump(2) << "\n";
  }

  for (auto& row : rows) {
    const std::string label = to_string(row.method) + (row.omega ? "-omega" + fixed(*row.omega, 2) : "");
    for (std::size_t s = 0; s < o.seeds; ++s) {
      Options cell = o;
      cell.seed = o.seed + s;
      const TrainConfig cfg = train_config(cell, row.method, row.omega.value_or(0.5));
      auto metrics = open_output(dir / "cells" / (label + "-seed" + std::to_string(cell.seed) + ".jsonl"));
      const auto result = train(Model::init(desc, cell.seed), train_set, test_set, cfg, [&](const EpochMetrics& m) {
        metrics << metrics_record(m).dump() << "\n";
      });
      const EpochMetrics last = result.metrics.empty() ? EpochMetrics{} : result.metrics.back();
      const Accuracy acc = result.metrics.empty() ? evaluate(result.model, test_set) : Accuracy{last.test_top1, last.test_top5};
      row.top1.push_back(acc.top1);
      row.top5.push_back(acc.top5);
      out << label << " seed " << cell.seed << ": top1 " << fixed(acc.top1) << "  top5 " << fixed(acc.top5) << "\n";
    }
  }

  std::ostringstream table;
  table << "method\tomega\tseeds\ttop1_mean\ttop1_std\ttop5_mean\ttop5_std\n";
  for (const auto& row : rows) {
    const auto [m1, s1] = mean_std(row.top1);
    const auto [m5, s5] = mean_std(row.top5);
    table << to_string(row.method) << "\t" << (row.omega ? fixed(*row.omega, 2) : "-") << "\t" << row.top1.size() << "\t"
          << fixed(m1, 6) << "\t" << fixed(s1, 6) << "\t" << fixed(m5, 6) << "\t" << fixed(s5, 6) << "\n";
  }
  auto f = open_output(dir / "summary.tsv");
  f << table.str();
  out << table.str();
  return kExitOk;
}

std::string format_top3(const Tensor& probs, std::size_t row) {
  std::string s;
  for (const auto& [k, p] : top_k(probs.row(row), 3)) {
    if (!s.empty()) s += " ";
    s += std::to_string(k) + ":" + fixed(p);
  }
  return s;
}

int cmd_targets(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ConfigError("targets needs --checkpoint");
  const BakeConfig cfg = bake_config(o, parse_double(o.omega, "--omega"));
  cfg.validate();
  SamplerConfig sampler{o.n_hat, o.m, o.seed};
  sampler.validate();
  const Split split = o.split == "train" ? Split::train : o.split == "test" ? Split::test
                                                                             : throw ConfigError("--split must be train or test");

  const Model model = load_checkpoint(o.checkpoint);
  auto [train_set, test_set] = load_datasets(o);
  const Dataset& data = split == Split::train ? train_set : test_set;
  if (data.input_dim() != model.descriptor().input_dim || data.num_classes != model.descriptor().num_classes) {
    throw DataError("checkpoint " + o.checkpoint + " expects " + std::to_string(model.descriptor().input_dim) +
                    " inputs and " + std::to_string(model.descriptor().num_classes) + " classes, dataset has " +
                    std::to_string(data.input_dim()) + " and " + std::to_string(data.num_classes));
  }

  const auto batches = epoch_batches(data.class_index, sampler, 0);
  if (o.batch >= batches.size()) {
    throw ConfigError("--batch " + std::to_string(o.batch) + " out of range: the " + to_string(split) + " split yields " +
                      std::to_string(batches.size()) + " batches");
  }
  const Batch& ids = batches[o.batch];
  std::vector<int> labels;
  for (std::size_t id : ids) labels.push_back(data.labels[id]);

  Tape tape;
  const ForwardPass pass = model.forward(tape, data.inputs.gather_rows(ids), false);
  const SoftTargetBatch q = build_soft_targets(pass.features.value(), pass.logits.value(), labels, cfg);
  const Tensor p = temperature_probs(pass.logits.value(), cfg.tau);

  out << "# batch " << o.batch << " of the " << to_string(split) << " split, " << ids.size() << " rows, omega "
      << cfg.omega << ", tau " << cfg.tau << ", mode " << o.mode << ", knowledge " << o.knowledge << "\n";
  out << "row\tid\tlabel\ttarget_top3\tmodel_top3\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << i << "\t" << ids[i] << "\t" << labels[i] << "\t" << format_top3(q.values(), i) << "\t" << format_top3(p, i)
        << "\n";
  }
  return kExitOk;
}

void add_method_options(CLI::App* sub, Options& o, bool lists) {
  sub->add_option("--method", o.method, lists ? "Methods to compare, comma-separated (vanilla, ls, bake)"
                                              : "Training method: vanilla, ls or bake");
  sub->add_option("--omega", o.omega,
                  lists ? "Ensembling weight omega in [0,1]; a comma-separated list gives one bake row per value"
                        : "Ensembling weight omega in [0,1]");
  sub->add_option("--tau", o.tau, "Temperature of the soft targets and the distillation term");
  sub->add_option("--lambda", o.lambda, "Weight of the distillation term");
  sub->add_option("--m", o.m, "Same-class companions per anchor (bake only)");
  sub->add_option("--n-hat", o.n_hat, "Anchors per batch");
  sub->add_option("--mode", o.mode, "Propagation: closed, iterate:<t> or one-step");
  sub->add_option("--knowledge", o.knowledge, "Knowledge propagated: pred (predictions) or onehot (labels)");
}

void add_data_options(CLI::App* sub, Options& o) {
  sub->add_option("--dataset", o.dataset, "Dataset: synth, idx or cifar");
  sub->add_option("--classes", o.classes, "Number of classes (synth clusters; label range for idx; 10 or 100 for cifar)");
  sub->add_option("--per-class", o.per_class, "Synthetic training examples per class");
  sub->add_option("--test-per-class", o.test_per_class, "Synthetic test examples per class; 0 means --per-class");
  sub->add_option("--dim", o.dim, "Synthetic input dimension");
  sub->add_option("--spread", o.spread, "Synthetic within-class standard deviation");
  sub->add_option("--data-seed", o.data_seed, "Seed of the synthetic dataset");
  sub->add_option("--train-images", o.train_images, "IDX training images");
  sub->add_option("--train-labels", o.train_labels, "IDX training labels");
  sub->add_option("--test-images", o.test_images, "IDX test images");
  sub->add_option("--test-labels", o.test_labels, "IDX test labels");
  sub->add_option("--cifar-train", o.cifar_train, "CIFAR binary training batches, comma-separated");
  sub->add_option("--cifar-test", o.cifar_test, "CIFAR binary test batches, comma-separated");
  sub->add_option("--norm", o.norm, "CIFAR normalization: auto (per-dataset channel constants) or none");
}

void add_training_options(CLI::App* sub, Options& o) {
  sub->add_option("--hidden", o.hidden, "Encoder hidden widths, comma-separated");
  sub->add_option("--conv", o.conv, "Conv stem channels, comma-separated; empty for none (image datasets only)");
  sub->add_option("--conv-kernel", o.conv_kernel, "Conv stem kernel size");
  sub->add_option("--epochs", o.epochs, "Training epochs");
  sub->add_option("--lr", o.lr, "Base learning rate");
  sub->add_option("--momentum", o.momentum, "SGD momentum");
  sub->add_option("--weight-decay", o.weight_decay, "SGD weight decay");
  sub->add_option("--schedule", o.schedule, "Learning-rate schedule: cosine[:warmup] or step[:m1,m2,...] (factor 0.1)");
  sub->add_option("--smoothing", o.smoothing, "Label smoothing epsilon for the ls method");
  sub->add_flag("--flip", o.flip, "Random horizontal flips (image datasets only)");
  sub->add_option("--seed", o.seed, "Seed for initialization and sampling");
  sub->add_option("--out-dir", o.out_dir, "Output directory");
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = CLI::detail::trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Schedule parse_schedule(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "cosine") {
    CosineSchedule s;
    if (!arg.empty()) s.warmup_epochs = parse_double(arg, "--schedule cosine warm-up");
    if (s.warmup_epochs < 0.0) throw ConfigError("--schedule: warm-up epochs must be >= 0");
    return s;
  }
  if (kind == "step") {
    StepSchedule s;
    if (colon != std::string::npos) {
      s.milestones.clear();
      for (std::size_t v : parse_sizes(arg, "--schedule step milestones")) s.milestones.push_back(static_cast<int>(v));
    }
    return s;
  }
  throw ConfigError("--schedule must be cosine[:warmup] or step[:m1,m2,...], got '" + text + "'");
}

std::string to_string(const Schedule& schedule) {
  if (const auto* c = std::get_if<CosineSchedule>(&schedule)) {
    std::ostringstream s;
    s << "cosine:" << c->warmup_epochs;
    return s.str();
  }
  std::string s = "step:";
  const auto& step = std::get<StepSchedule>(schedule);
  for (std::size_t i = 0; i < step.milestones.size(); ++i) s += (i ? "," : "") + std::to_string(step.milestones[i]);
  return s;
}

std::vector<std::pair<std::size_t, double>> top_k(std::span<const double> probs, std::size_t k) {
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
  });
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(idx[i], probs[idx[i]]);
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options train_o, compare_o, targets_o;
  targets_o.n_hat = 4;

  CLI::App app{"Batch knowledge ensembling (BAKE) self-distillation toolkit", kToolName};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  app.footer(
      "Environment: BAKE_KIT_THREADS caps the worker threads of the parallel kernels.\n"
      "Exit codes: 0 ok, 1 runtime error, 2 configuration error, 3 data error.\n"
      "Precedence: command-line flags, then the --config file, then the defaults shown.");

  auto* train_cmd = app.add_subcommand("train", "Train one model and write manifest, metrics and checkpoint");
  auto* compare_cmd = app.add_subcommand("compare", "Train every (method, seed) cell and write a summary table");
  auto* targets_cmd = app.add_subcommand("targets", "Print the soft targets a checkpoint produces for one batch");

  std::string config_path;
  for (auto* sub : {train_cmd, compare_cmd, targets_cmd}) {
    sub->add_option("--config", config_path,
                    "JSON config: a flat {\"flag\": value} object or a run manifest");
  }
  add_method_options(train_cmd, train_o, false);
  add_data_options(train_cmd, train_o);
  add_training_options(train_cmd, train_o);

  add_method_options(compare_cmd, compare_o, true);
  compare_o.method = "vanilla,bake";
  compare_cmd->get_option("--method")->default_str("vanilla,bake");
  add_data_options(compare_cmd, compare_o);
  add_training_options(compare_cmd, compare_o);
  compare_cmd->get_option("--out-dir")->default_str("bake_compare");
  compare_o.out_dir = "bake_compare";
  compare_cmd->add_option("--seeds", compare_o.seeds, "Seeds per method, counting up from --seed");

  add_method_options(targets_cmd, targets_o, false);
  add_data_options(targets_cmd, targets_o);
  targets_cmd->add_option("--checkpoint", targets_o.checkpoint, "Checkpoint written by train");
  targets_cmd->add_option("--split", targets_o.split, "Dataset split to sample: train or test");
  targets_cmd->add_option("--batch", targets_o.batch, "Index of the batch within epoch 0");
  targets_cmd->add_option("--seed", targets_o.seed, "Sampler seed");

  for (auto* sub : {train_cmd, compare_cmd, targets_cmd}) {
    for (CLI::Option* opt : sub->get_options()) {
      if (opt->get_name() == "--help" || !opt->get_default_str().empty()) continue;
      opt->description(opt->get_description() + (opt->get_type_size() == 0 ? " (default: off)" : " (default: unset)"));
    }
  }

  try {
    const auto expanded = expand_config(app, args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
    apply_thread_cap();
    if (train_cmd->parsed()) return cmd_train(*train_cmd, train_o, out);
    if (compare_cmd->parsed()) return cmd_compare(*compare_cmd, compare_o, out);
    return cmd_targets(targets_o, out);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help("", CLI::AppFormatMode::All) : app.help());
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolName << " " << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << kToolName << ": configuration error: " << one_line(e.what()) << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << kToolName << ": configuration error: " << one_line(e.what()) << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << kToolName << ": data error: " << one_line(e.what()) << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << kToolName << ": error: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
}

}  // namespace bake::cli
