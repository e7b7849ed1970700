#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "roadinspect/adam.hpp"
#include "roadinspect/augment.hpp"
#include "roadinspect/error.hpp"
#include "roadinspect/imaging.hpp"
#include "roadinspect/losses.hpp"
#include "roadinspect/network.hpp"
#include "roadinspect/rng.hpp"

namespace roadinspect {

// ---------------------------------------------------------------------------
// Architecture

/// Damaged/undamaged sign classifier for input_size x input_size x 3 crops:
/// three conv(3x3)+ReLU / maxpool(2x2) blocks with 32, 64 and 128 filters,
/// flatten, dense 512 + ReLU, dropout 0.5, dense 1 + sigmoid.
inline nn::NetworkSpec build_damagenet(std::size_t input_size = 150) {
  if (input_size < 24) {
    throw ShapeError("damage net needs input_size >= 24, got " + std::to_string(input_size));
  }
  using namespace nn;
  NetworkSpec spec;
  spec.input_shape = {input_size, input_size, 3};
  spec.layers = {Conv2D{32, 3}, ReLU{}, MaxPool2{}, Conv2D{64, 3}, ReLU{}, MaxPool2{}, Conv2D{128, 3}, ReLU{},
                 MaxPool2{},    Flatten{}, Dense{512}, ReLU{},     Dropout{0.5}, Dense{1},     Sigmoid{}};
  shape_infer(spec);
  return spec;
}

/// Architecture stages with activations folded into the layer they follow,
/// preceded by the input stage; e.g. "input(150x150x3)", "conv2d(32,3)+relu".
inline std::vector<std::string> describe_stages(const nn::NetworkSpec& spec) {
  std::vector<std::string> out = {"input(" + shape_string(spec.input_shape) + ")"};
  for (const auto& layer : spec.layers) {
    const bool activation = std::holds_alternative<nn::ReLU>(layer) || std::holds_alternative<nn::Sigmoid>(layer);
    if (activation && !out.empty() && out.size() > 1) {
      out.back() += "+" + nn::layer_name(layer);
    } else {
      out.push_back(nn::layer_name(layer));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training configuration (flat "key = value" file, '#' comments)

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double train_fraction = 0.8;
  std::uint64_t seed = 42;
  std::size_t input_size = 150;
  double label_smoothing = 0.0;
  double threshold = 0.5;
  FocalConfig focal;
  AdamConfig adam;
  AugmentConfig augment;

  /// input 48, cutout 12, lr 5e-4, focal alpha 0.5.
  static TrainConfig tiny() {
    TrainConfig c;
    c.input_size = 48;
    c.augment.cutout_size = 12;
    c.adam.lr = 5e-4;
    c.focal.alpha = 0.5;
    return c;
  }

  void validate() const {
    if (epochs < 1) throw Error("config: epochs must be >= 1");
    if (batch_size < 1) throw Error("config: batch_size must be >= 1");
    if (!(train_fraction > 0 && train_fraction < 1)) throw Error("config: train_fraction must be in (0,1)");
    if (input_size < 24) throw Error("config: input_size must be >= 24");
    if (!(label_smoothing >= 0 && label_smoothing < 1)) throw Error("config: label_smoothing must be in [0,1)");
    if (!(threshold > 0 && threshold < 1)) throw Error("config: threshold must be in (0,1)");
    if (focal.alpha < 0 || focal.alpha > 1 || focal.gamma < 0) throw Error("config: bad focal parameters");
    const auto& a = augment;
    if (a.hflip_prob < 0 || a.hflip_prob > 1 || a.cutout_prob < 0 || a.cutout_prob > 1) {
      throw Error("config: augmentation probabilities must be in [0,1]");
    }
    if (a.rotation_deg < 0 || a.width_shift < 0 || a.height_shift < 0 || a.shear_deg < 0 || a.zoom < 0) {
      throw Error("config: augmentation magnitudes must be >= 0");
    }
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Ordered view of every config key; used for parsing and for snapshots.
template <typename Cfg, typename Fn>
void visit_config(Cfg& c, Fn&& fn) {
  fn("epochs", c.epochs);
  fn("batch_size", c.batch_size);
  fn("train_fraction", c.train_fraction);
  fn("seed", c.seed);
  fn("input_size", c.input_size);
  fn("label_smoothing", c.label_smoothing);
  fn("threshold", c.threshold);
  fn("focal_alpha", c.focal.alpha);
  fn("focal_gamma", c.focal.gamma);
  fn("focal_epsilon", c.focal.epsilon);
  fn("learning_rate", c.adam.lr);
  fn("adam_beta1", c.adam.beta1);
  fn("adam_beta2", c.adam.beta2);
  fn("adam_epsilon", c.adam.eps);
  fn("aug_rotation_deg", c.augment.rotation_deg);
  fn("aug_width_shift", c.augment.width_shift);
  fn("aug_height_shift", c.augment.height_shift);
  fn("aug_shear_deg", c.augment.shear_deg);
  fn("aug_zoom", c.augment.zoom);
  fn("aug_hflip_prob", c.augment.hflip_prob);
  fn("cutout_size", c.augment.cutout_size);
  fn("cutout_prob", c.augment.cutout_prob);
}

inline std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& file,
                                                           std::map<std::string, std::size_t>* lines = nullptr) {
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(file, line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(file, line_no, "empty key");
    kv[key] = trim(line.substr(eq + 1));
    if (lines) (*lines)[key] = line_no;
    if (end == text.size()) break;
  }
  return kv;
}

}  // namespace detail

/// Keys mirror TrainConfig (see detail::visit_config); an optional
/// "preset = paper|tiny" selects the starting defaults.
inline TrainConfig parse_train_config(std::string_view text, const std::string& file = {}) {
  std::map<std::string, std::size_t> lines;
  auto kv = detail::parse_key_values(text, file, &lines);
  TrainConfig cfg;
  if (auto it = kv.find("preset"); it != kv.end()) {
    if (it->second == "tiny") cfg = TrainConfig::tiny();
    else if (it->second != "paper") throw ParseError(file, lines.at("preset"), "unknown preset '" + it->second + "'");
    kv.erase(it);
  }
  detail::visit_config(cfg, [&](const char* key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    using F = std::remove_reference_t<decltype(field)>;
    std::istringstream in(it->second);
    F value{};
    if constexpr (std::is_unsigned_v<F>) {
      if (!it->second.empty() && it->second[0] == '-') {
        throw ParseError(file, lines.at(key), std::string(key) + " must be >= 0");
      }
    }
    if (!(in >> value) || !(in >> std::ws).eof()) {
      throw ParseError(file, lines.at(key), std::string("bad value for ") + key + ": '" + it->second + "'");
    }
    field = value;
    kv.erase(it);
  });
  if (!kv.empty()) {
    const auto& key = kv.begin()->first;
    throw ParseError(file, lines.at(key), "unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline std::vector<std::pair<std::string, std::string>> config_snapshot(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  TrainConfig copy = cfg;
  detail::visit_config(copy, [&](const char* key, auto& field) {
    using F = std::remove_reference_t<decltype(field)>;
    if constexpr (std::is_floating_point_v<F>) out.emplace_back(key, detail::fmt_double(field));
    else out.emplace_back(key, std::to_string(field));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Data

struct LabeledCrop {
  std::filesystem::path path;
  int label = 0;  // 1 damaged, 0 undamaged
};

struct LabeledCropSet {
  std::vector<LabeledCrop> items;

  std::size_t count(int label) const {
    return static_cast<std::size_t>(
        std::count_if(items.begin(), items.end(), [&](const LabeledCrop& c) { return c.label == label; }));
  }
};

struct Sample {
  Tensor image;  // input_size x input_size x 3, values in [0,1]
  int label = 0;
};

inline Tensor prepare_input(const ImageRGB8& img, std::size_t input_size) {
  return to_float_norm(resize_bilinear(img, input_size, input_size));
}

inline std::vector<Sample> load_samples(const LabeledCropSet& set, std::size_t input_size) {
  std::vector<Sample> out;
  out.reserve(set.items.size());
  for (const auto& item : set.items) out.push_back({prepare_input(load_ppm(item.path), input_size), item.label});
  return out;
}

struct Split {
  std::vector<std::size_t> train;  // indices into the source set
  std::vector<std::size_t> val;
};

/// Seeded uniform shuffle; the first floor(fraction * n) indices train.
inline Split split_dataset(std::size_t n, double fraction, std::uint64_t seed) {
  if (n < 2) throw TooFewSamples("need at least 2 samples to split, got " + std::to_string(n));
  if (!(fraction > 0 && fraction < 1)) throw Error("split fraction must be in (0,1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return s;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& items, double fraction,
                                                        std::uint64_t seed) {
  const Split s = split_dataset(items.size(), fraction, seed);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (auto i : s.train) out.first.push_back(items[i]);
  for (auto i : s.val) out.second.push_back(items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct ModelCheckpoint {
  static constexpr int kFormatVersion = 1;
  nn::NetworkSpec spec;
  nn::ParamSet<float> params;
  std::vector<std::pair<std::string, std::string>> config;  // training config snapshot
  int format_version = kFormatVersion;

  std::size_t input_size() const { return spec.input_shape.at(0); }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0, train_acc = 0, train_prec = 0, train_rec = 0;
  double val_loss = 0, val_acc = 0, val_prec = 0, val_rec = 0;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainResult {
  ModelCheckpoint model;
  double initial_train_loss = 0;  // train-split loss before the first update
  std::vector<EpochMetrics> history;
};

/// Sigmoid output of one prepared sample in eval mode.
inline double predict_tensor(const ModelCheckpoint& model, const Tensor& x) {
  Rng unused(0);
  const auto cache = nn::forward_sample(model.spec, model.params, x, nn::Mode::Eval, unused);
  return static_cast<double>(cache.output()[0]);
}

/// Damaged probability for an arbitrary-size crop.
inline double predict(const ModelCheckpoint& model, const ImageRGB8& img) {
  return predict_tensor(model, prepare_input(img, model.input_size()));
}

namespace detail {

struct SetScore {
  double loss = 0;
  BinaryMetrics metrics;
};

inline SetScore score_set(const ModelCheckpoint& model, const std::vector<Sample>& samples,
                          const std::vector<std::size_t>& idx, const TrainConfig& cfg) {
  SetScore s;
  std::vector<double> probs;
  std::vector<int> labels;
  Rng unused(0);
  const std::size_t end = nn::logit_layer_end(model.spec);
  for (auto i : idx) {
    const auto cache = nn::forward_sample(model.spec, model.params, samples[i].image, nn::Mode::Eval, unused);
    const double z = cache.acts[end][0];
    s.loss += sigmoid_focal_ce(z, samples[i].label, cfg.focal).loss;
    probs.push_back(cache.output()[0]);
    labels.push_back(samples[i].label);
  }
  s.loss /= static_cast<double>(idx.size());
  s.metrics = binary_metrics(probs, labels, cfg.threshold);
  return s;
}

}  // namespace detail

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains the damage net on in-memory samples. Per epoch: reshuffle the train
/// split with seed ^ epoch, run mini-batches (augment, forward in train mode,
/// mean focal loss on the logit, backward, one Adam step), then score train and
/// validation splits without augmentation in eval mode.
inline TrainResult train(const std::vector<Sample>& samples, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const Split split = split_dataset(samples.size(), cfg.train_fraction, cfg.seed);
  {
    bool pos = false, neg = false;
    for (auto i : split.train) (samples[i].label ? pos : neg) = true;
    if (!(pos && neg)) throw SingleClassTrainingSet("training split contains a single class");
  }

  TrainResult result;
  ModelCheckpoint& model = result.model;
  model.spec = build_damagenet(cfg.input_size);
  for (const auto& s : samples) {
    if (s.image.shape() != model.spec.input_shape) {
      throw ShapeError("sample shape " + shape_string(s.image.shape()) + " != " + shape_string(model.spec.input_shape));
    }
  }
  model.params = nn::init_params<float>(model.spec, cfg.seed);
  model.config = config_snapshot(cfg);
  AdamState<float> opt(model.params, cfg.adam);
  const std::size_t logit_end = nn::logit_layer_end(model.spec);
  result.initial_train_loss = detail::score_set(model, samples, split.train, cfg).loss;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng(cfg.seed ^ epoch).shuffle(order);
    const std::uint64_t epoch_seed = mix64(cfg.seed) ^ mix64(epoch + 1);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto batch_n = static_cast<double>(stop - start);
      nn::ParamSet<float> grads = nn::zeros_like(model.params);
      for (std::size_t p = start; p < stop; ++p) {
        const Sample& s = samples[order[p]];
        Rng rng = Rng::stream(epoch_seed, order[p]);
        const Tensor x = augment(s.image, cfg.augment, rng);
        const auto cache = nn::forward_sample(model.spec, model.params, x, nn::Mode::Train, rng);
        const double target = label_smooth(s.label, cfg.label_smoothing);
        const LossGrad lg = sigmoid_focal_ce(cache.acts[logit_end][0], target, cfg.focal);
        Tensor seed(cache.acts[logit_end].shape(), static_cast<float>(lg.grad / batch_n));
        nn::backward_sample(model.spec, model.params, cache, std::move(seed), logit_end, grads);
      }
      adam_step(opt, model.params, grads);
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    const auto tr = detail::score_set(model, samples, split.train, cfg);
    const auto va = detail::score_set(model, samples, split.val, cfg);
    m.train_loss = tr.loss;
    m.train_acc = tr.metrics.accuracy;
    m.train_prec = tr.metrics.precision;
    m.train_rec = tr.metrics.recall;
    m.val_loss = va.loss;
    m.val_acc = va.metrics.accuracy;
    m.val_prec = va.metrics.precision;
    m.val_rec = va.metrics.recall;
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

inline TrainResult train(const LabeledCropSet& set, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  return train(load_samples(set, cfg.input_size), cfg, on_epoch);
}

// ---------------------------------------------------------------------------
// Model files: text manifest at `path`, float32 little-endian blob next to it.

inline std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".weights";
  return p;
}

namespace detail {

inline std::string layer_manifest_entry(const nn::LayerSpec& layer, const Shape& out, const Shape& w, const Shape& b) {
  std::string s = std::visit(nn::overloaded{
                                 [](const nn::Conv2D& l) {
                                   return "conv2d filters=" + std::to_string(l.filters) +
                                          " kernel=" + std::to_string(l.kernel);
                                 },
                                 [](const nn::MaxPool2&) { return std::string("maxpool2"); },
                                 [](const nn::ReLU&) { return std::string("relu"); },
                                 [](const nn::Flatten&) { return std::string("flatten"); },
                                 [](const nn::Dense& l) { return "dense units=" + std::to_string(l.units); },
                                 [](const nn::Dropout& l) { return "dropout rate=" + fmt_double(l.rate); },
                                 [](const nn::Sigmoid&) { return std::string("sigmoid"); },
                             },
                             layer);
  s += " out=" + shape_string(out);
  if (!w.empty()) s += " weight=" + shape_string(w) + " bias=" + shape_string(b);
  return s;
}

inline Shape parse_shape(const std::string& s) {
  Shape out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t end = s.find('x', pos);
    if (end == std::string::npos) end = s.size();
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + end, v);
    if (ec != std::errc() || ptr != s.data() + end || v == 0) throw ModelFormatError("bad shape '" + s + "'");
    out.push_back(v);
    pos = end + 1;
  }
  return out;
}

inline nn::LayerSpec parse_layer_entry(const std::string& entry, std::map<std::string, std::string>& attrs) {
  std::istringstream in(entry);
  std::string kind, tok;
  in >> kind;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ModelFormatError("bad layer attribute '" + tok + "'");
    attrs[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto num = [&](const char* key) -> std::size_t {
    auto it = attrs.find(key);
    if (it == attrs.end()) throw ModelFormatError(kind + ": missing " + key);
    return std::stoul(it->second);
  };
  if (kind == "conv2d") return nn::Conv2D{num("filters"), num("kernel")};
  if (kind == "maxpool2") return nn::MaxPool2{};
  if (kind == "relu") return nn::ReLU{};
  if (kind == "flatten") return nn::Flatten{};
  if (kind == "dense") return nn::Dense{num("units")};
  if (kind == "dropout") {
    if (!attrs.count("rate")) throw ModelFormatError("dropout: missing rate");
    return nn::Dropout{std::stod(attrs["rate"])};
  }
  if (kind == "sigmoid") return nn::Sigmoid{};
  throw ModelFormatError("unknown layer kind '" + kind + "'");
}

inline void put_f32_le(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline float get_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline void save_model(const ModelCheckpoint& model, const std::filesystem::path& path) {
  const nn::ShapeReport shapes = nn::shape_infer(model.spec);
  nn::check_params(model.spec, model.params);
  const auto blob_path = blob_path_for(path);

  std::vector<std::uint8_t> blob;
  blob.reserve(shapes.param_count * 4);
  for (const auto& lp : model.params) {
    if (!lp.has_params()) continue;
    for (float f : lp.weight.data()) detail::put_f32_le(blob, f);
    for (float f : lp.bias.data()) detail::put_f32_le(blob, f);
  }

  std::ostringstream m;
  m << "# roadinspect model manifest\n";
  m << "format_version=" << model.format_version << "\n";
  m << "byte_order=little-endian\n";
  m << "dtype=float32\n";
  m << "input_shape=" << shape_string(model.spec.input_shape) << "\n";
  m << "layers=" << model.spec.layers.size() << "\n";
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    m << "layer." << i << "="
      << detail::layer_manifest_entry(model.spec.layers[i], shapes.outputs[i], shapes.weight_shapes[i],
                                      shapes.bias_shapes[i])
      << "\n";
  }
  m << "param_count=" << shapes.param_count << "\n";
  m << "blob=" << blob_path.filename().string() << "\n";
  m << "blob_bytes=" << blob.size() << "\n";
  for (const auto& [k, v] : model.config) m << "config." << k << "=" << v << "\n";

  write_file_bytes(blob_path, blob);
  const std::string text = m.str();
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline ModelCheckpoint load_model(const std::filesystem::path& path) {
  std::string text;
  try {
    const Bytes raw = read_file_bytes(path);
    text.assign(raw.begin(), raw.end());
  } catch (const IoError& e) {
    throw ModelFormatError(e.what());
  }
  std::map<std::string, std::string> kv;
  try {
    kv = detail::parse_key_values(text, path.string());
  } catch (const ParseError& e) {
    throw ModelFormatError(e.what());
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ModelFormatError(path.string() + ": manifest missing '" + key + "'");
    return it->second;
  };

  ModelCheckpoint model;
  try {
    model.format_version = std::stoi(get("format_version"));
  } catch (const std::logic_error&) {
    throw ModelFormatError("bad format_version");
  }
  if (model.format_version != ModelCheckpoint::kFormatVersion) {
    throw ModelFormatError("unsupported model format_version " + get("format_version"));
  }
  if (get("byte_order") != "little-endian") throw ModelFormatError("unsupported byte_order " + get("byte_order"));
  if (get("dtype") != "float32") throw ModelFormatError("unsupported dtype " + get("dtype"));

  std::vector<std::map<std::string, std::string>> layer_attrs;
  try {
    model.spec.input_shape = detail::parse_shape(get("input_shape"));
    const std::size_t n = std::stoul(get("layers"));
    for (std::size_t i = 0; i < n; ++i) {
      std::map<std::string, std::string> attrs;
      model.spec.layers.push_back(detail::parse_layer_entry(get("layer." + std::to_string(i)), attrs));
      layer_attrs.push_back(std::move(attrs));
    }
  } catch (const std::logic_error& e) {
    throw ModelFormatError(std::string("bad layer list: ") + e.what());
  }

  nn::ShapeReport shapes;
  try {
    shapes = nn::shape_infer(model.spec);
  } catch (const ShapeError& e) {
    throw ModelFormatError(std::string("manifest describes an invalid network: ") + e.what());
  }
  for (std::size_t i = 0; i < shapes.outputs.size(); ++i) {
    const auto& a = layer_attrs[i];
    auto check = [&](const char* key, const Shape& expect) {
      auto it = a.find(key);
      if (expect.empty() && it == a.end()) return;
      if (it == a.end() || detail::parse_shape(it->second) != expect) {
        throw ModelFormatError("layer " + std::to_string(i) + ": " + key + " shape does not match inferred " +
                               shape_string(expect));
      }
    };
    check("out", shapes.outputs[i]);
    check("weight", shapes.weight_shapes[i]);
    check("bias", shapes.bias_shapes[i]);
  }
  if (std::to_string(shapes.param_count) != get("param_count")) throw ModelFormatError("param_count mismatch");

  const auto blob_path = path.parent_path() / get("blob");
  Bytes blob;
  try {
    blob = read_file_bytes(blob_path);
  } catch (const IoError& e) {
    throw ModelFormatError(e.what());
  }
  if (blob.size() != shapes.param_count * 4) {
    throw ModelFormatError("weight blob has " + std::to_string(blob.size()) + " bytes, expected " +
                           std::to_string(shapes.param_count * 4));
  }
  if (get("blob_bytes") != std::to_string(blob.size())) throw ModelFormatError("blob_bytes mismatch");

  std::size_t off = 0;
  model.params.resize(model.spec.layers.size());
  auto read_tensor = [&](const Shape& shape) {
    Tensor t(shape);
    for (auto& v : t.vec()) {
      v = detail::get_f32_le(blob.data() + off);
      off += 4;
    }
    return t;
  };
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    if (shapes.weight_shapes[i].empty()) continue;
    model.params[i].weight = read_tensor(shapes.weight_shapes[i]);
    model.params[i].bias = read_tensor(shapes.bias_shapes[i]);
  }
  // manifest order, not map order
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const std::string key = detail::trim(line.substr(0, line.find('=')));
    if (key.rfind("config.", 0) == 0 && kv.count(key)) model.config.emplace_back(key.substr(7), kv.at(key));
  }
  return model;
}

// ---------------------------------------------------------------------------
// History

inline std::string format_history_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,train_loss,train_acc,train_prec,train_rec,val_loss,val_acc,val_prec,val_rec\n";
  char buf[256];
  for (const auto& m : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.epoch, m.train_loss, m.train_acc,
                  m.train_prec, m.train_rec, m.val_loss, m.val_acc, m.val_prec, m.val_rec);
    out += buf;
  }
  return out;
}

inline void emit_history_csv(const std::vector<EpochMetrics>& history, const std::filesystem::path& path) {
  if (history.empty()) throw Error("emit_history_csv: empty history");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_history_csv(history);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace roadinspect
