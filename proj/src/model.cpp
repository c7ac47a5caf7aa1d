#include "specfas/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "specfas/dataio.hpp"
#include "specfas/ops.hpp"
#include "specfas/rng.hpp"

namespace specfas {

void ModelConfig::validate() const {
  if (channels.size() != 3) throw std::invalid_argument("model needs exactly three block widths");
  if (kernel_size % 2 == 0) throw std::invalid_argument(fmt::format("kernel_size must be odd, got {}", kernel_size));
  if (attention_maps == 0 || proj_dim == 0 || in_channels == 0) {
    throw std::invalid_argument("attention_maps, proj_dim and in_channels must be positive");
  }
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument(fmt::format("theta must lie in [0, 1], got {}", theta));
  if (height == 0 || width == 0) throw std::invalid_argument("input dims must be positive");
}

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor normal(Shape shape, double stddev, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::derive(cfg.seed, {0x4d4f44454c});
  const std::size_t k = cfg.kernel_size;
  const auto& ch = cfg.channels;
  ModelParams p;
  p.spectral_weights = Tensor::ones({cfg.in_channels}, true);
  p.cdc_kernel = he_normal({k, k, cfg.in_channels, ch[0]}, k * k * cfg.in_channels, rng);
  p.cdc_bias = Tensor::zeros({ch[0]}, true);
  p.conv2_kernel = he_normal({k, k, ch[0], ch[1]}, k * k * ch[0], rng);
  p.conv2_bias = Tensor::zeros({ch[1]}, true);
  p.conv3_kernel = he_normal({k, k, ch[1], ch[2]}, k * k * ch[1], rng);
  p.conv3_bias = Tensor::zeros({ch[2]}, true);
  p.attention_kernel = normal({1, 1, ch[2], cfg.attention_maps}, 0.1, rng);
  p.attention_bias = Tensor::zeros({cfg.attention_maps}, true);
  const std::size_t feat = cfg.feature_dim();
  p.classifier_weight = normal({feat, 2}, std::sqrt(1.0 / static_cast<double>(feat)), rng);
  p.classifier_bias = Tensor::zeros({2}, true);
  p.projector_weight = normal({feat, cfg.proj_dim}, std::sqrt(1.0 / static_cast<double>(feat)), rng);
  // Nonzero so z stays defined even when every feature is dead.
  p.projector_bias = normal({cfg.proj_dim}, 0.01, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  return {{"spectral_weights", spectral_weights}, {"cdc_kernel", cdc_kernel},
          {"cdc_bias", cdc_bias},                 {"conv2_kernel", conv2_kernel},
          {"conv2_bias", conv2_bias},             {"conv3_kernel", conv3_kernel},
          {"conv3_bias", conv3_bias},             {"attention_kernel", attention_kernel},
          {"attention_bias", attention_bias},     {"classifier_weight", classifier_weight},
          {"classifier_bias", classifier_bias},   {"projector_weight", projector_weight},
          {"projector_bias", projector_bias}};
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& [key, slot] : std::initializer_list<std::pair<const char*, Tensor*>>{
           {"spectral_weights", &spectral_weights}, {"cdc_kernel", &cdc_kernel},
           {"cdc_bias", &cdc_bias},                 {"conv2_kernel", &conv2_kernel},
           {"conv2_bias", &conv2_bias},             {"conv3_kernel", &conv3_kernel},
           {"conv3_bias", &conv3_bias},             {"attention_kernel", &attention_kernel},
           {"attention_bias", &attention_bias},     {"classifier_weight", &classifier_weight},
           {"classifier_bias", &classifier_bias},   {"projector_weight", &projector_weight},
           {"projector_bias", &projector_bias}}) {
    if (name == key) return *slot;
  }
  throw std::out_of_range(fmt::format("no model parameter named '{}'", name));
}

ModelParams ModelParams::clone() const {
  ModelParams p = *this;
  for (Tensor* t : {&p.spectral_weights, &p.cdc_kernel, &p.cdc_bias, &p.conv2_kernel, &p.conv2_bias,
                    &p.conv3_kernel, &p.conv3_bias, &p.attention_kernel, &p.attention_bias, &p.classifier_weight,
                    &p.classifier_bias, &p.projector_weight, &p.projector_bias}) {
    *t = t->clone();
  }
  return p;
}

void ModelParams::zero_grad() {
  for (auto& t : tensors()) t.zero_grad();
}

// ---------------------------------------------------------------------------

Tensor spectral_weight_layer(const Tensor& x, const Tensor& weights) {
  if (weights.dim() != 1 || x.dim() == 0 || x.size(x.dim() - 1) != weights.size(0)) {
    throw ShapeError(fmt::format("spectral weights {} do not match input channels of {}", shape_str(weights.shape()),
                                 shape_str(x.shape())));
  }
  return x * weights;
}

Tensor cdc_conv(const Tensor& x, const Tensor& kernel, double theta, std::size_t stride) {
  if (kernel.dim() != 4 || kernel.size(0) % 2 == 0 || kernel.size(1) % 2 == 0) {
    throw ShapeError(fmt::format("cdc kernel must be [k, k, cin, cout] with odd k, got {}", shape_str(kernel.shape())));
  }
  const std::size_t pad = kernel.size(0) / 2;
  if (kernel.size(1) / 2 != pad) {
    throw ShapeError(fmt::format("cdc kernel must be square, got {}", shape_str(kernel.shape())));
  }
  const Tensor vanilla = ops::conv2d(x, kernel, {stride, pad});
  if (theta == 0.0) return vanilla;
  // With "same" padding, output (i, j) is centred on input (i*stride, j*stride),
  // which is exactly what a 1x1 stride-s convolution reads.
  const Tensor tap_sum = ops::sum_axis(ops::sum_axis(kernel, 0, true), 1, true);
  const Tensor centre = ops::conv2d(x, tap_sum, {stride, 0});
  return vanilla - ops::scale(centre, theta);
}

Tensor attention_maps(const Tensor& features, const Tensor& kernel, const Tensor& bias) {
  if (features.dim() != 4) {
    throw ShapeError(fmt::format("attention expects [n, h, w, c], got {}", shape_str(features.shape())));
  }
  const std::size_t n = features.size(0);
  const std::size_t positions = features.size(1) * features.size(2);
  const Tensor logits = ops::conv2d(features, kernel) + bias;
  const std::size_t a = logits.size(3);
  return ops::softmax(ops::transpose_last2(ops::reshape(logits, {n, positions, a})));
}

Tensor mat_lite_forward(const Tensor& features, const Tensor& kernel, const Tensor& bias) {
  const Tensor maps = attention_maps(features, kernel, bias);
  const std::size_t n = features.size(0);
  const std::size_t positions = features.size(1) * features.size(2);
  const std::size_t c = features.size(3);
  const Tensor pooled = ops::matmul(maps, ops::reshape(features, {n, positions, c}));
  return ops::reshape(pooled, {n, maps.size(1) * c});
}

ModelOutput model_forward(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
  if (x.dim() != 4 || x.size(1) != cfg.height || x.size(2) != cfg.width || x.size(3) != cfg.in_channels) {
    throw ShapeError(fmt::format("model expects input [n, {}, {}, {}], got {}", cfg.height, cfg.width,
                                 cfg.in_channels, shape_str(x.shape())));
  }
  const std::size_t pad = cfg.kernel_size / 2;
  Tensor h = spectral_weight_layer(x, params.spectral_weights);
  h = ops::relu(cdc_conv(h, params.cdc_kernel, cfg.theta, 2) + params.cdc_bias);
  h = ops::relu(ops::conv2d(h, params.conv2_kernel, {2, pad}) + params.conv2_bias);
  h = ops::relu(ops::conv2d(h, params.conv3_kernel, {2, pad}) + params.conv3_bias);
  ModelOutput out;
  out.features = mat_lite_forward(h, params.attention_kernel, params.attention_bias);
  out.logits = ops::matmul(out.features, params.classifier_weight) + params.classifier_bias;
  out.z = ops::l2_normalize(ops::matmul(out.features, params.projector_weight) + params.projector_bias);
  return out;
}

std::vector<double> fake_scores(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
  NoGradGuard no_grad;
  const Tensor probs = ops::softmax(model_forward(x, params, cfg).logits);
  std::vector<double> scores(probs.size(0));
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = probs.at({i, static_cast<std::size_t>(Label::Fake)});
  return scores;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "SPFS-CHECKPOINT 1";

std::map<std::string, std::string> config_entries(const ModelConfig& cfg) {
  return {{"model.height", std::to_string(cfg.height)},
          {"model.width", std::to_string(cfg.width)},
          {"model.in_channels", std::to_string(cfg.in_channels)},
          {"model.kernel_size", std::to_string(cfg.kernel_size)},
          {"model.channels", fmt::format("{}", fmt::join(cfg.channels, ","))},
          {"model.attention_maps", std::to_string(cfg.attention_maps)},
          {"model.proj_dim", std::to_string(cfg.proj_dim)},
          {"model.theta", fmt::format("{:.17g}", cfg.theta)},
          {"model.seed", std::to_string(cfg.seed)}};
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

ModelConfig config_from(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError(fmt::format("checkpoint header lacks '{}'", key));
    return it->second;
  };
  ModelConfig cfg;
  cfg.height = to_size(get("model.height"));
  cfg.width = to_size(get("model.width"));
  cfg.in_channels = to_size(get("model.in_channels"));
  cfg.kernel_size = to_size(get("model.kernel_size"));
  cfg.channels.clear();
  std::istringstream ch(get("model.channels"));
  for (std::string part; std::getline(ch, part, ',');) cfg.channels.push_back(to_size(part));
  cfg.attention_maps = to_size(get("model.attention_maps"));
  cfg.proj_dim = to_size(get("model.proj_dim"));
  cfg.theta = std::stod(get("model.theta"));
  cfg.seed = std::stoull(get("model.seed"));
  cfg.validate();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelConfig& cfg,
                     const std::map<std::string, std::string>& hyperparameters) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(fmt::format("cannot open {} for writing", path.string()));
  auto header = hyperparameters;
  for (auto& [k, v] : config_entries(cfg)) header[k] = v;
  out << kCheckpointMagic << '\n';
  for (const auto& [k, v] : header) out << k << " = " << v << '\n';
  const auto named = params.named();
  for (const auto& [name, t] : named) out << "tensor " << name << ' ' << fmt::format("{}", fmt::join(t.shape(), " ")) << '\n';
  out << "end\n";
  for (const auto& [name, t] : named) {
    const Shape& s = t.shape();
    ContainerRecord record;
    record.c = static_cast<std::uint32_t>(s.empty() ? 1 : s.back());
    record.w = static_cast<std::uint32_t>(s.size() >= 2 ? s[s.size() - 2] : 1);
    std::size_t lead = 1;
    for (std::size_t i = 0; i + 2 < s.size(); ++i) lead *= s[i];
    record.h = static_cast<std::uint32_t>(lead);
    record.values.assign(t.data().begin(), t.data().end());
    write_container(out, record, ContainerPrecision::Float64);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(fmt::format("cannot open checkpoint {}", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw CheckpointError(fmt::format("{} is not a checkpoint", path.string()));
  }
  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::string, Shape>> layout;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ls(line.substr(7));
      std::string name;
      ls >> name;
      Shape shape;
      for (std::size_t d; ls >> d;) shape.push_back(d);
      layout.emplace_back(name, shape);
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw CheckpointError(fmt::format("malformed checkpoint header line '{}'", line));
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (!ended) throw CheckpointError("checkpoint header is truncated");

  Checkpoint ckpt;
  ckpt.config = config_from(kv);
  ckpt.params = ModelParams::init(ckpt.config);
  for (auto& [k, v] : kv) {
    if (k.rfind("model.", 0) != 0) ckpt.hyperparameters[k] = v;
  }
  auto named = ckpt.params.named();
  if (layout.size() != named.size()) {
    throw CheckpointError(fmt::format("checkpoint has {} tensors, model needs {}", layout.size(), named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, tensor] = named[i];
    if (layout[i].first != name || layout[i].second != tensor.shape()) {
      throw CheckpointError(fmt::format("checkpoint tensor {} {} does not match model tensor {} {}", layout[i].first,
                                        shape_str(layout[i].second), name, shape_str(tensor.shape())));
    }
    ContainerRecord record = read_container(in);
    if (record.values.size() != tensor.numel()) {
      throw CheckpointError(fmt::format("checkpoint tensor {} holds {} values, expected {}", name,
                                        record.values.size(), tensor.numel()));
    }
    std::copy(record.values.begin(), record.values.end(), tensor.mutable_data().begin());
  }
  return ckpt;
}

}  // namespace specfas
