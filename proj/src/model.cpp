#include "heteroiot/model.hpp"

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "heteroiot/errors.hpp"
#include "heteroiot/ops.hpp"

namespace hiot {

namespace {

std::size_t head_input_width(const ModelConfig& c) {
  const std::size_t local = c.kernel_sizes.size() * c.conv_filters_narrow;
  const std::size_t global = c.gru_dims.empty() ? 0 : 2 * c.gru_dims.back();
  switch (c.variant) {
    case Variant::Full: return local + global;
    case Variant::GlobalOnly: return global;
    case Variant::LocalOnly: return local;
    case Variant::MlpOnly: return c.input_length;
  }
  return 0;
}

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::GlobalOnly: return "global-only";
    case Variant::LocalOnly: return "local-only";
    case Variant::MlpOnly: return "mlp-only";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::Full, Variant::GlobalOnly, Variant::LocalOnly, Variant::MlpOnly})
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown model variant '" + std::string(name) +
                    "' (expected full, global-only, local-only or mlp-only)");
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (input_length < 1) throw ConfigError("model: input_length must be >= 1");
  if (mlp_widths.empty()) throw ConfigError("model: mlp_widths must not be empty");
  for (auto w : mlp_widths)
    if (w < 2) throw ConfigError("model: mlp widths must be >= 2 (layer norm)");
  const bool local = variant == Variant::Full || variant == Variant::LocalOnly;
  const bool global = variant == Variant::Full || variant == Variant::GlobalOnly;
  if (local) {
    if (kernel_sizes.empty()) throw ConfigError("model: kernel_sizes must not be empty");
    for (auto k : kernel_sizes)
      if (k < 1) throw ConfigError("model: kernel sizes must be >= 1");
    if (conv_filters_wide < 1 || conv_filters_narrow < 1)
      throw ConfigError("model: conv filter counts must be positive");
    if (input_length < 4)
      throw ConfigError("model: conv blocks need input_length >= 4 (two pooling stages)");
  }
  if (global) {
    if (gru_dims.empty()) throw ConfigError("model: gru_dims must not be empty");
    for (auto d : gru_dims)
      if (d < 1) throw ConfigError("model: gru dims must be positive");
  }
}

ModelConfig ModelConfig::scaled(std::size_t divisor) const {
  if (divisor < 1) throw ConfigError("model: scale divisor must be >= 1");
  auto div = [divisor](std::size_t w) { return std::max<std::size_t>(2, w / divisor); };
  ModelConfig c = *this;
  c.conv_filters_wide = div(conv_filters_wide);
  c.conv_filters_narrow = div(conv_filters_narrow);
  for (auto& d : c.gru_dims) d = div(d);
  for (auto& w : c.mlp_widths) w = div(w);
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"variant", std::string(variant_name(c.variant))},
                     {"input_length", c.input_length},
                     {"num_classes", c.num_classes},
                     {"seed", c.seed},
                     {"kernel_sizes", c.kernel_sizes},
                     {"conv_filters", {c.conv_filters_wide, c.conv_filters_narrow}},
                     {"gru_dims", c.gru_dims},
                     {"mlp_widths", c.mlp_widths}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("input_length")) j.at("input_length").get_to(c.input_length);
  if (j.contains("num_classes")) j.at("num_classes").get_to(c.num_classes);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("kernel_sizes")) j.at("kernel_sizes").get_to(c.kernel_sizes);
  if (j.contains("conv_filters")) {
    const auto& f = j.at("conv_filters");
    if (!f.is_array() || f.size() != 2)
      throw ConfigError("model config: conv_filters must be [wide, narrow]");
    f[0].get_to(c.conv_filters_wide);
    f[1].get_to(c.conv_filters_narrow);
  }
  if (j.contains("gru_dims")) j.at("gru_dims").get_to(c.gru_dims);
  if (j.contains("mlp_widths")) j.at("mlp_widths").get_to(c.mlp_widths);
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open model config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model config " + path + ": " + e.what());
  }
  ModelConfig c = j.get<ModelConfig>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

ConvBlock::ConvBlock(std::size_t kernel_size, std::size_t wide, std::size_t narrow,
                     std::uint64_t seed, const std::string& name)
    : kernel_size_(kernel_size) {
  std::size_t in = 1;
  for (std::size_t i = 0; i < kLayers; ++i) {
    const std::size_t out = i < 3 ? wide : narrow;
    layers_.push_back(nn::Conv1DLayer::create(kernel_size, in, out, seed,
                                              name + ".conv" + std::to_string(i + 1)));
    in = out;
  }
}

Tensor ConvBlock::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = ops::relu(layers_[i].forward(h));
    if (i == kPoolAfter[0] || i == kPoolAfter[1]) h = nn::maxpool1d(h, 2);
  }
  return nn::global_avg_pool(h);
}

void ConvBlock::parameters(const std::string& prefix, Snapshot& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].parameters(prefix + ".conv" + std::to_string(i + 1), out);
}

GRUStack::GRUStack(const std::vector<std::size_t>& dims, std::uint64_t seed,
                   const std::string& name) {
  std::size_t in = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto mode =
        i + 1 == dims.size() ? nn::ReturnMode::FinalState : nn::ReturnMode::Sequence;
    layers_.push_back(
        nn::BiGRULayer::create(in, dims[i], mode, seed, name + ".gru" + std::to_string(i + 1)));
    norms_.push_back(nn::BatchNormLayer::create(2 * dims[i]));
    in = 2 * dims[i];
  }
}

Tensor GRUStack::forward(const Tensor& x, nn::Mode mode) {
  Tensor h = ops::reshape(x, Shape{x.dim(0), x.dim(2), 1});
  for (std::size_t i = 0; i < layers_.size(); ++i)
    h = norms_[i].forward(layers_[i].forward(h), mode);
  return h;
}

void GRUStack::parameters(const std::string& prefix, Snapshot& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].parameters(prefix + ".gru" + std::to_string(i + 1), out);
    norms_[i].parameters(prefix + ".bn" + std::to_string(i + 1), out);
  }
}

void GRUStack::buffers(const std::string& prefix, Snapshot& out) const {
  for (std::size_t i = 0; i < norms_.size(); ++i)
    norms_[i].buffers(prefix + ".bn" + std::to_string(i + 1), out);
}

MLPHead::MLPHead(std::size_t in_features, const std::vector<std::size_t>& widths,
                 std::size_t num_classes, std::uint64_t seed, const std::string& name) {
  std::size_t in = in_features;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    hidden_.push_back(nn::DenseLayer::create(in, widths[i], nn::Activation::Relu, seed,
                                             name + ".dense" + std::to_string(i + 1)));
    norms_.push_back(nn::LayerNormLayer::create(widths[i]));
    in = widths[i];
  }
  classifier_ =
      nn::DenseLayer::create(in, num_classes, nn::Activation::None, seed, name + ".classifier");
}

Tensor MLPHead::forward(const Tensor& features) const {
  Tensor h = features;
  for (std::size_t i = 0; i < hidden_.size(); ++i) h = norms_[i].forward(hidden_[i].forward(h));
  return classifier_.forward(h);
}

void MLPHead::parameters(const std::string& prefix, Snapshot& out) const {
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    hidden_[i].parameters(prefix + ".dense" + std::to_string(i + 1), out);
    norms_[i].parameters(prefix + ".ln" + std::to_string(i + 1), out);
  }
  classifier_.parameters(prefix + ".classifier", out);
}

// ---------------------------------------------------------------------------

HeteroNet::HeteroNet(const ModelConfig& config)
    : config_(validated(config)),
      head_(head_input_width(config), config.mlp_widths, config.num_classes, config.seed,
            "head") {
  const bool local = config_.variant == Variant::Full || config_.variant == Variant::LocalOnly;
  const bool global = config_.variant == Variant::Full || config_.variant == Variant::GlobalOnly;
  if (local)
    for (auto k : config_.kernel_sizes)
      blocks_.emplace_back(k, config_.conv_filters_wide, config_.conv_filters_narrow,
                           config_.seed, "local.k" + std::to_string(k));
  if (global) gru_.emplace(config_.gru_dims, config_.seed, "global");
}

Tensor HeteroNet::local_features(const Tensor& x) const {
  std::vector<Tensor> parts;
  parts.reserve(blocks_.size());
  for (const auto& b : blocks_) parts.push_back(b.forward(x));
  return ops::concat(parts, 1);
}

Tensor HeteroNet::global_features(const Tensor& x, nn::Mode mode) {
  return gru_->forward(x, mode);
}

Tensor HeteroNet::features(const Tensor& x, nn::Mode mode) {
  if (x.rank() != 3 || x.dim(1) != 1 || x.dim(2) != config_.input_length)
    throw ShapeError("model: input " + shape_str(x.shape()) + " must be (batch, 1, " +
                     std::to_string(config_.input_length) + ")");
  switch (config_.variant) {
    case Variant::Full: {
      Tensor parts[] = {local_features(x), global_features(x, mode)};
      return ops::concat(parts, 1);
    }
    case Variant::GlobalOnly: return global_features(x, mode);
    case Variant::LocalOnly: return local_features(x);
    case Variant::MlpOnly: return ops::reshape(x, Shape{x.dim(0), x.dim(2)});
  }
  return {};
}

Tensor HeteroNet::forward(const Tensor& x, nn::Mode mode) { return head_.forward(features(x, mode)); }

std::size_t HeteroNet::global_offset() const {
  return config_.variant == Variant::Full ? blocks_.size() * config_.conv_filters_narrow : 0;
}

Snapshot HeteroNet::parameters() const {
  Snapshot out;
  for (const auto& b : blocks_) b.parameters("local.k" + std::to_string(b.kernel_size()), out);
  if (gru_) gru_->parameters("global", out);
  head_.parameters("head", out);
  return out;
}

Snapshot HeteroNet::buffers() const {
  Snapshot out;
  if (gru_) gru_->buffers("global", out);
  return out;
}

Snapshot HeteroNet::state() const {
  Snapshot out = parameters();
  for (auto& b : buffers()) out.push_back(std::move(b));
  return out;
}

void HeteroNet::load_state(const Snapshot& snap) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : snap) by_name[name] = &t;
  Snapshot mine = state();
  for (auto& [name, t] : mine) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("load_state: snapshot lacks '" + name + "'");
    if (it->second->shape() != t.shape())
      throw ShapeError("load_state: '" + name + "' has shape " +
                       shape_str(it->second->shape()) + ", model expects " +
                       shape_str(t.shape()));
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), t.mutable_values().begin());
  }
}

std::size_t HeteroNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

}  // namespace hiot
