#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "heteroiot/layers.hpp"
#include "heteroiot/snapshot.hpp"
#include "heteroiot/tensor.hpp"

namespace hiot {

/// Ablation variants: both branches, recurrent branch only, convolutional
/// ensemble only, or the raw sequence straight into the head.
enum class Variant { Full, GlobalOnly, LocalOnly, MlpOnly };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::Full;
  std::size_t input_length = 168;
  std::size_t num_classes = 8;
  std::uint64_t seed = 100;
  std::vector<std::size_t> kernel_sizes{3, 5, 7, 11};
  std::size_t conv_filters_wide = 128;   // conv layers 1-3
  std::size_t conv_filters_narrow = 64;  // conv layers 4-9
  std::vector<std::size_t> gru_dims{128, 64, 64};
  std::vector<std::size_t> mlp_widths{1024, 512, 256, 64};

  /// Throws ConfigError on an unusable configuration.
  void validate() const;
  /// Every width divided by `divisor` (floored, at least 2).
  ModelConfig scaled(std::size_t divisor) const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
ModelConfig load_model_config(const std::string& path);

/// Nine causal conv layers sharing one kernel size, max-pool(2) after the 3rd
/// and 6th, global average pool at the end: (b, 1, t) -> (b, narrow).
class ConvBlock {
 public:
  static constexpr std::size_t kLayers = 9;

  ConvBlock(std::size_t kernel_size, std::size_t wide, std::size_t narrow, std::uint64_t seed,
            const std::string& name);

  Tensor forward(const Tensor& x) const;
  std::size_t kernel_size() const { return kernel_size_; }
  std::size_t output_width() const { return layers_.back().out_channels; }
  const std::vector<nn::Conv1DLayer>& layers() const { return layers_; }
  /// Max-pool follows these 0-based layer indices.
  static constexpr std::array<std::size_t, 2> kPoolAfter{2, 5};
  void parameters(const std::string& prefix, Snapshot& out) const;

 private:
  std::size_t kernel_size_;
  std::vector<nn::Conv1DLayer> layers_;
};

/// Stacked bidirectional GRUs, each followed by batch normalization. All but
/// the last return full sequences; the last returns final states.
class GRUStack {
 public:
  GRUStack(const std::vector<std::size_t>& dims, std::uint64_t seed, const std::string& name);

  /// x: (b, 1, t) -> (b, 2 * dims.back())
  Tensor forward(const Tensor& x, nn::Mode mode);
  std::size_t output_width() const { return layers_.back().output_dim(); }
  const std::vector<nn::BiGRULayer>& layers() const { return layers_; }
  const std::vector<nn::BatchNormLayer>& norms() const { return norms_; }
  void parameters(const std::string& prefix, Snapshot& out) const;
  void buffers(const std::string& prefix, Snapshot& out) const;

 private:
  std::vector<nn::BiGRULayer> layers_;
  std::vector<nn::BatchNormLayer> norms_;
};

/// Dense(ReLU) + LayerNorm per bottleneck width, then a linear classifier.
class MLPHead {
 public:
  MLPHead(std::size_t in_features, const std::vector<std::size_t>& widths,
          std::size_t num_classes, std::uint64_t seed, const std::string& name);

  Tensor forward(const Tensor& features) const;
  std::size_t in_features() const { return hidden_.front().in_features(); }
  const std::vector<nn::DenseLayer>& hidden() const { return hidden_; }
  const std::vector<nn::LayerNormLayer>& norms() const { return norms_; }
  const nn::DenseLayer& classifier() const { return classifier_; }
  void parameters(const std::string& prefix, Snapshot& out) const;

 private:
  std::vector<nn::DenseLayer> hidden_;
  std::vector<nn::LayerNormLayer> norms_;
  nn::DenseLayer classifier_;
};

/// The combined local/global classifier and its ablations.
///
/// Feature layout entering the head (full variant): the outputs of the conv
/// blocks in kernel_sizes order (k=3 at offset 0, then 5, 7, 11), followed by
/// the final Bi-GRU states at offset blocks * narrow.
class HeteroNet {
 public:
  explicit HeteroNet(const ModelConfig& config);

  /// x: (b, 1, t) -> logits (b, classes)
  Tensor forward(const Tensor& x, nn::Mode mode);

  /// Concatenated conv block outputs, (b, blocks * narrow).
  Tensor local_features(const Tensor& x) const;
  /// Final Bi-GRU states after batch norm, (b, 2 * gru_dims.back()).
  Tensor global_features(const Tensor& x, nn::Mode mode);
  /// Whatever the variant feeds into the head.
  Tensor features(const Tensor& x, nn::Mode mode);

  const ModelConfig& config() const { return config_; }
  std::size_t feature_width() const { return head_.in_features(); }
  /// Offset of the global features inside the head input (full variant).
  std::size_t global_offset() const;

  const std::vector<ConvBlock>& conv_blocks() const { return blocks_; }
  GRUStack* gru_stack() { return gru_ ? &*gru_ : nullptr; }
  const GRUStack* gru_stack() const { return gru_ ? &*gru_ : nullptr; }
  const MLPHead& head() const { return head_; }

  /// Trainable tensors, named and in a fixed order.
  Snapshot parameters() const;
  /// Non-trainable state (batch-norm running statistics).
  Snapshot buffers() const;
  /// parameters() followed by buffers().
  Snapshot state() const;
  /// Copies values from a snapshot; every name must match in shape.
  void load_state(const Snapshot& snap);
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  std::vector<ConvBlock> blocks_;
  std::optional<GRUStack> gru_;
  MLPHead head_;
};

}  // namespace hiot
