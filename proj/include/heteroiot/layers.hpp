#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "heteroiot/snapshot.hpp"
#include "heteroiot/tensor.hpp"

namespace hiot::nn {

enum class Mode { Train, Infer };
enum class Activation { None, Relu };

/// Deterministic per-parameter generator: the same (seed, name) pair always
/// yields the same stream, independent of construction order.
std::mt19937_64 param_rng(std::uint64_t seed, std::string_view name);

/// Glorot-uniform fill: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
/// The result is marked as requiring gradients.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Functional ops

/// Causal 1-D convolution. x: (batch, in, time), weight: (f, in, out),
/// bias: (out). y[b,o,t] = bias[o] + sum_{k,c} w[k,c,o] * xpad[b,c,t+k] where
/// xpad is x left-padded with f-1 zeros; output time equals input time.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Non-overlapping max pooling over time; a trailing partial window is
/// dropped. Ties route the gradient to the first maximal element.
Tensor maxpool1d(const Tensor& x, std::size_t size = 2);

/// Mean over the time axis: (batch, channels, time) -> (batch, channels).
Tensor global_avg_pool(const Tensor& x);

/// Mean cross-entropy with a row-max-shifted softmax.
struct SoftmaxCrossEntropy {
  Tensor loss;   // scalar, differentiable w.r.t. logits
  Tensor probs;  // (batch, classes), constant
};
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Layers

struct Conv1DLayer {
  std::size_t kernel_size = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Tensor weight;  // (f, in, out)
  Tensor bias;    // (out)

  static Conv1DLayer create(std::size_t kernel_size, std::size_t in_channels,
                            std::size_t out_channels, std::uint64_t seed,
                            const std::string& name);
  Tensor forward(const Tensor& x) const { return conv1d(x, weight, bias); }
  void parameters(const std::string& prefix, Snapshot& out) const;
};

struct DenseLayer {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)
  Activation activation = Activation::None;

  static DenseLayer create(std::size_t in, std::size_t out, Activation act,
                           std::uint64_t seed, const std::string& name);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  /// y = act(x W + b) for x: (batch, in)
  Tensor forward(const Tensor& x) const;
  void parameters(const std::string& prefix, Snapshot& out) const;
};

/// Per-feature normalization over every axis but the last.
struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;

  static BatchNormLayer create(std::size_t features);
  std::size_t features() const { return gamma.numel(); }
  /// Train mode normalizes with batch statistics and folds them into the
  /// running estimates; infer mode uses the running estimates only.
  Tensor forward(const Tensor& x, Mode mode);
  void parameters(const std::string& prefix, Snapshot& out) const;
  void buffers(const std::string& prefix, Snapshot& out) const;
};

/// Per-sample normalization over the last axis.
struct LayerNormLayer {
  Tensor gamma;
  Tensor beta;
  double epsilon = 1e-5;

  static LayerNormLayer create(std::size_t features);
  Tensor forward(const Tensor& x) const;
  void parameters(const std::string& prefix, Snapshot& out) const;
};

/// u = sigma(W_u x + U_u h + b_u)
/// r = sigma(W_r x + U_r h + b_r)
/// c = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - u) * h + u * c
struct GRUCell {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  Tensor W_u, W_r, W_h;  // (hidden, input_dim)
  Tensor U_u, U_r, U_h;  // (hidden, hidden)
  Tensor b_u, b_r, b_h;  // (hidden)

  static GRUCell create(std::size_t input_dim, std::size_t hidden, std::uint64_t seed,
                        const std::string& name);
  void parameters(const std::string& prefix, Snapshot& out) const;
};

/// One GRU step. x_t: (batch, input_dim) or (input_dim); h_prev matches with
/// hidden in place of input_dim.
Tensor gru_step(const Tensor& x_t, const Tensor& h_prev, const GRUCell& cell);

enum class ReturnMode { Sequence, FinalState };

struct BiGRULayer {
  GRUCell forward_cell;
  GRUCell backward_cell;
  ReturnMode return_mode = ReturnMode::Sequence;

  static BiGRULayer create(std::size_t input_dim, std::size_t hidden, ReturnMode mode,
                           std::uint64_t seed, const std::string& name);
  std::size_t output_dim() const { return 2 * forward_cell.hidden; }
  /// x: (batch, time, features). Sequence mode returns (batch, time, 2D) with
  /// the backward direction re-aligned to forward time; FinalState returns
  /// (batch, 2D) = [forward h at T-1, backward h after consuming x[T-1..0]].
  Tensor forward(const Tensor& x) const;
  void parameters(const std::string& prefix, Snapshot& out) const;
};

}  // namespace hiot::nn
