#include "heteroiot/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "heteroiot/errors.hpp"
#include "heteroiot/graph.hpp"
#include "heteroiot/ops.hpp"

namespace hiot::nn {

namespace {

using Eigen::Index;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::MatrixXd;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ConstRowMap as_matrix(const Tensor& t, Index rows, Index cols) {
  return ConstRowMap(t.values().data(), rows, cols);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

std::mt19937_64 param_rng(std::uint64_t seed, std::string_view name) {
  const std::uint64_t h = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = dist(rng);
  t.set_requires_grad(true);
  return t;
}

namespace {

Tensor trainable(Shape shape, double fill) {
  Tensor t(std::move(shape), fill);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv1d

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 3, "conv1d: weight must be (f, in, out), got " +
                                  shape_str(weight.shape()));
  require(x.rank() == 3, "conv1d: input must be (batch, channels, time), got " +
                             shape_str(x.shape()));
  const Index F = static_cast<Index>(weight.dim(0));
  const Index C = static_cast<Index>(weight.dim(1));
  const Index O = static_cast<Index>(weight.dim(2));
  require(static_cast<Index>(x.dim(1)) == C,
          "conv1d: input has " + std::to_string(x.dim(1)) + " channels, layer expects " +
              std::to_string(C));
  require(bias.rank() == 1 && static_cast<Index>(bias.dim(0)) == O,
          "conv1d: bias shape " + shape_str(bias.shape()) + " does not match " +
              std::to_string(O) + " filters");
  const Index B = static_cast<Index>(x.dim(0));
  const Index T = static_cast<Index>(x.dim(2));
  const Index P = F - 1;
  const Index S = T + P;      // per-sample stride in the packed buffer
  const Index N = B * S - P;  // output columns, some of which straddle samples

  // Samples side by side, each preceded by P zero columns; the k-th tap is then
  // a contiguous column window shifted by k.
  auto xpad = std::make_shared<ColMat>(ColMat::Zero(C, B * S));
  auto xv = x.values();
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c) {
      const double* src = xv.data() + (b * C + c) * T;
      for (Index t = 0; t < T; ++t) (*xpad)(c, b * S + P + t) = src[t];
    }

  const double* wv = weight.values().data();
  ColMat Y = ColMat::Zero(O, N);
  for (Index k = 0; k < F; ++k)
    Y.noalias() += ConstRowMap(wv + k * C * O, C, O).transpose() * xpad->middleCols(k, N);

  Tensor out(Shape{x.dim(0), weight.dim(2), x.dim(2)});
  auto ov = out.mutable_values();
  auto bv = bias.values();
  for (Index b = 0; b < B; ++b)
    for (Index o = 0; o < O; ++o) {
      double* dst = ov.data() + (b * O + o) * T;
      for (Index t = 0; t < T; ++t) dst[t] = Y(o, b * S + t) + bv[o];
    }
  ops::check_finite("conv1d", out.values());

  Graph& g = Graph::current();
  if (g.should_record({&x, &weight, &bias})) {
    g.record("conv1d", {x, weight, bias}, out,
             [xpad, weight, B, C, O, T, F, P, S, N](std::span<const double> gout,
                                                    std::span<const std::span<double>> gin) {
               ColMat gY = ColMat::Zero(O, N);
               for (Index b = 0; b < B; ++b)
                 for (Index o = 0; o < O; ++o) {
                   const double* src = gout.data() + (b * O + o) * T;
                   for (Index t = 0; t < T; ++t) gY(o, b * S + t) = src[t];
                 }
               const double* wv = weight.values().data();
               if (!gin[1].empty())
                 for (Index k = 0; k < F; ++k)
                   RowMap(gin[1].data() + k * C * O, C, O).noalias() +=
                       xpad->middleCols(k, N) * gY.transpose();
               if (!gin[2].empty()) {
                 Eigen::VectorXd gb = gY.rowwise().sum();
                 for (Index o = 0; o < O; ++o) gin[2][o] += gb(o);
               }
               if (!gin[0].empty()) {
                 ColMat gx = ColMat::Zero(C, B * S);
                 for (Index k = 0; k < F; ++k)
                   gx.middleCols(k, N).noalias() += ConstRowMap(wv + k * C * O, C, O) * gY;
                 for (Index b = 0; b < B; ++b)
                   for (Index c = 0; c < C; ++c) {
                     double* dst = gin[0].data() + (b * C + c) * T;
                     for (Index t = 0; t < T; ++t) dst[t] += gx(c, b * S + P + t);
                   }
               }
             });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling

Tensor maxpool1d(const Tensor& x, std::size_t size) {
  require(x.rank() == 3, "maxpool1d: input must be (batch, channels, time), got " +
                             shape_str(x.shape()));
  require(size >= 1, "maxpool1d: size must be positive");
  const std::size_t T = x.dim(2);
  require(T >= size, "maxpool1d: time length " + std::to_string(T) +
                         " shorter than pool size " + std::to_string(size));
  const std::size_t rows = x.dim(0) * x.dim(1);
  const std::size_t To = T / size;
  Tensor out(Shape{x.dim(0), x.dim(1), To});
  auto ov = out.mutable_values();
  auto xv = x.values();
  auto argmax = std::make_shared<std::vector<std::size_t>>(rows * To);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < To; ++i) {
      std::size_t best = r * T + i * size;
      for (std::size_t j = 1; j < size; ++j)
        if (xv[r * T + i * size + j] > xv[best]) best = r * T + i * size + j;
      ov[r * To + i] = xv[best];
      (*argmax)[r * To + i] = best;
    }

  Graph& g = Graph::current();
  if (g.should_record({&x})) {
    g.record("maxpool1d", {x}, out,
             [argmax](std::span<const double> gout, std::span<const std::span<double>> gin) {
               for (std::size_t i = 0; i < gout.size(); ++i) gin[0][(*argmax)[i]] += gout[i];
             });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 3, "global_avg_pool: input must be (batch, channels, time), got " +
                             shape_str(x.shape()));
  const std::size_t T = x.dim(2);
  const std::size_t rows = x.dim(0) * x.dim(1);
  Tensor out(Shape{x.dim(0), x.dim(1)});
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += xv[r * T + t];
    ov[r] = s / static_cast<double>(T);
  }
  ops::check_finite("global_avg_pool", out.values());

  Graph& g = Graph::current();
  if (g.should_record({&x})) {
    g.record("global_avg_pool", {x}, out,
             [T](std::span<const double> gout, std::span<const std::span<double>> gin) {
               const double inv = 1.0 / static_cast<double>(T);
               for (std::size_t r = 0; r < gout.size(); ++r)
                 for (std::size_t t = 0; t < T; ++t) gin[0][r * T + t] += gout[r] * inv;
             });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be (batch, classes), got " +
                                  shape_str(logits.shape()));
  const std::size_t B = logits.dim(0);
  const std::size_t K = logits.dim(1);
  require(labels.size() == B, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                  " labels for batch of " + std::to_string(B));
  for (std::size_t i = 0; i < B; ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K)
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(K) + ")");

  Tensor probs(Shape{B, K});
  auto pv = probs.mutable_values();
  auto lv = logits.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double* row = lv.data() + i * K;
    const double mx = *std::max_element(row, row + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const double log_z = std::log(z);
    for (std::size_t k = 0; k < K; ++k) pv[i * K + k] = std::exp(row[k] - mx - log_z);
    loss -= row[labels[i]] - mx - log_z;
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(B));
  ops::check_finite("softmax_cross_entropy", out.values());

  Graph& g = Graph::current();
  if (g.should_record({&logits})) {
    std::vector<int> lab(labels.begin(), labels.end());
    g.record("softmax_cross_entropy", {logits}, out,
             [probs, lab = std::move(lab), B, K](std::span<const double> gout,
                                                 std::span<const std::span<double>> gin) {
               auto pv = probs.values();
               const double s = gout[0] / static_cast<double>(B);
               for (std::size_t i = 0; i < B; ++i)
                 for (std::size_t k = 0; k < K; ++k) {
                   const double onehot = static_cast<int>(k) == lab[i] ? 1.0 : 0.0;
                   gin[0][i * K + k] += s * (pv[i * K + k] - onehot);
                 }
             });
  }
  return {out, probs};
}

// ---------------------------------------------------------------------------
// conv / dense layers

Conv1DLayer Conv1DLayer::create(std::size_t kernel_size, std::size_t in_channels,
                                std::size_t out_channels, std::uint64_t seed,
                                const std::string& name) {
  if (kernel_size < 1) throw ConfigError("conv1d: kernel size must be >= 1");
  auto rng = param_rng(seed, name + ".weight");
  Conv1DLayer l;
  l.kernel_size = kernel_size;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.weight = glorot_uniform({kernel_size, in_channels, out_channels},
                            kernel_size * in_channels, kernel_size * out_channels, rng);
  l.bias = trainable({out_channels}, 0.0);
  return l;
}

void Conv1DLayer::parameters(const std::string& prefix, Snapshot& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

DenseLayer DenseLayer::create(std::size_t in, std::size_t out, Activation act,
                              std::uint64_t seed, const std::string& name) {
  if (in < 1 || out < 1) throw ConfigError("dense: widths must be positive");
  auto rng = param_rng(seed, name + ".weight");
  DenseLayer l;
  l.weight = glorot_uniform({in, out}, in, out, rng);
  l.bias = trainable({out}, 0.0);
  l.activation = act;
  return l;
}

Tensor DenseLayer::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_features())
    throw ShapeError("dense: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  Tensor y = ops::add(ops::matmul(x, weight), bias);
  return activation == Activation::Relu ? ops::relu(y) : y;
}

void DenseLayer::parameters(const std::string& prefix, Snapshot& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// ---------------------------------------------------------------------------
// normalization

namespace {

// Shared backward of y = gamma * xhat + beta where xhat = (x - mu) / sigma was
// computed over `rows` samples per feature (training statistics).
void norm_backward_batch_stats(std::span<const double> gout, std::span<const double> xhat,
                               std::span<const double> gamma, std::span<const double> inv_std,
                               std::size_t rows, std::size_t feats, std::span<double> gx,
                               std::span<double> ggamma, std::span<double> gbeta) {
  std::vector<double> sum_g(feats, 0.0), sum_gx(feats, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < feats; ++f) {
      const double go = gout[r * feats + f];
      sum_g[f] += go;
      sum_gx[f] += go * xhat[r * feats + f];
    }
  if (!ggamma.empty())
    for (std::size_t f = 0; f < feats; ++f) ggamma[f] += sum_gx[f];
  if (!gbeta.empty())
    for (std::size_t f = 0; f < feats; ++f) gbeta[f] += sum_g[f];
  if (!gx.empty()) {
    const double m = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < feats; ++f) {
        const std::size_t i = r * feats + f;
        gx[i] += gamma[f] * inv_std[f] / m *
                 (m * gout[i] - sum_g[f] - xhat[i] * sum_gx[f]);
      }
  }
}

}  // namespace

BatchNormLayer BatchNormLayer::create(std::size_t features) {
  BatchNormLayer l;
  l.gamma = trainable({features}, 1.0);
  l.beta = trainable({features}, 0.0);
  l.running_mean = Tensor(Shape{features}, 0.0);
  l.running_var = Tensor(Shape{features}, 1.0);
  return l;
}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode) {
  const std::size_t F = features();
  if (x.rank() < 2 || x.shape().back() != F)
    throw ShapeError("batch_norm: input " + shape_str(x.shape()) + " does not end in " +
                     std::to_string(F) + " features");
  const std::size_t rows = x.numel() / F;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();

  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(F);
  Tensor out(x.shape());
  auto ov = out.mutable_values();

  if (mode == Mode::Train) {
    if (x.dim(0) < 2)
      throw ShapeError("batch_norm: training mode needs a batch of at least 2, got " +
                       std::to_string(x.dim(0)));
    std::vector<double> mu(F, 0.0), var(F, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < F; ++f) mu[f] += xv[r * F + f];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < F; ++f) {
        const double d = xv[r * F + f] - mu[f];
        var[f] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);
    for (std::size_t f = 0; f < F; ++f) (*inv_std)[f] = 1.0 / std::sqrt(var[f] + epsilon);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < F; ++f) {
        const std::size_t i = r * F + f;
        (*xhat)[i] = (xv[i] - mu[f]) * (*inv_std)[f];
        ov[i] = gv[f] * (*xhat)[i] + bv[f];
      }
    auto rm = running_mean.mutable_values();
    auto rv = running_var.mutable_values();
    for (std::size_t f = 0; f < F; ++f) {
      rm[f] = momentum * rm[f] + (1.0 - momentum) * mu[f];
      rv[f] = momentum * rv[f] + (1.0 - momentum) * var[f];
    }
  } else {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t f = 0; f < F; ++f) (*inv_std)[f] = 1.0 / std::sqrt(rv[f] + epsilon);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < F; ++f) {
        const std::size_t i = r * F + f;
        (*xhat)[i] = (xv[i] - rm[f]) * (*inv_std)[f];
        ov[i] = gv[f] * (*xhat)[i] + bv[f];
      }
  }
  ops::check_finite("batch_norm", out.values());

  Graph& g = Graph::current();
  if (g.should_record({&x, &gamma, &beta})) {
    const bool train = mode == Mode::Train;
    g.record("batch_norm", {x, gamma, beta}, out,
             [xhat, inv_std, gamma = gamma, rows, F, train](
                 std::span<const double> gout, std::span<const std::span<double>> gin) {
               auto gv = gamma.values();
               if (train) {
                 norm_backward_batch_stats(gout, *xhat, gv, *inv_std, rows, F, gin[0], gin[1],
                                           gin[2]);
                 return;
               }
               for (std::size_t r = 0; r < rows; ++r)
                 for (std::size_t f = 0; f < F; ++f) {
                   const std::size_t i = r * F + f;
                   if (!gin[0].empty()) gin[0][i] += gout[i] * gv[f] * (*inv_std)[f];
                   if (!gin[1].empty()) gin[1][f] += gout[i] * (*xhat)[i];
                   if (!gin[2].empty()) gin[2][f] += gout[i];
                 }
             });
  }
  return out;
}

void BatchNormLayer::parameters(const std::string& prefix, Snapshot& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNormLayer::buffers(const std::string& prefix, Snapshot& out) const {
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

LayerNormLayer LayerNormLayer::create(std::size_t features) {
  LayerNormLayer l;
  l.gamma = trainable({features}, 1.0);
  l.beta = trainable({features}, 0.0);
  return l;
}

Tensor LayerNormLayer::forward(const Tensor& x) const {
  const std::size_t F = gamma.numel();
  if (x.rank() < 1 || x.shape().back() != F)
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " does not end in " +
                     std::to_string(F) + " features");
  if (F < 2) throw ShapeError("layer_norm: needs at least 2 features");
  const std::size_t rows = x.numel() / F;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(x.shape());
  auto ov = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * F;
    double mu = 0.0;
    for (std::size_t f = 0; f < F; ++f) mu += row[f];
    mu /= static_cast<double>(F);
    double var = 0.0;
    for (std::size_t f = 0; f < F; ++f) var += (row[f] - mu) * (row[f] - mu);
    var /= static_cast<double>(F);
    const double is = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[r] = is;
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t i = r * F + f;
      (*xhat)[i] = (row[f] - mu) * is;
      ov[i] = gv[f] * (*xhat)[i] + bv[f];
    }
  }
  ops::check_finite("layer_norm", out.values());

  Graph& g = Graph::current();
  if (g.should_record({&x, &gamma, &beta})) {
    g.record("layer_norm", {x, gamma, beta}, out,
             [xhat, inv_std, gamma = gamma, rows, F](std::span<const double> gout,
                                                    std::span<const std::span<double>> gin) {
               auto gv = gamma.values();
               const double m = static_cast<double>(F);
               for (std::size_t r = 0; r < rows; ++r) {
                 double sum_gh = 0.0, sum_ghx = 0.0;
                 for (std::size_t f = 0; f < F; ++f) {
                   const std::size_t i = r * F + f;
                   const double gh = gout[i] * gv[f];
                   sum_gh += gh;
                   sum_ghx += gh * (*xhat)[i];
                   if (!gin[1].empty()) gin[1][f] += gout[i] * (*xhat)[i];
                   if (!gin[2].empty()) gin[2][f] += gout[i];
                 }
                 if (gin[0].empty()) continue;
                 for (std::size_t f = 0; f < F; ++f) {
                   const std::size_t i = r * F + f;
                   const double gh = gout[i] * gv[f];
                   gin[0][i] += (*inv_std)[r] / m * (m * gh - sum_gh - (*xhat)[i] * sum_ghx);
                 }
               }
             });
  }
  return out;
}

void LayerNormLayer::parameters(const std::string& prefix, Snapshot& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

// ---------------------------------------------------------------------------
// GRU

GRUCell GRUCell::create(std::size_t input_dim, std::size_t hidden, std::uint64_t seed,
                        const std::string& name) {
  if (input_dim < 1 || hidden < 1) throw ConfigError("gru: dimensions must be positive");
  GRUCell c;
  c.input_dim = input_dim;
  c.hidden = hidden;
  auto init = [&](const char* which, std::size_t cols) {
    auto rng = param_rng(seed, name + "." + which);
    return glorot_uniform({hidden, cols}, cols, hidden, rng);
  };
  c.W_u = init("W_u", input_dim);
  c.W_r = init("W_r", input_dim);
  c.W_h = init("W_h", input_dim);
  c.U_u = init("U_u", hidden);
  c.U_r = init("U_r", hidden);
  c.U_h = init("U_h", hidden);
  c.b_u = trainable({hidden}, 0.0);
  c.b_r = trainable({hidden}, 0.0);
  c.b_h = trainable({hidden}, 0.0);
  return c;
}

void GRUCell::parameters(const std::string& prefix, Snapshot& out) const {
  out.push_back({prefix + ".W_u", W_u});
  out.push_back({prefix + ".W_r", W_r});
  out.push_back({prefix + ".W_h", W_h});
  out.push_back({prefix + ".U_u", U_u});
  out.push_back({prefix + ".U_r", U_r});
  out.push_back({prefix + ".U_h", U_h});
  out.push_back({prefix + ".b_u", b_u});
  out.push_back({prefix + ".b_r", b_r});
  out.push_back({prefix + ".b_h", b_h});
}

Tensor gru_step(const Tensor& x_t, const Tensor& h_prev, const GRUCell& cell) {
  const bool single = x_t.rank() == 1;
  const Index D = static_cast<Index>(cell.hidden);
  const Index I = static_cast<Index>(cell.input_dim);
  const Index B = single ? 1 : static_cast<Index>(x_t.dim(0));
  const bool x_ok = single ? x_t.dim(0) == cell.input_dim
                           : (x_t.rank() == 2 && x_t.dim(1) == cell.input_dim);
  const bool h_ok = single ? (h_prev.rank() == 1 && h_prev.dim(0) == cell.hidden)
                           : (h_prev.rank() == 2 && static_cast<Index>(h_prev.dim(0)) == B &&
                              h_prev.dim(1) == cell.hidden);
  if (!x_ok || !h_ok)
    throw ShapeError("gru_step: input " + shape_str(x_t.shape()) + " / state " +
                     shape_str(h_prev.shape()) + " do not match cell (input " +
                     std::to_string(I) + ", hidden " + std::to_string(D) + ")");

  ConstRowMap X = as_matrix(x_t, B, I);
  ConstRowMap H = as_matrix(h_prev, B, D);
  auto row_bias = [&](const Tensor& b) { return ConstVecMap(b.values().data(), D); };

  RowMat au = X * as_matrix(cell.W_u, D, I).transpose() + H * as_matrix(cell.U_u, D, D).transpose();
  au.rowwise() += row_bias(cell.b_u);
  RowMat ar = X * as_matrix(cell.W_r, D, I).transpose() + H * as_matrix(cell.U_r, D, D).transpose();
  ar.rowwise() += row_bias(cell.b_r);
  auto sig = [](double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
  };
  auto u = std::make_shared<RowMat>(au.unaryExpr(sig));
  auto r = std::make_shared<RowMat>(ar.unaryExpr(sig));
  auto rh = std::make_shared<RowMat>(r->cwiseProduct(H));
  RowMat ah = X * as_matrix(cell.W_h, D, I).transpose() + *rh * as_matrix(cell.U_h, D, D).transpose();
  ah.rowwise() += row_bias(cell.b_h);
  auto c = std::make_shared<RowMat>(ah.array().tanh().matrix());

  Tensor out(single ? Shape{cell.hidden} : Shape{static_cast<std::size_t>(B), cell.hidden});
  RowMap Hn(out.mutable_values().data(), B, D);
  Hn = (1.0 - u->array()) * H.array() + u->array() * c->array();
  ops::check_finite("gru_step", out.values());

  std::vector<Tensor> inputs{x_t,      h_prev,   cell.W_u, cell.W_r, cell.W_h, cell.U_u,
                             cell.U_r, cell.U_h, cell.b_u, cell.b_r, cell.b_h};
  Graph& g = Graph::current();
  if (g.should_record(inputs)) {
    g.record(
        "gru_step", inputs, out,
        [x_t, h_prev, W_u = cell.W_u, W_r = cell.W_r, W_h = cell.W_h, U_u = cell.U_u,
         U_r = cell.U_r, U_h = cell.U_h, u, r, rh, c, B, I, D](
            std::span<const double> gout, std::span<const std::span<double>> gin) {
          ConstRowMap X = as_matrix(x_t, B, I);
          ConstRowMap H = as_matrix(h_prev, B, D);
          ConstRowMap G(gout.data(), B, D);
          const auto ua = u->array();
          const auto ra = r->array();
          const auto ca = c->array();
          // gates' pre-activation gradients
          RowMat dc = G.array() * ua;
          RowMat du = G.array() * (ca - H.array());
          RowMat dah = dc.array() * (1.0 - ca.square());
          RowMat dau = du.array() * ua * (1.0 - ua);
          RowMat drh = dah * as_matrix(U_h, D, D);
          RowMat dar = (drh.array() * H.array()).matrix().array() * ra * (1.0 - ra);

          if (!gin[0].empty()) {
            RowMap gx(gin[0].data(), B, I);
            gx.noalias() += dau * as_matrix(W_u, D, I);
            gx.noalias() += dar * as_matrix(W_r, D, I);
            gx.noalias() += dah * as_matrix(W_h, D, I);
          }
          if (!gin[1].empty()) {
            RowMap gh(gin[1].data(), B, D);
            gh.array() += G.array() * (1.0 - ua) + drh.array() * ra;
            gh.noalias() += dau * as_matrix(U_u, D, D);
            gh.noalias() += dar * as_matrix(U_r, D, D);
          }
          auto acc = [&](std::size_t slot, const RowMat& dpre, const auto& rhs, Index cols) {
            if (gin[slot].empty()) return;
            RowMap(gin[slot].data(), D, cols).noalias() += dpre.transpose() * rhs;
          };
          acc(2, dau, X, I);
          acc(3, dar, X, I);
          acc(4, dah, X, I);
          acc(5, dau, H, D);
          acc(6, dar, H, D);
          acc(7, dah, *rh, D);
          auto accb = [&](std::size_t slot, const RowMat& dpre) {
            if (gin[slot].empty()) return;
            VecMap(gin[slot].data(), D) += dpre.colwise().sum();
          };
          accb(8, dau);
          accb(9, dar);
          accb(10, dah);
        });
  }
  return out;
}

BiGRULayer BiGRULayer::create(std::size_t input_dim, std::size_t hidden, ReturnMode mode,
                              std::uint64_t seed, const std::string& name) {
  BiGRULayer l;
  l.forward_cell = GRUCell::create(input_dim, hidden, seed, name + ".fwd");
  l.backward_cell = GRUCell::create(input_dim, hidden, seed, name + ".bwd");
  l.return_mode = mode;
  return l;
}

Tensor BiGRULayer::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != forward_cell.input_dim)
    throw ShapeError("bigru: input " + shape_str(x.shape()) + " must be (batch, time, " +
                     std::to_string(forward_cell.input_dim) + ")");
  const std::size_t B = x.dim(0);
  const std::size_t T = x.dim(1);

  std::vector<Tensor> fwd(T), bwd(T);
  Tensor h(Shape{B, forward_cell.hidden});
  for (std::size_t t = 0; t < T; ++t) {
    h = gru_step(ops::select(x, 1, t), h, forward_cell);
    fwd[t] = h;
  }
  h = Tensor(Shape{B, backward_cell.hidden});
  for (std::size_t t = T; t-- > 0;) {
    h = gru_step(ops::select(x, 1, t), h, backward_cell);
    bwd[t] = h;
  }

  if (return_mode == ReturnMode::FinalState) {
    Tensor parts[] = {fwd[T - 1], bwd[0]};
    return ops::concat(parts, 1);
  }
  Tensor parts[] = {ops::stack(fwd, 1), ops::stack(bwd, 1)};
  return ops::concat(parts, 2);
}

void BiGRULayer::parameters(const std::string& prefix, Snapshot& out) const {
  forward_cell.parameters(prefix + ".fwd", out);
  backward_cell.parameters(prefix + ".bwd", out);
}

}  // namespace hiot::nn
