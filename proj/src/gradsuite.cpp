#include "heteroiot/gradsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "heteroiot/errors.hpp"
#include "heteroiot/layers.hpp"
#include "heteroiot/model.hpp"
#include "heteroiot/ops.hpp"

namespace hiot {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(grad);
  return t;
}

/// sum(y * w) with a fixed random w, so every output entry matters.
Tensor weighted_sum(const Tensor& y, const Tensor& w) { return ops::sum(ops::mul(y, w)); }

void randomize(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : t.mutable_values()) x = u(rng);
}

void randomize_cell(nn::GRUCell& c, Rng& rng) {
  for (Tensor* t : {&c.W_u, &c.W_r, &c.W_h, &c.U_u, &c.U_r, &c.U_h, &c.b_u, &c.b_r, &c.b_h})
    randomize(*t, rng);
}

std::vector<Tensor> cell_params(const nn::GRUCell& c) {
  return {c.W_u, c.W_r, c.W_h, c.U_u, c.U_r, c.U_h, c.b_u, c.b_r, c.b_h};
}

GradCheckReport check_instance(const std::string& layer, Rng& rng, double tol,
                               std::uint64_t seed) {
  GradCheckOptions opt;
  opt.seed = seed;
  if (layer == "ops") {
    const std::size_t n = pick(rng, 1, 4), k = pick(rng, 1, 4), m = pick(rng, 1, 4);
    Tensor a = random_tensor({n, k}, rng), b = random_tensor({k, m}, rng);
    Tensor c = random_tensor({m}, rng), d = random_tensor({n, m}, rng);
    Tensor w = random_tensor({n, 2 * m}, rng, -1, 1, false);
    std::vector<Tensor> wrt{a, b, c, d};
    auto f = [&] {
      Tensor p = ops::add(ops::matmul(a, b), c);
      Tensor q = ops::mul(ops::sigmoid(p), ops::tanh(ops::sub(d, ops::scale(p, 0.5))));
      Tensor r = ops::relu(ops::add(p, d));
      std::vector<Tensor> parts{q, r};
      Tensor cat = ops::concat(parts, 1);
      Tensor flat = ops::reshape(cat, {n * 2 * m});
      return ops::add(weighted_sum(cat, w), ops::mean(ops::select(ops::reshape(flat, {n, 2 * m}), 0, 0)));
    };
    return finite_diff_check(f, wrt, tol, opt);
  }
  if (layer == "conv1d") {
    const std::size_t B = pick(rng, 1, 3), C = pick(rng, 1, 3), T = pick(rng, 1, 8);
    const std::size_t F = pick(rng, 1, 5), O = pick(rng, 1, 3);
    Tensor x = random_tensor({B, C, T}, rng), wt = random_tensor({F, C, O}, rng);
    Tensor b = random_tensor({O}, rng), w = random_tensor({B, O, T}, rng, -1, 1, false);
    std::vector<Tensor> wrt{x, wt, b};
    return finite_diff_check([&] { return weighted_sum(nn::conv1d(x, wt, b), w); }, wrt, tol,
                             opt);
  }
  if (layer == "maxpool") {
    const std::size_t B = pick(rng, 1, 3), C = pick(rng, 1, 3), T = pick(rng, 2, 9);
    Tensor x = random_tensor({B, C, T}, rng), w = random_tensor({B, C, T / 2}, rng, -1, 1, false);
    std::vector<Tensor> wrt{x};
    return finite_diff_check([&] { return weighted_sum(nn::maxpool1d(x, 2), w); }, wrt, tol, opt);
  }
  if (layer == "gap") {
    const std::size_t B = pick(rng, 1, 3), C = pick(rng, 1, 4), T = pick(rng, 1, 9);
    Tensor x = random_tensor({B, C, T}, rng), w = random_tensor({B, C}, rng, -1, 1, false);
    std::vector<Tensor> wrt{x};
    return finite_diff_check([&] { return weighted_sum(nn::global_avg_pool(x), w); }, wrt, tol,
                             opt);
  }
  if (layer == "dense") {
    const std::size_t B = pick(rng, 1, 4), I = pick(rng, 1, 5), O = pick(rng, 1, 5);
    nn::DenseLayer d;
    d.weight = random_tensor({I, O}, rng);
    d.bias = random_tensor({O}, rng);
    d.activation = pick(rng, 0, 1) ? nn::Activation::Relu : nn::Activation::None;
    Tensor x = random_tensor({B, I}, rng), w = random_tensor({B, O}, rng, -1, 1, false);
    std::vector<Tensor> wrt{x, d.weight, d.bias};
    return finite_diff_check([&] { return weighted_sum(d.forward(x), w); }, wrt, tol, opt);
  }
  if (layer == "batchnorm") {
    const std::size_t B = pick(rng, 2, 4), T = pick(rng, 1, 4), F = pick(rng, 1, 4);
    nn::BatchNormLayer bn = nn::BatchNormLayer::create(F);
    randomize(bn.gamma, rng, 0.5, 1.5);
    randomize(bn.beta, rng);
    Shape shape = pick(rng, 0, 1) ? Shape{B, T, F} : Shape{B, F};
    Tensor x = random_tensor(shape, rng, -2, 2), w = random_tensor(shape, rng, -1, 1, false);
    std::vector<Tensor> wrt{x, bn.gamma, bn.beta};
    return finite_diff_check([&] { return weighted_sum(bn.forward(x, nn::Mode::Train), w); },
                             wrt, tol, opt);
  }
  if (layer == "layernorm") {
    const std::size_t B = pick(rng, 1, 4), F = pick(rng, 2, 6);
    nn::LayerNormLayer ln = nn::LayerNormLayer::create(F);
    randomize(ln.gamma, rng, 0.5, 1.5);
    randomize(ln.beta, rng);
    Tensor x = random_tensor({B, F}, rng, -2, 2), w = random_tensor({B, F}, rng, -1, 1, false);
    std::vector<Tensor> wrt{x, ln.gamma, ln.beta};
    return finite_diff_check([&] { return weighted_sum(ln.forward(x), w); }, wrt, tol, opt);
  }
  if (layer == "gru") {
    const std::size_t B = pick(rng, 1, 3), I = pick(rng, 1, 4), D = pick(rng, 1, 4);
    nn::GRUCell cell = nn::GRUCell::create(I, D, seed, "check");
    randomize_cell(cell, rng);
    Tensor x = random_tensor({B, I}, rng), h = random_tensor({B, D}, rng);
    Tensor w = random_tensor({B, D}, rng, -1, 1, false);
    std::vector<Tensor> wrt = cell_params(cell);
    wrt.push_back(x);
    wrt.push_back(h);
    return finite_diff_check([&] { return weighted_sum(nn::gru_step(x, h, cell), w); }, wrt,
                             tol, opt);
  }
  if (layer == "bigru") {
    const std::size_t B = pick(rng, 1, 3), T = pick(rng, 1, 4), I = pick(rng, 1, 3);
    const std::size_t D = pick(rng, 1, 3);
    const auto mode = pick(rng, 0, 1) ? nn::ReturnMode::Sequence : nn::ReturnMode::FinalState;
    nn::BiGRULayer bi = nn::BiGRULayer::create(I, D, mode, seed, "check");
    randomize_cell(bi.forward_cell, rng);
    randomize_cell(bi.backward_cell, rng);
    Tensor x = random_tensor({B, T, I}, rng);
    Shape out = mode == nn::ReturnMode::Sequence ? Shape{B, T, 2 * D} : Shape{B, 2 * D};
    Tensor w = random_tensor(out, rng, -1, 1, false);
    std::vector<Tensor> wrt = cell_params(bi.forward_cell);
    for (auto& t : cell_params(bi.backward_cell)) wrt.push_back(t);
    wrt.push_back(x);
    return finite_diff_check([&] { return weighted_sum(bi.forward(x), w); }, wrt, tol, opt);
  }
  if (layer == "softmax-ce") {
    const std::size_t B = pick(rng, 1, 4), C = pick(rng, 2, 6);
    Tensor logits = random_tensor({B, C}, rng, -3, 3);
    std::vector<int> labels(B);
    for (auto& l : labels) l = static_cast<int>(pick(rng, 0, C - 1));
    std::vector<Tensor> wrt{logits};
    return finite_diff_check([&] { return nn::softmax_cross_entropy(logits, labels).loss; },
                             wrt, tol, opt);
  }
  if (layer == "model") {
    ModelConfig cfg = ModelConfig{}.scaled(8);
    cfg.input_length = 16;
    cfg.num_classes = 3;
    cfg.seed = seed;
    HeteroNet net(cfg);
    // Glorot fan-in of k*c over deep ReLU stacks shrinks activations to the
    // size of the difference step; a fan-in scaled draw keeps them O(1) so
    // fewer ReLUs sit within h of their kink.
    for (auto& p : net.parameters()) {
      if (p.name.find(".conv") == std::string::npos) continue;
      if (p.tensor.rank() == 1) {
        randomize(p.tensor, rng, -0.1, 0.1);
      } else {
        const double a = std::sqrt(6.0 / static_cast<double>(p.tensor.dim(0) * p.tensor.dim(1)));
        randomize(p.tensor, rng, -a, a);
      }
    }
    Tensor x = random_tensor({3, 1, 16}, rng, -1, 1, false);
    std::vector<int> labels{0, 1, 2};
    std::vector<Tensor> wrt;
    for (auto& p : net.parameters()) wrt.push_back(p.tensor);
    opt.max_entries_per_tensor = 3;
    opt.kink_aware = true;
    return finite_diff_check(
        [&] { return nn::softmax_cross_entropy(net.forward(x, nn::Mode::Train), labels).loss; },
        wrt, tol, opt);
  }
  throw ConfigError("gradcheck: unknown layer '" + layer + "'");
}

}  // namespace

const std::vector<std::string>& gradsuite_layers() {
  static const std::vector<std::string> names{"ops",       "conv1d",    "maxpool", "gap",
                                              "dense",     "batchnorm", "layernorm",
                                              "gru",       "bigru",     "softmax-ce",
                                              "model"};
  return names;
}

LayerCheckResult check_layer(const std::string& layer, const GradSuiteOptions& opts) {
  const auto& known = gradsuite_layers();
  if (std::find(known.begin(), known.end(), layer) == known.end())
    throw ConfigError("gradcheck: unknown layer '" + layer + "'");
  const auto start = std::chrono::steady_clock::now();
  LayerCheckResult r;
  r.layer = layer;
  const bool model = layer == "model";
  r.tol = model ? opts.model_tol : opts.tol;
  r.instances = model ? opts.model_instances : opts.instances;
  Rng rng(nn::param_rng(opts.seed, layer)());
  for (std::size_t i = 0; i < r.instances; ++i) {
    GradCheckReport rep = check_instance(layer, rng, r.tol, opts.seed * 1000 + i);
    r.max_rel_error = std::max(r.max_rel_error, rep.max_rel_error);
    r.checked_entries += rep.checked;
    r.kink_entries += rep.kinks;
    if (!rep.passed()) ++r.failed_instances;
  }
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<LayerCheckResult> run_gradsuite(const GradSuiteOptions& opts,
                                            const std::vector<std::string>& only) {
  std::vector<LayerCheckResult> out;
  for (const auto& name : only.empty() ? gradsuite_layers() : only)
    out.push_back(check_layer(name, opts));
  return out;
}

}  // namespace hiot
