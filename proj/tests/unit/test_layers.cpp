#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "heteroiot/errors.hpp"
#include "heteroiot/gradsuite.hpp"
#include "heteroiot/graph.hpp"
#include "heteroiot/layers.hpp"
#include "heteroiot/ops.hpp"

using namespace hiot;
using namespace hiot::nn;

namespace {

std::vector<double> as_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

void fill(Tensor& t, std::initializer_list<double> v) {
  ASSERT_EQ(v.size(), t.numel());
  std::copy(v.begin(), v.end(), t.mutable_values().begin());
}

}  // namespace

// --- conv1d -----------------------------------------------------------------

TEST(Conv1d, CausalPaddingPreservesLength) {
  std::mt19937_64 rng(1);
  Conv1DLayer l = Conv1DLayer::create(3, 2, 4, 7, "c");
  Tensor y = l.forward(random_tensor({2, 2, 8}, rng));
  EXPECT_EQ(y.shape(), (Shape{2, 4, 8}));
}

TEST(Conv1d, ZeroInputGivesBias) {
  Conv1DLayer l = Conv1DLayer::create(5, 3, 2, 7, "c");
  fill(l.bias, {0.25, -1.5});
  Tensor y = l.forward(Tensor({1, 3, 6}, 0.0));
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(y[t], 0.25);
    EXPECT_EQ(y[6 + t], -1.5);
  }
}

TEST(Conv1d, HandConvolution) {
  Tensor x({1, 1, 3}, std::vector<double>{1, 2, 3});
  Tensor w({3, 1, 1}, std::vector<double>{1, 1, 1});
  Tensor b({1}, 0.0);
  EXPECT_EQ(as_vec(conv1d(x, w, b).values()), (std::vector<double>{1, 3, 6}));
}

TEST(Conv1d, TapOrderFollowsDefinition) {
  // y[t] = sum_k w[k] * xpad[t + k] with f - 1 = 2 leading zeros.
  Tensor x({1, 1, 3}, std::vector<double>{1, 2, 3});
  Tensor w({3, 1, 1}, std::vector<double>{100, 10, 1});
  Tensor b({1}, 0.0);
  EXPECT_EQ(as_vec(conv1d(x, w, b).values()), (std::vector<double>{1, 12, 123}));
}

TEST(Conv1d, Errors) {
  Tensor w({3, 2, 1}), b({1});
  EXPECT_THROW(conv1d(Tensor({1, 3, 5}), w, b), ShapeError);
  EXPECT_THROW(Conv1DLayer::create(0, 1, 1, 1, "c"), ConfigError);
}

TEST(Conv1d, Causality) {
  std::mt19937_64 rng(2);
  for (std::size_t f : {1, 3, 5, 11}) {
    Conv1DLayer l = Conv1DLayer::create(f, 2, 3, 5, "c");
    Tensor x = random_tensor({1, 2, 12}, rng);
    const auto base = as_vec(l.forward(x).values());
    for (std::size_t t0 = 0; t0 < 12; ++t0) {
      Tensor xp = x.clone();
      xp.mutable_values()[t0] += 1.0;       // channel 0
      xp.mutable_values()[12 + t0] -= 2.0;  // channel 1
      const auto y = as_vec(l.forward(xp).values());
      for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t t = 0; t < t0; ++t) EXPECT_EQ(y[o * 12 + t], base[o * 12 + t]);
    }
  }
}

// --- pooling ------------------------------------------------------------------

TEST(MaxPool, Basic) {
  Tensor x({1, 1, 4}, std::vector<double>{1, 3, 2, 5});
  EXPECT_EQ(as_vec(maxpool1d(x, 2).values()), (std::vector<double>{3, 5}));
}

TEST(MaxPool, TiesRouteToFirst) {
  Graph g;
  GraphScope scope(g);
  Tensor x({1, 1, 4}, 7.0);
  x.set_requires_grad(true);
  Tensor y = maxpool1d(x, 2);
  EXPECT_EQ(as_vec(y.values()), (std::vector<double>{7, 7}));
  g.backward(ops::sum(y));
  EXPECT_EQ(as_vec(x.grad()), (std::vector<double>{1, 0, 1, 0}));
}

TEST(MaxPool, OddLengthFloors) {
  EXPECT_EQ(maxpool1d(Tensor({2, 3, 9}), 2).shape(), (Shape{2, 3, 4}));
  EXPECT_THROW(maxpool1d(Tensor({1, 1, 1}), 2), ShapeError);
}

TEST(GlobalAvgPool, MeanOverTime) {
  Tensor x({1, 2, 3}, std::vector<double>{2, 4, 6, 5, 5, 5});
  EXPECT_EQ(as_vec(global_avg_pool(x).values()), (std::vector<double>{4, 5}));
}

TEST(GlobalAvgPool, GradientSpreadsEvenly) {
  Graph g;
  GraphScope scope(g);
  Tensor x({1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  x.set_requires_grad(true);
  Tensor w({1, 1}, std::vector<double>{3.0});
  g.backward(ops::sum(ops::mul(global_avg_pool(x), w)));
  EXPECT_EQ(as_vec(x.grad()), (std::vector<double>{0.75, 0.75, 0.75, 0.75}));
}

// --- dense --------------------------------------------------------------------

TEST(Dense, IdentityRelu) {
  DenseLayer d = DenseLayer::create(2, 2, Activation::Relu, 1, "d");
  fill(d.weight, {1, 0, 0, 1});
  Tensor x({1, 2}, std::vector<double>{-1, 2});
  EXPECT_EQ(as_vec(d.forward(x).values()), (std::vector<double>{0, 2}));
}

TEST(Dense, ZeroWeightBroadcastsBias) {
  DenseLayer d = DenseLayer::create(3, 2, Activation::None, 1, "d");
  fill(d.weight, {0, 0, 0, 0, 0, 0});
  fill(d.bias, {1.5, -0.5});
  std::mt19937_64 rng(3);
  Tensor y = d.forward(random_tensor({4, 3}, rng));
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(y[2 * r], 1.5);
    EXPECT_EQ(y[2 * r + 1], -0.5);
  }
}

TEST(Dense, HandTwoByTwo) {
  DenseLayer d = DenseLayer::create(2, 2, Activation::None, 1, "d");
  fill(d.weight, {1, 2, 3, 4});
  fill(d.bias, {0.5, -1});
  Tensor x({1, 2}, std::vector<double>{2, -1});
  // [2,-1] . [[1,2],[3,4]] = [-1, 0]; + bias
  EXPECT_EQ(as_vec(d.forward(x).values()), (std::vector<double>{-0.5, -1}));
  EXPECT_THROW(d.forward(Tensor({1, 3})), ShapeError);
}

// --- GRU ----------------------------------------------------------------------

TEST(GRU, ZeroParameters) {
  GRUCell c = GRUCell::create(2, 3, 1, "g");
  for (Tensor* t : {&c.W_u, &c.W_r, &c.W_h, &c.U_u, &c.U_r, &c.U_h})
    std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0);
  Tensor x = Tensor::vector({0.3, -0.7});
  Tensor h = Tensor::vector({1.0, -2.0, 0.5});
  EXPECT_EQ(as_vec(gru_step(x, h, c).values()), (std::vector<double>{0.5, -1.0, 0.25}));
}

TEST(GRU, ZeroInputAndState) {
  GRUCell c = GRUCell::create(2, 3, 1, "g");
  fill(c.b_u, {0.3, -1.2, 2.0});
  fill(c.b_h, {-0.4, 0.9, 0.1});
  Tensor h = gru_step(Tensor({2}, 0.0), Tensor({3}, 0.0), c);
  const double bu[] = {0.3, -1.2, 2.0}, bh[] = {-0.4, 0.9, 0.1};
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(h[i], 1.0 / (1.0 + std::exp(-bu[i])) * std::tanh(bh[i]), 1e-15);
}

TEST(GRU, MatchesScalarOracle) {
  // Expected h_t from an independent scalar-loop implementation.
  GRUCell c = GRUCell::create(2, 3, 1, "g");
  fill(c.W_u, {0.438, -0.098, 0.574, 0.316, -0.649, 0.761});
  fill(c.W_r, {0.418, 0.458, -0.595, -0.079, -0.207, 0.683});
  fill(c.W_h, {0.23, 0.516, -0.091, -0.436, 0.087, -0.698});
  fill(c.U_u, {0.524, 0.211, 0.413, -0.233, 0.753, 0.629, 0.445, -0.489, -0.053});
  fill(c.U_r, {-0.73, -0.553, 0.293, 0.392, 0.748, -0.279, -0.207, -0.049, -0.497});
  fill(c.U_h, {-0.592, -0.039, -0.437, 0.272, -0.101, 0.532, 0.32, -0.3, 0.532});
  fill(c.b_u, {0.305, -0.113, -0.212});
  fill(c.b_r, {0.182, -0.36, -0.3});
  fill(c.b_h, {-0.493, 0.287, 0.165});
  Tensor h = gru_step(Tensor::vector({0.7, -1.2}), Tensor::vector({0.3, -0.4, 0.9}), c);
  const double expected[] = {-0.5412903021873643, 0.17993943284915312, 0.8868244275999956};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(h[i], expected[i], 1e-14);

  // The batched form agrees row by row.
  Tensor xb({2, 2}, std::vector<double>{0.7, -1.2, 0.7, -1.2});
  Tensor hb({2, 3}, std::vector<double>{0.3, -0.4, 0.9, 0.3, -0.4, 0.9});
  Tensor yb = gru_step(xb, hb, c);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(yb[i], expected[i % 3], 1e-14);
}

TEST(GRU, HiddenStateBound) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    GRUCell c = GRUCell::create(3, 4, static_cast<std::uint64_t>(trial), "g");
    for (Tensor* t : {&c.W_u, &c.W_r, &c.W_h, &c.U_u, &c.U_r, &c.U_h, &c.b_u, &c.b_r, &c.b_h})
      for (auto& v : t->mutable_values()) v *= 3.0;
    Tensor x = random_tensor({3}, rng, -5, 5);
    Tensor h = random_tensor({4}, rng, -3, 3);
    double hmax = 0.0;
    for (double v : h.values()) hmax = std::max(hmax, std::abs(v));
    Tensor hn = gru_step(x, h, c);
    for (double v : hn.values()) EXPECT_LE(std::abs(v), std::max(hmax, 1.0) + 1e-15);
  }
}

TEST(GRU, DimensionMismatch) {
  GRUCell c = GRUCell::create(2, 3, 1, "g");
  EXPECT_THROW(gru_step(Tensor({3}), Tensor({3}), c), ShapeError);
  EXPECT_THROW(gru_step(Tensor({2}), Tensor({2}), c), ShapeError);
}

TEST(BiGRU, SingleStepIsTwoIndependentSteps) {
  std::mt19937_64 rng(6);
  BiGRULayer bi = BiGRULayer::create(2, 3, ReturnMode::Sequence, 9, "bi");
  Tensor x = random_tensor({1, 1, 2}, rng);
  Tensor y = bi.forward(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 6}));
  Tensor x0({1, 2}, as_vec(x.values()));
  Tensor hf = gru_step(x0, Tensor({1, 3}), bi.forward_cell);
  Tensor hb = gru_step(x0, Tensor({1, 3}), bi.backward_cell);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(y[i], hf[i]);
    EXPECT_EQ(y[3 + i], hb[i]);
  }
}

TEST(BiGRU, PalindromeSymmetry) {
  BiGRULayer bi = BiGRULayer::create(1, 2, ReturnMode::Sequence, 3, "bi");
  bi.backward_cell.W_u = bi.forward_cell.W_u.clone();
  bi.backward_cell.W_r = bi.forward_cell.W_r.clone();
  bi.backward_cell.W_h = bi.forward_cell.W_h.clone();
  bi.backward_cell.U_u = bi.forward_cell.U_u.clone();
  bi.backward_cell.U_r = bi.forward_cell.U_r.clone();
  bi.backward_cell.U_h = bi.forward_cell.U_h.clone();
  Tensor x({1, 5, 1}, std::vector<double>{0.4, -1.0, 2.0, -1.0, 0.4});
  Tensor y = bi.forward(x);
  const std::size_t T = 5, D = 2;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d)
      EXPECT_EQ(y[t * 2 * D + d], y[(T - 1 - t) * 2 * D + D + d]);
}

TEST(BiGRU, CompositionOracle) {
  std::mt19937_64 rng(7);
  const std::size_t B = 2, T = 3, I = 2, D = 2;
  BiGRULayer seq = BiGRULayer::create(I, D, ReturnMode::Sequence, 11, "bi");
  BiGRULayer fin = seq;
  fin.return_mode = ReturnMode::FinalState;
  Tensor x = random_tensor({B, T, I}, rng);
  Tensor ys = seq.forward(x), yf = fin.forward(x);
  ASSERT_EQ(ys.shape(), (Shape{B, T, 2 * D}));
  ASSERT_EQ(yf.shape(), (Shape{B, 2 * D}));

  for (std::size_t b = 0; b < B; ++b) {
    auto step_input = [&](std::size_t t) {
      return Tensor::vector({x[(b * T + t) * I], x[(b * T + t) * I + 1]});
    };
    Tensor h = Tensor({D}, 0.0);
    std::vector<Tensor> fwd;
    for (std::size_t t = 0; t < T; ++t) fwd.push_back(h = gru_step(step_input(t), h, seq.forward_cell));
    h = Tensor({D}, 0.0);
    std::vector<Tensor> bwd(T);
    for (std::size_t t = T; t-- > 0;) bwd[t] = h = gru_step(step_input(t), h, seq.backward_cell);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < D; ++d) {
        EXPECT_NEAR(ys[((b * T) + t) * 2 * D + d], fwd[t][d], 1e-14);
        EXPECT_NEAR(ys[((b * T) + t) * 2 * D + D + d], bwd[t][d], 1e-14);
      }
    for (std::size_t d = 0; d < D; ++d) {
      EXPECT_NEAR(yf[b * 2 * D + d], fwd[T - 1][d], 1e-14);
      EXPECT_NEAR(yf[b * 2 * D + D + d], bwd[0][d], 1e-14);
    }
  }
}

TEST(BiGRU, DirectionsHaveIndependentGradients) {
  std::mt19937_64 rng(8);
  BiGRULayer bi = BiGRULayer::create(2, 3, ReturnMode::Sequence, 13, "bi");
  Tensor x = random_tensor({2, 4, 2}, rng);
  Tensor w = random_tensor({2, 4, 6}, rng);
  Tensor wf = w.clone();  // backward half of the output weights zeroed
  for (std::size_t i = 0; i < wf.numel(); ++i)
    if (i % 6 >= 3) wf.mutable_values()[i] = 0.0;

  auto fwd_grad = [&](const Tensor& weights) {
    Graph g;
    GraphScope scope(g);
    bi.forward_cell.W_u.zero_grad();
    bi.backward_cell.W_u.zero_grad();
    g.backward(ops::sum(ops::mul(bi.forward(x), weights)));
    return std::make_pair(as_vec(bi.forward_cell.W_u.grad()),
                          as_vec(bi.backward_cell.W_u.grad()));
  };
  auto [full_f, full_b] = fwd_grad(w);
  auto [masked_f, masked_b] = fwd_grad(wf);
  EXPECT_EQ(full_f, masked_f);
  for (double v : masked_b) EXPECT_EQ(v, 0.0);
}

TEST(BiGRU, GateRangeStaysOpen) {
  // Gates are sigmoids of finite arguments, so the output is a strict convex
  // blend: with h = 0 the step output lies strictly inside (-1, 1).
  std::mt19937_64 rng(9);
  GRUCell c = GRUCell::create(4, 5, 3, "g");
  Tensor h = gru_step(random_tensor({4}, rng, -10, 10), Tensor({5}, 0.0), c);
  for (double v : h.values()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

// --- normalization ------------------------------------------------------------

TEST(BatchNorm, TrainStatistics) {
  std::mt19937_64 rng(10);
  BatchNormLayer bn = BatchNormLayer::create(3);
  Tensor x = random_tensor({4, 5, 3}, rng, -4, 9);
  Tensor y = bn.forward(x, Mode::Train);
  for (std::size_t f = 0; f < 3; ++f) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 20; ++r) m += y[r * 3 + f];
    m /= 20;
    for (std::size_t r = 0; r < 20; ++r) v += (y[r * 3 + f] - m) * (y[r * 3 + f] - m);
    v /= 20;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(BatchNorm, InferWithUnitStatsIsIdentity) {
  std::mt19937_64 rng(11);
  BatchNormLayer bn = BatchNormLayer::create(4);
  bn.epsilon = 0.0;
  Tensor x = random_tensor({3, 4}, rng);
  EXPECT_EQ(as_vec(bn.forward(x, Mode::Infer).values()), as_vec(x.values()));
}

TEST(BatchNorm, RunningMeanUpdate) {
  BatchNormLayer bn = BatchNormLayer::create(1);
  Tensor x({2, 1}, std::vector<double>{1.0, 3.0});
  bn.forward(x, Mode::Train);
  EXPECT_NEAR(bn.running_mean[0], 0.02, 1e-15);
  // biased batch variance 1 -> 0.99 * 1 + 0.01 * 1
  EXPECT_NEAR(bn.running_var[0], 1.0, 1e-15);
}

TEST(BatchNorm, InferIsPerSample) {
  std::mt19937_64 rng(12);
  BatchNormLayer bn = BatchNormLayer::create(2);
  bn.forward(random_tensor({6, 2}, rng), Mode::Train);
  Tensor a = random_tensor({1, 2}, rng);
  Tensor pair({2, 2}, {a[0], a[1], 9.0, -9.0});
  Tensor ya = bn.forward(a, Mode::Infer), yp = bn.forward(pair, Mode::Infer);
  EXPECT_EQ(ya[0], yp[0]);
  EXPECT_EQ(ya[1], yp[1]);
}

TEST(BatchNorm, SingleSampleTrainIsAnError) {
  BatchNormLayer bn = BatchNormLayer::create(2);
  EXPECT_THROW(bn.forward(Tensor({1, 2}), Mode::Train), ShapeError);
  EXPECT_NO_THROW(bn.forward(Tensor({1, 2}), Mode::Infer));
}

TEST(LayerNorm, TwoValues) {
  LayerNormLayer ln = LayerNormLayer::create(2);
  ln.epsilon = 0.0;
  Tensor y = ln.forward(Tensor({1, 2}, std::vector<double>{1, 3}));
  EXPECT_EQ(as_vec(y.values()), (std::vector<double>{-1, 1}));
}

TEST(LayerNorm, ConstantRowIsZero) {
  LayerNormLayer ln = LayerNormLayer::create(3);
  Tensor y = ln.forward(Tensor({2, 3}, 4.5));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, RowMeansVanish) {
  std::mt19937_64 rng(13);
  LayerNormLayer ln = LayerNormLayer::create(7);
  Tensor y = ln.forward(random_tensor({5, 7}, rng, -100, 100));
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0;
    for (std::size_t f = 0; f < 7; ++f) m += y[r * 7 + f];
    EXPECT_LT(std::abs(m / 7), 1e-10);
  }
  EXPECT_THROW(LayerNormLayer::create(1).forward(Tensor({2, 1})), ShapeError);
}

// --- softmax cross-entropy ----------------------------------------------------

TEST(SoftmaxCE, UniformTwoClass) {
  std::vector<int> labels{0};
  auto ce = softmax_cross_entropy(Tensor({1, 2}, 0.0), labels);
  EXPECT_NEAR(ce.loss.item(), 0.693147180559945, 1e-12);
}

TEST(SoftmaxCE, LargeLogitsAreStable) {
  std::vector<int> labels{0};
  auto ce = softmax_cross_entropy(Tensor({1, 2}, std::vector<double>{1000, 0}), labels);
  EXPECT_NEAR(ce.probs[0], 1.0, 1e-15);
  EXPECT_NEAR(ce.probs[1], 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(ce.loss.item()));
}

TEST(SoftmaxCE, RowsSumToOneAndGradient) {
  std::mt19937_64 rng(14);
  Tensor logits = random_tensor({4, 5}, rng, -5, 5);
  logits.set_requires_grad(true);
  std::vector<int> labels{0, 3, 4, 1};
  Graph g;
  GraphScope scope(g);
  auto ce = softmax_cross_entropy(logits, labels);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += ce.probs[i * 5 + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  g.backward(ce.loss);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 5; ++k) {
      const double onehot = static_cast<int>(k) == labels[i] ? 1.0 : 0.0;
      EXPECT_NEAR(logits.grad()[i * 5 + k], (ce.probs[i * 5 + k] - onehot) / 4.0, 1e-15);
    }
}

TEST(SoftmaxCE, OutOfRangeLabel) {
  std::vector<int> labels{2};
  EXPECT_THROW(softmax_cross_entropy(Tensor({1, 2}), labels), std::out_of_range);
  std::vector<int> neg{-1};
  EXPECT_THROW(softmax_cross_entropy(Tensor({1, 2}), neg), std::out_of_range);
}

// --- gradient suite -----------------------------------------------------------

class LayerGradients : public ::testing::TestWithParam<std::string> {};

TEST_P(LayerGradients, PassAtDefaultTolerance) {
  GradSuiteOptions opts;
  opts.instances = 20;
  LayerCheckResult r = check_layer(GetParam(), opts);
  EXPECT_TRUE(r.passed()) << r.layer << " max rel err " << r.max_rel_error;
  EXPECT_EQ(r.instances, 20u);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, LayerGradients,
                         ::testing::Values("ops", "conv1d", "maxpool", "gap", "dense",
                                           "batchnorm", "layernorm", "gru", "bigru",
                                           "softmax-ce"),
                         [](const auto& info) {
                           std::string n = info.param;
                           std::replace(n.begin(), n.end(), '-', '_');
                           return n;
                         });

TEST(GradSuite, TightToleranceFails) {
  GradSuiteOptions opts;
  opts.tol = 1e-12;
  opts.instances = 5;
  EXPECT_FALSE(check_layer("gru", opts).passed());
  EXPECT_THROW(check_layer("lstm", opts), ConfigError);
}
