#include <sys/resource.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "heteroiot/errors.hpp"
#include "heteroiot/gradcheck.hpp"
#include "heteroiot/gradsuite.hpp"
#include "heteroiot/graph.hpp"
#include "heteroiot/model.hpp"
#include "heteroiot/ops.hpp"

using namespace hiot;

namespace {

Tensor random_input(std::size_t batch, std::size_t t, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(batch * t);
  for (auto& x : v) x = n(rng);
  return Tensor({batch, 1, t}, std::move(v));
}

std::vector<double> as_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

ModelConfig tiny(Variant v = Variant::Full) {
  ModelConfig c = ModelConfig{}.scaled(8);
  c.variant = v;
  c.input_length = 16;
  c.num_classes = 3;
  return c;
}

}  // namespace

TEST(Model, ConvBlockStructure) {
  HeteroNet net(ModelConfig{});
  ASSERT_EQ(net.conv_blocks().size(), 4u);
  const std::size_t kernels[] = {3, 5, 7, 11};
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& blk = net.conv_blocks()[b];
    EXPECT_EQ(blk.kernel_size(), kernels[b]);
    ASSERT_EQ(blk.layers().size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) {
      const auto& l = blk.layers()[i];
      EXPECT_EQ(l.kernel_size, kernels[b]);
      EXPECT_EQ(l.out_channels, i < 3 ? 128u : 64u) << "layer " << i;
      EXPECT_EQ(l.in_channels, i == 0 ? 1u : blk.layers()[i - 1].out_channels);
    }
    EXPECT_EQ(ConvBlock::kPoolAfter[0], 2u);
    EXPECT_EQ(ConvBlock::kPoolAfter[1], 5u);
    EXPECT_EQ(blk.output_width(), 64u);
  }
}

TEST(Model, ConvBlockOutputIs64ForAnyLength) {
  ConvBlock blk(5, 128, 64, 1, "b");
  for (std::size_t t : {4, 5, 9, 31}) {
    NoGradGuard ng;
    EXPECT_EQ(blk.forward(random_input(2, t, t)).shape(), (Shape{2, 64})) << "t=" << t;
  }
}

TEST(Model, RecurrentStackStructure) {
  HeteroNet net(ModelConfig{});
  const GRUStack* g = net.gru_stack();
  ASSERT_NE(g, nullptr);
  ASSERT_EQ(g->layers().size(), 3u);
  ASSERT_EQ(g->norms().size(), 3u);
  const std::size_t dims[] = {128, 64, 64}, inputs[] = {1, 256, 128};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(g->layers()[i].forward_cell.hidden, dims[i]);
    EXPECT_EQ(g->layers()[i].backward_cell.hidden, dims[i]);
    EXPECT_EQ(g->layers()[i].forward_cell.input_dim, inputs[i]);
    EXPECT_EQ(g->norms()[i].features(), 2 * dims[i]);
    EXPECT_EQ(g->layers()[i].return_mode,
              i < 2 ? nn::ReturnMode::Sequence : nn::ReturnMode::FinalState);
  }
  EXPECT_EQ(g->output_width(), 128u);
}

TEST(Model, HeadStructure) {
  HeteroNet net(ModelConfig{});
  const auto& head = net.head();
  EXPECT_EQ(net.feature_width(), 384u);
  EXPECT_EQ(net.global_offset(), 256u);
  const std::size_t widths[] = {1024, 512, 256, 64};
  ASSERT_EQ(head.hidden().size(), 4u);
  ASSERT_EQ(head.norms().size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(head.hidden()[i].out_features(), widths[i]);
    EXPECT_EQ(head.hidden()[i].activation, nn::Activation::Relu);
    EXPECT_EQ(head.norms()[i].gamma.numel(), widths[i]);
    if (i > 0) {
      EXPECT_LT(widths[i], widths[i - 1]);
    }
  }
  EXPECT_EQ(head.hidden()[0].weight.numel() + head.hidden()[0].bias.numel(), 384u * 1024 + 1024);
  EXPECT_EQ(head.classifier().in_features(), 64u);
  EXPECT_EQ(head.classifier().out_features(), 8u);
  EXPECT_EQ(head.classifier().activation, nn::Activation::None);
}

TEST(Model, ParameterCountMatchesCountingOracle) {
  // Independent per-layer tally (conv f*cin*cout + cout; two GRU cells of
  // 3*(D*in + D*D + D) plus batch-norm gamma/beta per recurrent layer; dense
  // in*out + out plus layer-norm gamma/beta per hidden width).
  EXPECT_EQ(HeteroNet(ModelConfig{}).parameter_count(), 2973128u);
  ModelConfig g;
  g.variant = Variant::GlobalOnly;
  EXPECT_EQ(HeteroNet(g).parameter_count(), 1107144u);
  ModelConfig l;
  l.variant = Variant::LocalOnly;
  EXPECT_EQ(HeteroNet(l).parameter_count(), 2543816u);
  ModelConfig m;
  m.variant = Variant::MlpOnly;
  EXPECT_EQ(HeteroNet(m).parameter_count(), 849864u);
  // Recurrent and convolutional counts do not depend on the input length.
  ModelConfig longer;
  longer.input_length = 864;
  EXPECT_EQ(HeteroNet(longer).parameter_count(), 2973128u);
}

TEST(Model, OutputShapesAndFeatureWidths) {
  HeteroNet full(ModelConfig{});
  NoGradGuard ng;
  Tensor x = random_input(2, 168, 1);
  EXPECT_EQ(full.forward(x, nn::Mode::Infer).shape(), (Shape{2, 8}));
  EXPECT_EQ(full.features(x, nn::Mode::Infer).shape(), (Shape{2, 384}));
  ModelConfig l;
  l.variant = Variant::LocalOnly;
  EXPECT_EQ(HeteroNet(l).feature_width(), 256u);
  ModelConfig g;
  g.variant = Variant::GlobalOnly;
  EXPECT_EQ(HeteroNet(g).feature_width(), 128u);
  ModelConfig m;
  m.variant = Variant::MlpOnly;
  EXPECT_EQ(HeteroNet(m).feature_width(), 168u);
}

TEST(Model, InvalidConfigs) {
  ModelConfig c;
  c.num_classes = 1;
  EXPECT_THROW(HeteroNet{c}, ConfigError);
  c = ModelConfig{};
  c.mlp_widths = {1024, 1};
  EXPECT_THROW(HeteroNet{c}, ConfigError);
  c = ModelConfig{};
  c.input_length = 3;
  EXPECT_THROW(HeteroNet{c}, ConfigError);
  HeteroNet ok(tiny());
  NoGradGuard ng;
  EXPECT_THROW(ok.forward(random_input(1, 17, 1), nn::Mode::Infer), ShapeError);
  EXPECT_THROW(parse_variant("both"), ConfigError);
}

TEST(Model, IdenticalSamplesGiveIdenticalRows) {
  HeteroNet net(tiny());
  Tensor one = random_input(1, 16, 3);
  std::vector<double> v = as_vec(one.values());
  v.insert(v.end(), v.begin(), v.end());
  NoGradGuard ng;
  Tensor y = net.forward(Tensor({2, 1, 16}, v), nn::Mode::Infer);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(y[k], y[3 + k]);
}

TEST(Model, SharedPartsIdenticalAcrossVariants) {
  HeteroNet full(tiny(Variant::Full)), global(tiny(Variant::GlobalOnly));
  Snapshot a = full.parameters(), b = global.parameters();
  std::size_t shared = 0;
  for (const auto& [name, t] : b)
    for (const auto& [n2, t2] : a)
      if (name == n2 && name.rfind("global.", 0) == 0) {
        EXPECT_EQ(as_vec(t.values()), as_vec(t2.values())) << name;
        ++shared;
      }
  EXPECT_GT(shared, 0u);
  NoGradGuard ng;
  Tensor x = random_input(2, 16, 4);
  EXPECT_NE(as_vec(full.forward(x, nn::Mode::Infer).values()),
            as_vec(global.forward(x, nn::Mode::Infer).values()));
}

TEST(Model, FinalTimestepReachesEveryBranch) {
  HeteroNet net(tiny());
  Tensor x = random_input(1, 16, 5);
  Tensor xp = x.clone();
  xp.mutable_values()[15] += 0.5;
  NoGradGuard ng;
  const auto a = as_vec(net.local_features(x).values());
  const auto b = as_vec(net.local_features(xp).values());
  const std::size_t narrow = net.config().conv_filters_narrow;
  for (std::size_t blk = 0; blk < 4; ++blk) {
    bool changed = false;
    for (std::size_t i = 0; i < narrow; ++i) changed |= a[blk * narrow + i] != b[blk * narrow + i];
    EXPECT_TRUE(changed) << "block " << blk;
  }
  EXPECT_NE(as_vec(net.global_features(x, nn::Mode::Infer).values()),
            as_vec(net.global_features(xp, nn::Mode::Infer).values()));
}

TEST(Model, ZeroInputZeroBiasHeadGivesZeroLogits) {
  MLPHead head(384, {1024, 512, 256, 64}, 8, 1, "head");
  NoGradGuard ng;
  Tensor y = head.forward(Tensor({3, 384}, 0.0));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Model, BranchDecoupling) {
  HeteroNet net(tiny());
  Tensor x = random_input(3, 16, 6);
  const std::size_t narrow = net.config().conv_filters_narrow;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor w({3, net.feature_width()});
  for (auto& v : w.mutable_values()) v = u(rng);
  Tensor masked = w.clone();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = narrow; c < net.feature_width(); ++c)
      masked.mutable_values()[r * net.feature_width() + c] = 0.0;

  auto block0_grads = [&](const Tensor& weights) {
    Graph g;
    GraphScope scope(g);
    Snapshot ps = net.parameters();
    for (auto& p : ps) p.tensor.zero_grad();
    g.backward(ops::sum(ops::mul(net.features(x, nn::Mode::Train), weights)));
    std::vector<double> out;
    for (auto& p : ps)
      if (p.name.rfind("local.k3.", 0) == 0) out.insert(out.end(), p.tensor.grad().begin(), p.tensor.grad().end());
    return out;
  };
  EXPECT_EQ(block0_grads(w), block0_grads(masked));
}

TEST(Model, AblationConsistencyAtDocumentedOffsets) {
  // With the local slots zeroed and the head's first-layer rows over those
  // slots zeroed, the full model computes exactly what global-only computes.
  HeteroNet full(tiny(Variant::Full)), global(tiny(Variant::GlobalOnly));
  const std::size_t off = full.global_offset();
  const std::size_t gw = global.feature_width();
  ASSERT_EQ(off + gw, full.feature_width());

  // Copy the global-only head into the full head, first-layer rows at offset.
  Snapshot fp = full.parameters(), gp = global.parameters();
  for (auto& [name, t] : fp) {
    if (name.rfind("head.", 0) != 0) continue;
    const Tensor* src = nullptr;
    for (auto& [n2, t2] : gp)
      if (n2 == name) src = &t2;
    ASSERT_NE(src, nullptr);
    auto dst = t.mutable_values();
    if (t.shape() == src->shape()) {
      std::copy(src->values().begin(), src->values().end(), dst.begin());
    } else {
      const std::size_t out = t.dim(1);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (std::size_t r = 0; r < gw; ++r)
        for (std::size_t c = 0; c < out; ++c) dst[(off + r) * out + c] = (*src)[r * out + c];
    }
  }

  NoGradGuard ng;
  Tensor x = random_input(4, 16, 8);
  Tensor gfeat = global.features(x, nn::Mode::Infer);
  std::vector<double> padded(4 * full.feature_width(), 0.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < gw; ++c) padded[r * full.feature_width() + off + c] = gfeat[r * gw + c];
  // The recurrent branch of the full model sees the same input, so its
  // features sit at the documented offset unchanged.
  Tensor ffeat = full.features(x, nn::Mode::Infer);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < gw; ++c)
      EXPECT_EQ(ffeat[r * full.feature_width() + off + c], gfeat[r * gw + c]);

  Tensor yf = full.head().forward(Tensor({4, full.feature_width()}, padded));
  Tensor yg = global.head().forward(gfeat);
  EXPECT_EQ(as_vec(yf.values()), as_vec(yg.values()));
}

TEST(Model, TinyModelGradientCheck) {
  GradSuiteOptions opts;
  opts.model_instances = 3;
  LayerCheckResult r = check_layer("model", opts);
  EXPECT_TRUE(r.passed()) << "max rel err " << r.max_rel_error;
  EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST(Model, LongSequenceForwardStaysBounded) {
  ModelConfig c;
  c.input_length = 864;
  HeteroNet net(c);
  NoGradGuard ng;
  Tensor y = net.forward(random_input(2, 864, 9, 10.0), nn::Mode::Infer);
  EXPECT_EQ(y.shape(), (Shape{2, 8}));
  for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  // Peak resident set in KiB; activations here are a few tens of MB.
  EXPECT_LT(ru.ru_maxrss, 1024L * 1024L);
}

TEST(Model, StateRoundTrip) {
  HeteroNet a(tiny()), b([] {
    ModelConfig c = tiny();
    c.seed = 999;
    return c;
  }());
  a.load_state(b.state());
  Snapshot sa = a.state(), sb = b.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i)
    EXPECT_EQ(as_vec(sa[i].tensor.values()), as_vec(sb[i].tensor.values()));
  HeteroNet other(tiny(Variant::GlobalOnly));
  EXPECT_THROW(a.load_state(other.state()), ConfigError);
}

TEST(Model, ConfigJsonRoundTrip) {
  ModelConfig c = ModelConfig{}.scaled(4);
  c.variant = Variant::LocalOnly;
  c.input_length = 64;
  c.num_classes = 4;
  c.seed = 17;
  nlohmann::json j = c;
  ModelConfig back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.variant, Variant::LocalOnly);

  const auto path = std::filesystem::temp_directory_path() / "heteroiot_model_cfg.json";
  {
    std::ofstream os(path);
    os << R"({"variant": "global-only", "input_length": 32, "num_classes": 3, "seed": 5,
              "mlp_widths": [64, 32]})";
  }
  ModelConfig loaded = load_model_config(path.string());
  EXPECT_EQ(loaded.variant, Variant::GlobalOnly);
  EXPECT_EQ(loaded.mlp_widths, (std::vector<std::size_t>{64, 32}));
  EXPECT_EQ(loaded.gru_dims, (std::vector<std::size_t>{128, 64, 64}));
  std::filesystem::remove(path);
}
