#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "conv_oracle.hpp"
#include "detcnn/error.hpp"
#include "detcnn/layers.hpp"
#include "detcnn/parallel.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace detcnn;

class GradCheck : public ::testing::TestWithParam<gradcheck::Case> {};

TEST_P(GradCheck, DoubleShadow) {
  const auto r = gradcheck::run<double>(GetParam());
  std::printf("  %-24s f64 input %.3e param %.3e (%zu entries)\n", GetParam().name.c_str(), r.input_err,
              r.param_err, r.checked);
  EXPECT_LT(r.max(), 1e-6);
}

TEST_P(GradCheck, Float) {
  const auto r = gradcheck::run<float>(GetParam());
  std::printf("  %-24s f32 input %.3e param %.3e (%zu entries)\n", GetParam().name.c_str(), r.input_err,
              r.param_err, r.checked);
  EXPECT_LT(r.max(), 1e-2);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, GradCheck, ::testing::ValuesIn(gradcheck::cases()),
                         [](const auto& info) { return info.param.name; });

TEST(GradCheckCoverage, EveryKindHasACase) {
  for (LayerKind k : kAllLayerKinds) {
    bool found = false;
    for (const auto& c : gradcheck::cases()) found = found || c.cfg.kind == k;
    EXPECT_TRUE(found) << to_string(k);
  }
}

TEST(ConvOracle, HundredRandomInstancesBitExact) {
  DetRng rng(2024, "conv-instances");
  int conv = 0, sep = 0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = oracle::random_instance(rng);
    std::string detail;
    EXPECT_TRUE(oracle::matches(inst, static_cast<std::uint64_t>(i), &detail)) << detail;
    (inst.separable ? sep : conv) += 1;
  }
  EXPECT_GT(conv, 20);
  EXPECT_GT(sep, 20);
}

TEST(ConvOracle, BackwardMatchesScalarLoops) {
  DetRng rng(7, "conv-backward");
  for (int i = 0; i < 30; ++i) {
    auto inst = oracle::random_instance(rng);
    inst.separable = false;
    auto layer = make_layer<float>("c", oracle::layer_config(inst));
    layer->build(inst.input.unbatched());
    const Tensor x = support::random_tensor(inst.input, i, "bx");
    RunContext ctx;
    const Tensor y = layer->forward(x, ctx);
    const Tensor dy = support::random_tensor(y.shape(), i, "bdy");
    const Tensor dx = layer->backward(x, y, dy, ctx);
    const Tensor& kernel = layer->find("kernel")->value;
    EXPECT_TRUE(dx.bit_equal(oracle::conv2d_input_grad(x.shape(), dy, kernel, inst.stride, inst.padding)))
        << inst.str();
    EXPECT_TRUE(layer->find("kernel")->grad.bit_equal(
        oracle::conv2d_kernel_grad(x, dy, inst.kernel, inst.stride, inst.padding)))
        << inst.str();
  }
}

TEST(ConvKernels, ThreadCountInvariant) {
  for (const auto& cfg : {LayerConfig::conv2d(8, 3, 1, Padding::same, true, 1),
                          LayerConfig::separable_conv2d(8, 3, Padding::same, true, 1, 2),
                          LayerConfig::maxpool2d(3, 2, Padding::same), LayerConfig::dense(5, 3)}) {
    const bool flat = cfg.kind == LayerKind::dense;
    const Shape xs = flat ? Shape{5, 40} : Shape{5, 9, 11, 6};
    const Tensor x = support::random_tensor(xs, 1, "threads-x");
    std::vector<Tensor> outs;
    for (std::size_t threads : {1u, 3u, 8u}) {
      auto layer = make_layer<float>("k", cfg);
      layer->build(xs.unbatched());
      ThreadPool pool(threads);
      RunContext ctx;
      ctx.pool = &pool;
      const Tensor y = layer->forward(x, ctx);
      const Tensor dy = support::random_tensor(y.shape(), 2, "threads-dy");
      outs.push_back(y);
      outs.push_back(layer->backward(x, y, dy, ctx));
      for (const auto& p : layer->params()) outs.push_back(p.grad);
    }
    const std::size_t per = outs.size() / 3;
    for (std::size_t i = 0; i < per; ++i) {
      EXPECT_TRUE(outs[i].bit_equal(outs[per + i])) << to_string(cfg.kind) << " tensor " << i;
      EXPECT_TRUE(outs[i].bit_equal(outs[2 * per + i])) << to_string(cfg.kind) << " tensor " << i;
    }
  }
}

TEST(WindowGeometry, ValidAndSame) {
  EXPECT_EQ(window_geometry(178, 2, 2, Padding::valid).out, 89u);
  EXPECT_EQ(window_geometry(7, 3, 1, Padding::valid).out, 5u);
  EXPECT_EQ(window_geometry(7, 3, 2, Padding::same).out, 4u);
  EXPECT_EQ(window_geometry(7, 3, 2, Padding::same).pad_before, 1u);
  // even total padding split, odd cell to the end
  EXPECT_EQ(window_geometry(6, 3, 2, Padding::same).pad_before, 0u);
  EXPECT_EQ(window_geometry(6, 4, 1, Padding::same).pad_before, 1u);
  EXPECT_THROW(window_geometry(2, 3, 1, Padding::valid), Error);
  EXPECT_EQ(window_geometry(2, 3, 1, Padding::same).out, 2u);
}

TEST(Conv2D, ShapeErrorNamesLayerAndInput) {
  auto layer = make_layer<float>("conv9", LayerConfig::conv2d(4, 3, 1, Padding::valid, true, 1));
  try {
    layer->build(Shape{2, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("conv9"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2x2x3]"), std::string::npos);
  }
}

TEST(Conv2D, ParamCountAndInitStream) {
  auto layer = make_layer<float>("conv1", LayerConfig::conv2d(32, 3, 1, Padding::valid, true, 1001));
  layer->build(Shape{180, 180, 3});
  std::size_t n = 0;
  for (const auto& p : layer->params()) n += p.value.size();
  EXPECT_EQ(n, 3u * 3 * 3 * 32 + 32);
  const Tensor expect =
      glorot_uniform({InitKind::glorot_uniform, 1001, 27, 288}, Shape{3, 3, 3, 32}, "conv1/kernel");
  EXPECT_TRUE(layer->find("kernel")->value.bit_equal(expect));
  for (float b : layer->find("bias")->value.data()) EXPECT_EQ(b, 0.0f);
}

TEST(MaxPool, TieKeepsFirstCellAndPaddingNeverWins) {
  auto layer = make_layer<float>("p", LayerConfig::maxpool2d(2, 2, Padding::valid));
  layer->build(Shape{2, 2, 1});
  const Tensor x(Shape{1, 2, 2, 1}, {5, 5, 5, 5});
  RunContext ctx;
  const Tensor y = layer->forward(x, ctx);
  const Tensor dx = layer->backward(x, y, Tensor(Shape{1, 1, 1, 1}, {1}), ctx);
  EXPECT_EQ(dx[0], 1.0f);
  EXPECT_EQ(dx[1] + dx[2] + dx[3], 0.0f);

  auto same = make_layer<float>("q", LayerConfig::maxpool2d(3, 2, Padding::same));
  same->build(Shape{2, 2, 1});
  const Tensor neg(Shape{1, 2, 2, 1}, {-4, -3, -2, -1});
  const Tensor out = same->forward(neg, ctx);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(out[0], -1.0f);
}

TEST(Dropout, InferIsIdentityTrainIsInverted) {
  auto layer = make_layer<float>("drop", LayerConfig::dropout(0.5f, 7001));
  layer->build(Shape{1000});
  const Tensor x(Shape{4, 1000}, 1.0f);
  RunContext infer;
  EXPECT_TRUE(layer->forward(x, infer).bit_equal(x));
  RunContext train;
  train.mode = Mode::train;
  train.epoch = 3;
  train.batch = 2;
  const Tensor y = layer->forward(x, train);
  std::size_t kept = 0;
  for (float v : y.data()) {
    ASSERT_TRUE(v == 0.0f || v == 2.0f);
    kept += v != 0.0f;
  }
  EXPECT_NEAR(static_cast<double>(kept) / 4000.0, 0.5, 0.03);
  EXPECT_TRUE(layer->forward(x, train).bit_equal(y));
  train.batch = 3;
  EXPECT_FALSE(layer->forward(x, train).bit_equal(y));
  EXPECT_THROW(LayerConfig::dropout(1.0f, 1), Error);
}

TEST(BatchNorm, TrainUsesBatchStatsAndUpdatesMovingAverages) {
  auto layer = make_layer<float>("bn", LayerConfig::batchnorm(1e-3f, 0.9f));
  layer->build(Shape{1, 1, 2});
  const Tensor x(Shape{4, 1, 1, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  RunContext train;
  train.mode = Mode::train;
  const Tensor y = layer->forward(x, train);
  // channel 0: mean 2.5, biased var 1.25
  const float inv = 1.0f / std::sqrt(1.25f + 1e-3f);
  EXPECT_FLOAT_EQ(y[0], (1.0f - 2.5f) * inv);
  EXPECT_FLOAT_EQ(layer->find("moving_mean")->value[0], 0.1f * 2.5f);
  EXPECT_FLOAT_EQ(layer->find("moving_variance")->value[0], 0.9f + 0.1f * 1.25f);
  RunContext infer;
  const Tensor z = layer->forward(x, infer);
  const float mm = 0.25f, mv = 0.9f + 0.125f;
  EXPECT_FLOAT_EQ(z[0], (1.0f - mm) / std::sqrt(mv + 1e-3f));
  EXPECT_EQ(layer->params().size(), 2u);
  EXPECT_EQ(layer->buffers().size(), 2u);
}

TEST(Augment, IdentityInInferenceDeterministicInTraining) {
  const Shape s{2, 8, 8, 3};
  const Tensor x = support::random_tensor(s, 3, "aug", 0.0, 255.0);
  for (const auto& cfg : {LayerConfig::random_flip_h(1), LayerConfig::random_rotation(0.1f, 1),
                          LayerConfig::random_zoom(0.2f, 1)}) {
    auto layer = make_layer<float>("aug", cfg);
    layer->build(s.unbatched());
    RunContext infer;
    EXPECT_TRUE(layer->forward(x, infer).bit_equal(x)) << to_string(cfg.kind);
    RunContext train;
    train.mode = Mode::train;
    train.epoch = 1;
    const Tensor a = layer->forward(x, train);
    EXPECT_TRUE(layer->forward(x, train).bit_equal(a)) << to_string(cfg.kind);
  }
}

TEST(Augment, FlipFollowsDraw) {
  const auto cfg = LayerConfig::random_flip_h(1);
  auto layer = make_layer<float>("flip", cfg);
  const Shape s{16, 1, 4, 1};
  layer->build(s.unbatched());
  Tensor x(s);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i % 4);
  RunContext train;
  train.mode = Mode::train;
  train.epoch = 2;
  train.batch = 5;
  const Tensor y = layer->forward(x, train);
  int flips = 0;
  for (std::size_t n = 0; n < 16; ++n) {
    const bool flip = augment_draw("flip", cfg, 2, 5, n).flip;
    flips += flip;
    for (std::size_t w = 0; w < 4; ++w) {
      EXPECT_EQ(y[n * 4 + w], static_cast<float>(flip ? 3 - w : w));
    }
  }
  EXPECT_GT(flips, 0);
  EXPECT_LT(flips, 16);
}

TEST(Augment, DrawRanges) {
  const auto rot = LayerConfig::random_rotation(0.1f, 1);
  const auto zoom = LayerConfig::random_zoom(0.2f, 1);
  const double pi = 3.14159265358979323846;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto r = augment_draw("r", rot, 1, 0, i);
    EXPECT_LE(std::fabs(r.angle), 0.1 * 2 * pi);
    const auto z = augment_draw("z", zoom, 1, 0, i);
    EXPECT_GE(z.zoom, 0.8);
    EXPECT_LE(z.zoom, 1.2);
  }
}

TEST(Layer, BackwardBeforeForwardAndBadGradShapeThrow) {
  auto layer = make_layer<float>("r", LayerConfig::relu());
  layer->build(Shape{3});
  const Tensor x(Shape{2, 3});
  RunContext ctx;
  EXPECT_THROW(layer->backward(x, x, x, ctx), Error);
  const Tensor y = layer->forward(x, ctx);
  EXPECT_THROW(layer->backward(x, y, Tensor(Shape{3, 2}), ctx), Error);
  EXPECT_THROW(layer->forward(Tensor(Shape{2, 4}), ctx), Error);
}

TEST(Layer, ResidualAddNeedsEqualShapes) {
  auto layer = make_layer<float>("add", LayerConfig::residual_add());
  const Shape a{4, 4, 8}, b{4, 4, 16};
  const Shape both[] = {a, b};
  EXPECT_THROW(layer->build(both), Error);
}

TEST(Layer, DescribeIsStable) {
  EXPECT_EQ(LayerConfig::conv2d(32, 3, 1, Padding::valid, true, 1001).describe(),
            LayerConfig::conv2d(32, 3, 1, Padding::valid, true, 1001).describe());
  EXPECT_NE(LayerConfig::conv2d(32, 3, 1, Padding::valid, true, 1001).describe(),
            LayerConfig::conv2d(32, 3, 1, Padding::same, true, 1001).describe());
}
