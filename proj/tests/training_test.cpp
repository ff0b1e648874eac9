#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "detcnn/error.hpp"
#include "detcnn/imageio.hpp"
#include "detcnn/detrand.hpp"
#include "detcnn/training.hpp"
#include "detcnn/weights_io.hpp"

using namespace detcnn;

namespace {

ModelGraph small_net(std::uint64_t seed = 1001) {
  ModelGraph g(Shape{16, 16, 3});
  g.add("rescale", LayerConfig::rescale(1.0f / 255.0f), {kInputNode});
  g.add("conv", LayerConfig::conv2d(4, 3, 1, Padding::valid, true, seed), {"rescale"});
  g.add("relu", LayerConfig::relu(), {"conv"});
  g.add("pool", LayerConfig::maxpool2d(2, 2, Padding::valid), {"relu"});
  g.add("flatten", LayerConfig::flatten(), {"pool"});
  g.add("dropout", LayerConfig::dropout(0.25f, 7001), {"flatten"});
  g.add("dense", LayerConfig::dense(1, seed), {"dropout"});
  g.add("sigmoid", LayerConfig::sigmoid(), {"dense"});
  g.set_output("sigmoid");
  return g;
}

struct RunOut {
  std::vector<EpochRecord> records;
  Digest fp;
  std::vector<NamedTensor> opt;
};

RunOut run(std::size_t threads, std::size_t epochs = 3, std::uint64_t seed = 1001, float lr = 1e-3f) {
  auto g = small_net(seed);
  const Dataset tr = synth_blobs(40, 16, 1001, "synth/train");
  const Dataset va = synth_blobs(20, 16, 1001, "synth/val");
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.learning_rate = lr;
  cfg.threads = threads;
  cfg.seed = seed;
  RmsProp opt(cfg);
  RunOut out;
  out.records = train(g, tr, va, cfg, opt);
  out.fp = fingerprint(g);
  out.opt = opt.state(g);
  return out;
}

bool same_metrics(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i].train_loss, &b[i].train_loss, sizeof(float)) != 0) return false;
    if (std::memcmp(&a[i].val_loss, &b[i].val_loss, sizeof(float)) != 0) return false;
    if (a[i].train_acc != b[i].train_acc || a[i].val_acc != b[i].val_acc) return false;
  }
  return true;
}

}  // namespace

TEST(Bce, MatchesDoubleOracle) {
  const Tensor p(Shape{4, 1}, {0.5f, 0.9f, 0.2f, 0.999f});
  const Tensor y(Shape{4, 1}, {1, 0, 0, 1});
  double ref = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double pi = p[i], yi = y[i];
    ref += -(yi * std::log(pi) + (1 - yi) * std::log(1 - pi));
  }
  EXPECT_NEAR(bce_loss(p, y), ref / 4, 1e-6);
  EXPECT_NEAR(bce_loss(Tensor(Shape{1}, {0.5f}), Tensor(Shape{1}, {1.0f})), std::log(2.0), 1e-7);
}

TEST(Bce, ClampKeepsLossFinite) {
  const float l = bce_loss(Tensor(Shape{2}, {0.0f, 1.0f}), Tensor(Shape{2}, {1.0f, 0.0f}));
  EXPECT_TRUE(std::isfinite(l));
  // the clamp bounds are float: 1e-7f below, 1 - 1e-7f (which rounds to 1 - 2^-23) above
  const double lo = 1e-7f, hi = 1.0f - 1e-7f;
  EXPECT_NEAR(l, -(std::log(lo) + std::log(1.0 - hi)) / 2.0, 1e-4);
  EXPECT_EQ(bce_loss(Tensor(Shape{2}, {1.0f, 0.0f}), Tensor(Shape{2}, {1.0f, 0.0f})) < 1e-6f, true);
}

TEST(Bce, GradientsMatchFiniteDifferenceAndLogitForm) {
  const Tensor p(Shape{3}, {0.3f, 0.6f, 0.8f});
  const Tensor y(Shape{3}, {1, 0, 1});
  const Tensor g = bce_grad(p, y);
  for (std::size_t i = 0; i < 3; ++i) {
    const double pi = p[i], yi = y[i], h = 1e-6;
    auto f = [&](double q) { return -(yi * std::log(q) + (1 - yi) * std::log(1 - q)) / 3.0; };
    EXPECT_NEAR(g[i], (f(pi + h) - f(pi - h)) / (2 * h), 1e-4);
  }
  const Tensor gl = bce_logit_grad(p, y);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(gl[i], (p[i] - y[i]) / 3.0f);
  // the clamp zeroes the probability-space gradient but not the logit one
  EXPECT_EQ(bce_grad(Tensor(Shape{1}, {1.0f}), Tensor(Shape{1}, {0.0f}))[0], 0.0f);
  EXPECT_EQ(bce_logit_grad(Tensor(Shape{1}, {1.0f}), Tensor(Shape{1}, {0.0f}))[0], 1.0f);
  EXPECT_THROW(bce_loss(Tensor(Shape{2}), Tensor(Shape{3})), Error);
}

TEST(Accuracy, ThresholdIsInclusive) {
  const Tensor p(Shape{4}, {0.5f, 0.49f, 0.51f, 0.1f});
  const Tensor y(Shape{4}, {1, 0, 0, 0});
  EXPECT_FLOAT_EQ(accuracy(p, y), 0.75f);
}

TEST(RmsProp, HandComputedSteps) {
  TrainConfig cfg;
  Tensor w(Shape{2}, {1.0f, -1.0f});
  Tensor ms(Shape{2});
  rmsprop_step(w, Tensor(Shape{2}, {1.0f, 0.0f}), ms, cfg);
  EXPECT_FLOAT_EQ(ms[0], 0.1f);
  EXPECT_FLOAT_EQ(w[0], 1.0f - 1e-3f / (std::sqrt(0.1f) + 1e-7f));
  EXPECT_EQ(w[1], -1.0f);
  rmsprop_step(w, Tensor(Shape{2}, {-2.0f, 0.0f}), ms, cfg);
  EXPECT_FLOAT_EQ(ms[0], 0.9f * 0.1f + 0.1f * 4.0f);
  EXPECT_THROW(rmsprop_step(w, Tensor(Shape{3}), ms, cfg), Error);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.rho = 1.0f;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.learning_rate = 0.0f;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Training, RepeatRunsAreBitIdentical) {
  const auto a = run(1);
  const auto b = run(1);
  EXPECT_EQ(a.fp, b.fp);
  EXPECT_TRUE(same_metrics(a.records, b.records));
  ASSERT_EQ(a.opt.size(), b.opt.size());
  for (std::size_t i = 0; i < a.opt.size(); ++i) EXPECT_TRUE(a.opt[i].value.bit_equal(b.opt[i].value));
}

TEST(Training, ThreadCountDoesNotChangeResults) {
  const auto a = run(1);
  const auto b = run(4);
  EXPECT_EQ(a.fp, b.fp);
  EXPECT_TRUE(same_metrics(a.records, b.records));
}

TEST(Training, SeedChangesResults) {
  EXPECT_NE(run(1, 1, 1001).fp, run(1, 1, 1002).fp);
}

TEST(Training, MatchesManualLoopIncludingPartialBatch) {
  const Dataset tr = synth_blobs(10, 16, 5, "synth/train");
  const Dataset va = synth_blobs(4, 16, 5, "synth/val");
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  auto g = small_net();
  RmsProp opt(cfg);
  (void)train(g, tr, va, cfg, opt);

  // the same procedure spelled out: 10 items in batches of 4, 4, 2
  auto m = small_net();
  RmsProp mopt(cfg);
  for (std::uint64_t e = 1; e <= 2; ++e) {
    DetRng rng(cfg.seed, "shuffle/" + std::to_string(e));
    const auto perm = shuffle_permutation(rng, 10);
    std::uint64_t b = 0;
    for (std::size_t start = 0; start < 10; start += 4, ++b) {
      Tensor x, y;
      make_batch(tr, std::span(perm).subspan(start, std::min<std::size_t>(4, 10 - start)), x, y);
      RunContext ctx;
      ctx.mode = Mode::train;
      ctx.epoch = e;
      ctx.batch = b;
      ctx.input_grads = false;
      ModelGraph::Cache cache;
      const Tensor p = m.forward(x, ctx, &cache);
      m.backward(cache, bce_logit_grad(p, y), ctx, "", "dense");
      mopt.step(m);
    }
  }
  EXPECT_EQ(fingerprint(g), fingerprint(m));
}

TEST(Training, LearnsSeparableBlobs) {
  const auto r = run(1, 10, 1001, 3e-3f);
  EXPECT_LT(r.records.back().train_loss, r.records.front().train_loss);
  EXPECT_GE(r.records.back().val_acc, 0.9f);
}

TEST(Training, NonFiniteLossAborts) {
  auto g = small_net();
  for (auto& ref : g.trainables()) {
    std::fill(ref.param->value.data().begin(), ref.param->value.data().end(), std::nanf(""));
  }
  const Dataset ds = synth_blobs(8, 16, 1);
  TrainConfig cfg;
  cfg.batch_size = 4;
  RmsProp opt(cfg);
  try {
    train(g, ds, ds, cfg, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_EQ(std::string(e.what()), "non-finite loss at epoch 1, batch 0");
  }
}

TEST(Training, ZeroModelEvaluatesToChance) {
  auto g = small_net();
  for (auto& ref : g.trainables()) std::fill(ref.param->value.data().begin(), ref.param->value.data().end(), 0.0f);
  const Dataset ds = synth_blobs(10, 16, 3);
  const EvalResult r = evaluate(g, ds, 4);
  EXPECT_NEAR(r.loss, std::log(2.0f), 1e-6);
  EXPECT_FLOAT_EQ(r.acc, 0.5f);
}

TEST(RmsProp, StateRoundTripAndMismatch) {
  auto g = small_net();
  TrainConfig cfg;
  RmsProp opt(cfg);
  const auto st = opt.state(g);
  ASSERT_EQ(st.size(), g.trainables().size());
  EXPECT_EQ(st.front().name, "conv/bias/rms");
  RmsProp other(cfg);
  EXPECT_NO_THROW(other.load_state(g, st));
  auto wrong = st;
  wrong.front().name = "x/rms";
  EXPECT_THROW(other.load_state(g, wrong), Error);
}

TEST(MakeBatch, StacksImagesAndLabels) {
  const Dataset ds = synth_blobs(6, 8, 2);
  Tensor x, y;
  const std::size_t idx[] = {5, 0, 3};
  make_batch(ds, idx, x, y);
  EXPECT_EQ(x.shape(), (Shape{3, 8, 8, 3}));
  EXPECT_EQ(y[0], 1.0f);
  EXPECT_EQ(y[1], 0.0f);
  EXPECT_EQ(x[8 * 8 * 3], ds.items[0].image[0]);
}
