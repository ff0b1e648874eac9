#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "detcnn/detrand.hpp"
#include "detcnn/error.hpp"

using namespace detcnn;

namespace {

// Independent restatement of the stream definition.
std::uint64_t oracle_mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

std::uint64_t oracle_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return h;
}

std::uint64_t oracle_draw(std::uint64_t seed, const std::string& label, std::uint64_t i) {
  const std::uint64_t gamma = 0x9e3779b97f4a7c15ull;
  const std::uint64_t key = oracle_mix(seed + gamma) ^ oracle_fnv(label);
  return oracle_mix(key + (i + 1) * gamma);
}

}  // namespace

TEST(DetRng, MatchesStreamDefinition) {
  for (std::uint64_t seed : {0ull, 1ull, 1001ull, 0xffffffffffffffffull}) {
    for (const char* label : {"", "init/conv1/kernel", "shuffle/1"}) {
      DetRng rng(seed, label);
      for (std::uint64_t i = 0; i < 50; ++i) ASSERT_EQ(rng.next_u64(), oracle_draw(seed, label, i));
    }
  }
}

TEST(DetRng, KnownMixerVectors) {
  // SplitMix64 seeded with 0 yields fmix64(gamma) first
  EXPECT_EQ(fmix64(0x9e3779b97f4a7c15ull), 0xe220a8397b1dcdafull);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(DetRng, CounterIsResumable) {
  DetRng a(7, "stream");
  for (int i = 0; i < 17; ++i) (void)a.next_u64();
  DetRng b(7, "stream", 17);
  EXPECT_EQ(a.counter(), 17u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_EQ(a.at(3), DetRng(7, "stream").at(3));
}

TEST(DetRng, LabelsAndSeedsSeparateStreams) {
  DetRng a(1, "x"), b(1, "y"), c(2, "x");
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    same_ab += va == b.next_u64();
    same_ac += va == c.next_u64();
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
  EXPECT_EQ(DetRng(3, "p").split("q").label(), "p/q");
  EXPECT_EQ(DetRng(3, "p").split("q").at(0), DetRng(3, "p/q").at(0));
}

TEST(DetRng, FloatsAreExactTop24Bits) {
  DetRng rng(42, "floats");
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t raw = rng.at(static_cast<std::uint64_t>(i));
    const float f = DetRng::to_unit_float(raw);
    ASSERT_GE(f, 0.0f);
    ASSERT_LT(f, 1.0f);
    ASSERT_EQ(static_cast<std::uint64_t>(std::ldexp(f, 24)), raw >> 40);
  }
  EXPECT_EQ(DetRng::to_unit_float(~0ull), 1.0f - 0x1.0p-24f);
}

TEST(DetRng, UniformMeanAndBounds) {
  DetRng rng(5, "uniform");
  const Tensor u = uniform(rng, 100000);
  EXPECT_EQ(rng.counter(), 100000u);
  double sum = 0.0;
  for (float v : u.data()) sum += v;
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
  EXPECT_THROW(uniform(rng, 0), Error);
}

TEST(DetRng, NextBelowInRangeAndCoversAll) {
  DetRng rng(6, "below");
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.next_below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Shuffle, IsPermutationAndDeterministic) {
  DetRng a(1001, "shuffle/1"), b(1001, "shuffle/1"), c(1001, "shuffle/2");
  const auto pa = shuffle_permutation(a, 257);
  const auto pb = shuffle_permutation(b, 257);
  const auto pc = shuffle_permutation(c, 257);
  EXPECT_EQ(pa, pb);
  EXPECT_NE(pa, pc);
  auto sorted = pa;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(257);
  std::iota(iota.begin(), iota.end(), 0u);
  EXPECT_EQ(sorted, iota);
  DetRng one(1, "one");
  EXPECT_EQ(shuffle_permutation(one, 1), std::vector<std::size_t>{0});
}

TEST(Shuffle, FisherYatesOracle) {
  DetRng a(77, "fy"), draws(77, "fy");
  const auto p = shuffle_permutation(a, 10);
  std::vector<std::size_t> q(10);
  std::iota(q.begin(), q.end(), 0u);
  for (std::size_t i = 9; i > 0; --i) {
    const unsigned __int128 m = static_cast<unsigned __int128>(draws.next_u64()) * (i + 1);
    std::swap(q[i], q[static_cast<std::size_t>(m >> 64)]);
  }
  EXPECT_EQ(p, q);
}

TEST(Glorot, LimitAndBoundsAndStream) {
  EXPECT_FLOAT_EQ(glorot_limit(10, 2), std::sqrt(6.0f / 12.0f));
  EXPECT_THROW(glorot_limit(0, 3), Error);
  const InitSpec spec{InitKind::glorot_uniform, 1, 27, 288};
  const Tensor w = glorot_uniform(spec, Shape{3, 3, 3, 32}, "conv1/kernel");
  const float lim = glorot_limit(27, 288);
  DetRng rng(1, "init/conv1/kernel");
  for (std::size_t i = 0; i < w.size(); ++i) {
    ASSERT_GE(w[i], -lim);
    ASSERT_LT(w[i], lim);
    ASSERT_EQ(w[i], (2.0f * rng.next_float() - 1.0f) * lim);
  }
}

TEST(SeedSet, Defaults) {
  const SeedSet s;
  EXPECT_EQ(s.global, 1001u);
  EXPECT_EQ(s.kernel, 1u);
  EXPECT_EQ(s.pointwise, 2u);
  EXPECT_EQ(s.dropout, 7001u);
  EXPECT_EQ(s.augmentation, 1u);
}
