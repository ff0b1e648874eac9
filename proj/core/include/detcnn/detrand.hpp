#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "detcnn/tensor.hpp"

namespace detcnn {

/// Counter-based random stream.
///
/// The i-th draw is a pure function of (seed, label, i):
///
///   key   = fmix64(seed + kGamma) ^ fnv1a64(label)
///   draw  = fmix64(key + (i + 1) * kGamma)
///
/// where fmix64 is the SplitMix64 finalizer and kGamma = 0x9e3779b97f4a7c15.
/// Streams with different labels never interact, and a stream can be resumed
/// anywhere by restoring its counter.
class DetRng {
 public:
  DetRng(std::uint64_t seed, std::string label, std::uint64_t counter = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Draw at an absolute position without touching the counter.
  std::uint64_t at(std::uint64_t counter) const noexcept;

  std::uint64_t next_u64() noexcept { return at(counter_++); }
  /// Top 24 bits scaled to [0, 1); every value is an exact float.
  float next_float() noexcept { return to_unit_float(next_u64()); }
  /// Uniform integer in [0, bound) by 128-bit multiply-high.
  std::uint64_t next_below(std::uint64_t bound) noexcept;

  /// Child stream "<label>/<suffix>" with the same seed, counter at 0.
  DetRng split(const std::string& suffix) const;

  static float to_unit_float(std::uint64_t bits) noexcept {
    return static_cast<float>(bits >> 40) * 0x1.0p-24f;
  }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::uint64_t counter_;
  std::uint64_t key_;
};

std::uint64_t fmix64(std::uint64_t z) noexcept;
std::uint64_t fnv1a64(const std::string& s) noexcept;

/// n draws in [0,1); advances the counter by n.
Tensor uniform(DetRng& rng, std::size_t n);

enum class InitKind { glorot_uniform };

struct InitSpec {
  InitKind kind = InitKind::glorot_uniform;
  std::uint64_t seed = 0;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

/// sqrt(6 / (fan_in + fan_out)).
float glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// Uniform [-L, L) weights drawn from stream (spec.seed, "init/" + label).
Tensor glorot_uniform(const InitSpec& spec, const Shape& shape, const std::string& label);

/// Fisher-Yates shuffle of 0..n-1: for i = n-1 .. 1, swap(i, next_below(i+1)).
std::vector<std::size_t> shuffle_permutation(DetRng& rng, std::size_t n);

/// Seeds used by the model builders. Defaults follow the reference listings:
/// global 1001, kernels 1, pointwise kernels 2, dropout 7001, augmentation 1.
struct SeedSet {
  std::uint64_t global = 1001;
  std::uint64_t kernel = 1;
  std::uint64_t pointwise = 2;
  std::uint64_t dropout = 7001;
  std::uint64_t augmentation = 1;

  friend bool operator==(const SeedSet&, const SeedSet&) = default;
};

}  // namespace detcnn
