#include "detcnn/detrand.hpp"

#include <cmath>
#include <numeric>

#include "detcnn/error.hpp"

namespace detcnn {

namespace {
constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;
}

std::uint64_t fmix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(const std::string& s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

DetRng::DetRng(std::uint64_t seed, std::string label, std::uint64_t counter)
    : seed_(seed), label_(std::move(label)), counter_(counter), key_(fmix64(seed + kGamma) ^ fnv1a64(label_)) {}

std::uint64_t DetRng::at(std::uint64_t counter) const noexcept { return fmix64(key_ + (counter + 1) * kGamma); }

std::uint64_t DetRng::next_below(std::uint64_t bound) noexcept {
  const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
  return static_cast<std::uint64_t>(m >> 64);
}

DetRng DetRng::split(const std::string& suffix) const { return DetRng(seed_, label_ + "/" + suffix); }

Tensor uniform(DetRng& rng, std::size_t n) {
  if (n == 0) throw config_error("uniform: n must be >= 1");
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.next_float();
  return out;
}

float glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0) throw config_error("glorot_uniform: fans must be >= 1");
  return static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

Tensor glorot_uniform(const InitSpec& spec, const Shape& shape, const std::string& label) {
  const float limit = glorot_limit(spec.fan_in, spec.fan_out);
  DetRng rng(spec.seed, "init/" + label);
  Tensor out(shape);
  for (float& v : out.data()) v = (2.0f * rng.next_float() - 1.0f) * limit;
  return out;
}

std::vector<std::size_t> shuffle_permutation(DetRng& rng, std::size_t n) {
  if (n == 0) throw config_error("shuffle_permutation: n must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.next_below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

}  // namespace detcnn
