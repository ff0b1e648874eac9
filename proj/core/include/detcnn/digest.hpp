#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace detcnn {

using Digest = std::array<std::uint8_t, 32>;

/// Incremental SHA-256. Used for weight-file trailers, run fingerprints and
/// dataset digests, so all three are the same algorithm.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;

  Sha256& update(std::span<const std::uint8_t> bytes);
  Sha256& update(std::string_view text);
  /// Little-endian IEEE-754 bytes of each value.
  Sha256& update_floats(std::span<const float> values);
  Digest finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& d);

}  // namespace detcnn
