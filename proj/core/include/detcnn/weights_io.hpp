#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "detcnn/digest.hpp"
#include "detcnn/error.hpp"
#include "detcnn/graph.hpp"

namespace detcnn {

/// DCW1 tensor file, all integers little-endian:
///
///   "DCW1"  u32 version(=1)  u32 count
///   count x { u32 name_len, name bytes, u8 dtype(1=f32), u8 flags(bit0=trainable),
///             u32 rank, rank x u32 dim, numel x f32 }
///   32-byte SHA-256 of every preceding byte
inline constexpr std::uint32_t kWeightsVersion = 1;

enum class WeightsFault { bad_magic, version, truncated, checksum, malformed, shape, name };

class WeightsError : public Error {
 public:
  WeightsError(WeightsFault fault, const std::string& what) : Error(ErrorKind::data, what), fault_(fault) {}
  WeightsFault fault() const noexcept { return fault_; }

 private:
  WeightsFault fault_;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
};

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors);
/// Validates structure first, then the checksum.
std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes);

/// Trainables then buffers in registry order.
std::vector<NamedTensor> snapshot(ModelGraph& g);
/// Copies values into the graph; names, order and shapes must match exactly.
void restore(ModelGraph& g, std::span<const NamedTensor> tensors);

std::vector<std::uint8_t> serialize_weights(ModelGraph& g);
void save_weights(ModelGraph& g, const std::filesystem::path& path);
void load_weights(ModelGraph& g, const std::filesystem::path& path);

/// SHA-256 trailer of the canonical weight serialization.
Digest fingerprint(ModelGraph& g);
std::string fingerprint_hex(ModelGraph& g);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace detcnn
