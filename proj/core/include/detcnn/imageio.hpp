#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "detcnn/digest.hpp"
#include "detcnn/error.hpp"
#include "detcnn/tensor.hpp"

namespace detcnn {

class ThreadPool;

enum class PpmFault { malformed_header, truncated, bad_maxval };

class PpmError : public Error {
 public:
  PpmError(PpmFault fault, const std::string& what) : Error(ErrorKind::data, what), fault_(fault) {}
  PpmFault fault() const noexcept { return fault_; }

 private:
  PpmFault fault_;
};

/// Binary P6 with maxval 255; '#' comments allowed between header tokens.
/// Returns [H,W,3] floats in [0,255].
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
/// P6 bytes of an [H,W,3] tensor; values are rounded (floor(v + 0.5)) and
/// clamped to [0,255].
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

struct DatasetItem {
  std::string source;  // relative path, or "synth:<stream>/<index>"
  Tensor image;        // [pdim,pdim,3], [0,255]
  int label = 0;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::vector<std::string> class_names;
  std::size_t pdim = 0;
  Digest digest{};

  std::size_t size() const noexcept { return items.size(); }
  bool balanced() const;
};

/// SHA-256 over each item's float32 pixel bytes followed by its label byte,
/// in item order. Sources do not enter the digest.
Digest dataset_digest(const std::vector<DatasetItem>& items);

/// Reads `<dir>/<class>/*.ppm` for exactly two class directories. Classes are
/// the sorted directory names (label = position); items are ordered by
/// relative path. Every file must decode.
Dataset load_dataset(const std::filesystem::path& dir, std::size_t pdim, ThreadPool* pool = nullptr);

/// n images (n even, labels alternate 0,1). Class 0 is a dark background with
/// a bright disc, class 1 a bright background with a dark disc, plus uniform
/// noise; the classes are separable by mean intensity at 127.5.
/// Item i draws from stream (seed, "<stream>/<i>").
Dataset synth_blobs(std::size_t n, std::size_t pdim, std::uint64_t seed, const std::string& stream = "synth");

}  // namespace detcnn
