#include "detcnn/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "detcnn/detrand.hpp"
#include "detcnn/parallel.hpp"
#include "detcnn/tensor_ops.hpp"
#include "detcnn/weights_io.hpp"

namespace detcnn {

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> b) : b_(b) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      const char c = static_cast<char>(b_[pos_]);
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size()) throw PpmError(PpmFault::truncated, std::string("PPM header truncated before ") + what);
    std::size_t v = 0, digits = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) throw PpmError(PpmFault::malformed_header, std::string("PPM ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw PpmError(PpmFault::malformed_header, std::string("PPM header: expected ") + what);
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw PpmError(PpmFault::truncated, "PPM data truncated before magic");
  if (bytes[0] != 'P' || bytes[1] != '6') throw PpmError(PpmFault::malformed_header, "not a binary PPM (P6)");
  HeaderParser p(bytes);
  p.pos() = 2;
  const std::size_t w = p.number("width");
  const std::size_t h = p.number("height");
  const std::size_t maxval = p.number("maxval");
  if (w == 0 || h == 0) throw PpmError(PpmFault::malformed_header, "PPM has zero width or height");
  if (maxval != 255) throw PpmError(PpmFault::bad_maxval, "PPM maxval " + std::to_string(maxval) + " unsupported");
  std::size_t& pos = p.pos();
  if (pos >= bytes.size()) throw PpmError(PpmFault::truncated, "PPM truncated after header");
  const char sep = static_cast<char>(bytes[pos]);
  if (sep != ' ' && sep != '\t' && sep != '\n' && sep != '\r') {
    throw PpmError(PpmFault::malformed_header, "PPM header must end with one whitespace byte");
  }
  ++pos;
  const std::size_t need = w * h * 3;
  if (bytes.size() - pos < need) {
    throw PpmError(PpmFault::truncated, "PPM payload truncated: need " + std::to_string(need) + " bytes, have " +
                                            std::to_string(bytes.size() - pos));
  }
  Tensor img(Shape{h, w, 3});
  for (std::size_t i = 0; i < need; ++i) img[i] = static_cast<float>(bytes[pos + i]);
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.shape().rank() != 3 || image.shape()[2] != 3) {
    throw config_error("encode_ppm expects [H,W,3], got " + image.shape().str());
  }
  const std::string header =
      "P6\n" + std::to_string(image.shape()[1]) + " " + std::to_string(image.shape()[0]) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (float v : image.data()) {
    const float r = std::floor(v + 0.5f);
    out.push_back(static_cast<std::uint8_t>(std::clamp(std::isnan(r) ? 0.0f : r, 0.0f, 255.0f)));
  }
  return out;
}

Tensor read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const PpmError& e) {
    throw PpmError(e.fault(), path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) { write_file(path, encode_ppm(image)); }

bool Dataset::balanced() const {
  std::size_t ones = 0;
  for (const auto& it : items) ones += it.label == 1;
  return 2 * ones == items.size();
}

Digest dataset_digest(const std::vector<DatasetItem>& items) {
  Sha256 h;
  for (const auto& it : items) {
    h.update_floats(it.image.data());
    const std::uint8_t label = static_cast<std::uint8_t>(it.label);
    h.update(std::span(&label, 1));
  }
  return h.finish();
}

Dataset load_dataset(const std::filesystem::path& dir, std::size_t pdim, ThreadPool* pool) {
  namespace fs = std::filesystem;
  if (pdim == 0) throw config_error("pdim must be positive");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw data_error("dataset directory '" + dir.string() + "' does not exist");
  Dataset ds;
  ds.pdim = pdim;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) ds.class_names.push_back(e.path().filename().string());
  }
  std::sort(ds.class_names.begin(), ds.class_names.end());
  if (ds.class_names.size() != 2) {
    throw data_error("dataset directory '" + dir.string() + "' must hold exactly two class directories, found " +
                     std::to_string(ds.class_names.size()));
  }
  std::vector<std::pair<std::string, int>> files;
  for (int label = 0; label < 2; ++label) {
    const fs::path cdir = dir / ds.class_names[label];
    std::size_t found = 0;
    for (const auto& e : fs::directory_iterator(cdir)) {
      if (e.is_regular_file() && e.path().extension() == ".ppm") {
        files.emplace_back(ds.class_names[label] + "/" + e.path().filename().string(), label);
        ++found;
      }
    }
    if (found == 0) throw data_error("class directory '" + cdir.string() + "' holds no .ppm files");
  }
  std::sort(files.begin(), files.end());
  ds.items.resize(files.size());
  parallel_for(pool, files.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Tensor raw = read_ppm(dir / files[i].first);
      ds.items[i] = {files[i].first, bilinear_resize(raw, pdim, pdim), files[i].second};
    }
  });
  ds.digest = dataset_digest(ds.items);
  return ds;
}

Dataset synth_blobs(std::size_t n, std::size_t pdim, std::uint64_t seed, const std::string& stream) {
  if (n == 0 || n % 2 != 0) throw config_error("synth_blobs needs a positive even count, got " + std::to_string(n));
  if (pdim < 4) throw config_error("synth_blobs needs pdim >= 4");
  Dataset ds;
  ds.pdim = pdim;
  ds.class_names = {"dark", "bright"};
  ds.items.resize(n);
  const double size = static_cast<double>(pdim);
  for (std::size_t i = 0; i < n; ++i) {
    DetRng rng(seed, stream + "/" + std::to_string(i));
    const int label = static_cast<int>(i % 2);
    const double radius = (0.1 + 0.15 * rng.next_float()) * size;
    const double lo = radius, span = size - 1.0 - 2.0 * radius;
    const double cy = lo + span * rng.next_float();
    const double cx = lo + span * rng.next_float();
    const float dark = 30.0f + 20.0f * rng.next_float();
    const float bright = 200.0f + 40.0f * rng.next_float();
    const float bg = label == 0 ? dark : bright;
    const float fg = label == 0 ? bright : dark;
    Tensor img(Shape{pdim, pdim, 3});
    for (std::size_t y = 0; y < pdim; ++y) {
      for (std::size_t x = 0; x < pdim; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const float base = dy * dy + dx * dx <= radius * radius ? fg : bg;
        for (std::size_t c = 0; c < 3; ++c) {
          const float noise = 20.0f * rng.next_float() - 10.0f;
          img[(y * pdim + x) * 3 + c] = std::clamp(base + noise, 0.0f, 255.0f);
        }
      }
    }
    ds.items[i] = {"synth:" + stream + "/" + std::to_string(i), std::move(img), label};
  }
  ds.digest = dataset_digest(ds.items);
  return ds;
}

}  // namespace detcnn
