#include "detcnn/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace detcnn {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'W', '1'};
constexpr std::uint8_t kDtypeF32 = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > end_ - pos_) throw WeightsError(WeightsFault::truncated, std::string("weights file truncated in ") + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
           static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::size_t pos() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kWeightsVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(kDtypeF32);
    out.push_back(t.trainable ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(t.value.shape().rank()));
    for (auto d : t.value.shape().dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  const Digest d = sha256(out);
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw WeightsError(WeightsFault::bad_magic, "not a DCW1 weights file (bad magic)");
  }
  if (bytes.size() < 12 + 32) throw WeightsError(WeightsFault::truncated, "weights file truncated in header");
  Reader r(bytes, bytes.size() - 32);
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kWeightsVersion) {
    throw WeightsError(WeightsFault::version, "weights format version " + std::to_string(version) +
                                                  " is not supported (expected " +
                                                  std::to_string(kWeightsVersion) + ")");
  }
  const std::uint32_t count = r.u32("count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t len = r.u32("name length");
    auto name = r.take(len, "name");
    t.name.assign(name.begin(), name.end());
    if (r.u8("dtype") != kDtypeF32) throw WeightsError(WeightsFault::malformed, "unknown dtype for '" + t.name + "'");
    t.trainable = (r.u8("flags") & 1) != 0;
    const std::uint32_t rank = r.u32("rank");
    if (rank < 1 || rank > 4) throw WeightsError(WeightsFault::malformed, "bad rank for '" + t.name + "'");
    std::vector<std::size_t> dims;
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      dims.push_back(r.u32("dims"));
      if (dims.back() == 0) throw WeightsError(WeightsFault::malformed, "zero dimension in '" + t.name + "'");
      numel *= dims.back();
      if (numel > bytes.size()) throw WeightsError(WeightsFault::truncated, "weights file truncated in payload");
    }
    auto payload = r.take(numel * 4, "payload");
    std::vector<float> values(numel);
    for (std::size_t k = 0; k < numel; ++k) {
      const std::uint8_t* p = payload.data() + 4 * k;
      const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                                 static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
      values[k] = std::bit_cast<float>(bits);
    }
    t.value = Tensor(Shape(std::move(dims)), std::move(values));
    out.push_back(std::move(t));
  }
  if (r.pos() != bytes.size() - 32) throw WeightsError(WeightsFault::malformed, "trailing bytes before checksum");
  const Digest expect = sha256(bytes.first(bytes.size() - 32));
  if (!std::equal(expect.begin(), expect.end(), bytes.end() - 32)) {
    throw WeightsError(WeightsFault::checksum, "weights file checksum mismatch");
  }
  return out;
}

std::vector<NamedTensor> snapshot(ModelGraph& g) {
  std::vector<NamedTensor> out;
  for (const auto& r : g.trainables()) out.push_back({r.qualified_name(), r.param->value, true});
  for (const auto& r : g.buffers()) out.push_back({r.qualified_name(), r.param->value, false});
  return out;
}

void restore(ModelGraph& g, std::span<const NamedTensor> tensors) {
  auto refs = g.trainables();
  auto bufs = g.buffers();
  refs.insert(refs.end(), bufs.begin(), bufs.end());
  if (refs.size() != tensors.size()) {
    throw WeightsError(WeightsFault::name, "weights file holds " + std::to_string(tensors.size()) +
                                               " tensors, model expects " + std::to_string(refs.size()));
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].qualified_name() != tensors[i].name) {
      throw WeightsError(WeightsFault::name, "weights file tensor " + std::to_string(i) + " is '" + tensors[i].name +
                                                 "', model expects '" + refs[i].qualified_name() + "'");
    }
    if (refs[i].param->value.shape() != tensors[i].value.shape()) {
      throw WeightsError(WeightsFault::shape, "shape mismatch for '" + tensors[i].name + "': file " +
                                                  tensors[i].value.shape().str() + ", model " +
                                                  refs[i].param->value.shape().str());
    }
  }
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].param->value = tensors[i].value;
}

std::vector<std::uint8_t> serialize_weights(ModelGraph& g) {
  const auto s = snapshot(g);
  return encode_tensors(s);
}

void save_weights(ModelGraph& g, const std::filesystem::path& path) { write_file(path, serialize_weights(g)); }

void load_weights(ModelGraph& g, const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto tensors = decode_tensors(bytes);
  restore(g, tensors);
}

Digest fingerprint(ModelGraph& g) {
  const auto bytes = serialize_weights(g);
  Digest d;
  std::copy(bytes.end() - 32, bytes.end(), d.begin());
  return d;
}

std::string fingerprint_hex(ModelGraph& g) { return to_hex(fingerprint(g)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("write failed for '" + path.string() + "'");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace detcnn
