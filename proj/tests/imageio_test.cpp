#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "detcnn/imageio.hpp"
#include "detcnn/parallel.hpp"
#include "detcnn/weights_io.hpp"
#include "support.hpp"

using namespace detcnn;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

PpmFault fault_of(const std::string& s) {
  try {
    (void)decode_ppm(bytes_of(s));
  } catch (const PpmError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    return e.fault();
  }
  ADD_FAILURE() << "accepted: " << s.substr(0, 20);
  return PpmFault::malformed_header;
}

Tensor solid(std::size_t h, std::size_t w, float v) { return Tensor(Shape{h, w, 3}, v); }

}  // namespace

TEST(Ppm, DecodesHeaderAndPayload) {
  const std::string raw = std::string("P6\n2 1\n255\n") + std::string("\x01\x02\x03\xff\x00\x80", 6);
  const Tensor t = decode_ppm(bytes_of(raw));
  EXPECT_EQ(t.shape(), (Shape{1, 2, 3}));
  EXPECT_EQ(t[0], 1.0f);
  EXPECT_EQ(t[3], 255.0f);
  EXPECT_EQ(t[5], 128.0f);
}

TEST(Ppm, CommentsBetweenTokens) {
  const std::string raw = std::string("P6 # made by hand\n1 # width\n1\n# maxval next\n255\n") + "abc";
  const Tensor t = decode_ppm(bytes_of(raw));
  EXPECT_EQ(t[1], static_cast<float>('b'));
}

TEST(Ppm, DistinctFaults) {
  EXPECT_EQ(fault_of("P3\n1 1\n255\n1 2 3"), PpmFault::malformed_header);
  EXPECT_EQ(fault_of("P6\n1 1\n65535\n123456"), PpmFault::bad_maxval);
  EXPECT_EQ(fault_of("P6\n2 2\n255\nabc"), PpmFault::truncated);
  EXPECT_EQ(fault_of("P6\n2"), PpmFault::truncated);
  EXPECT_EQ(fault_of("P6\n0 2\n255\n"), PpmFault::malformed_header);
  EXPECT_EQ(fault_of("P6\nx 2\n255\n"), PpmFault::malformed_header);
  EXPECT_EQ(fault_of("P"), PpmFault::truncated);
}

TEST(Ppm, EncodeRoundsAndClamps) {
  const Tensor t(Shape{1, 2, 3}, {0.49f, 0.5f, 254.6f, 300.0f, -3.0f, 127.5f});
  const auto b = encode_ppm(t);
  const std::string header = "P6\n2 1\n255\n";
  ASSERT_EQ(b.size(), header.size() + 6);
  EXPECT_EQ(std::string(b.begin(), b.begin() + header.size()), header);
  const std::uint8_t expect[] = {0, 1, 255, 255, 0, 128};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(b[header.size() + i], expect[i]) << i;
}

TEST(Ppm, ByteRoundTrip) {
  const Tensor t = support::random_tensor(Shape{7, 5, 3}, 1, "ppm", 0.0, 255.0);
  const auto once = encode_ppm(t);
  EXPECT_EQ(encode_ppm(decode_ppm(once)), once);
}

TEST(Ppm, ReadErrorNamesFile) {
  support::TempDir dir("ppm");
  write_text_file(dir / "bad.ppm", "P5\n1 1\n255\nx");
  try {
    (void)read_ppm(dir / "bad.ppm");
    FAIL();
  } catch (const PpmError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.ppm"), std::string::npos);
  }
}

class DatasetDir : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::create_directories(dir.path() / "cats");
    fs::create_directories(dir.path() / "dogs");
    write_ppm(dir / "cats/a.ppm", solid(10, 12, 10));
    write_ppm(dir / "cats/b.ppm", solid(20, 20, 20));
    write_ppm(dir / "dogs/c.ppm", solid(8, 8, 200));
    write_ppm(dir / "dogs/d.ppm", solid(9, 30, 250));
    write_text_file(dir / "dogs/notes.txt", "ignored");
  }
  support::TempDir dir{"dataset"};
};

TEST_F(DatasetDir, LoadsSortedClassesAndItems) {
  const Dataset ds = load_dataset(dir.path(), 16);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"cats", "dogs"}));
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.items[0].source, "cats/a.ppm");
  EXPECT_EQ(ds.items[3].source, "dogs/d.ppm");
  EXPECT_EQ(ds.items[2].label, 1);
  EXPECT_EQ(ds.items[1].image.shape(), (Shape{16, 16, 3}));
  EXPECT_EQ(ds.items[3].image[0], 250.0f);
  EXPECT_TRUE(ds.balanced());
}

TEST_F(DatasetDir, DigestIsStableAndTracksOrder) {
  const Dataset a = load_dataset(dir.path(), 16);
  ThreadPool pool(3);
  const Dataset b = load_dataset(dir.path(), 16, &pool);
  EXPECT_EQ(a.digest, b.digest);
  // renaming without reordering keeps the digest
  fs::rename(dir / "cats/b.ppm", dir / "cats/bb.ppm");
  EXPECT_EQ(load_dataset(dir.path(), 16).digest, a.digest);
  // renaming that moves a file changes item order and therefore the digest
  fs::rename(dir / "cats/a.ppm", dir / "cats/z.ppm");
  const Dataset c = load_dataset(dir.path(), 16);
  EXPECT_EQ(c.items[0].source, "cats/bb.ppm");
  EXPECT_NE(c.digest, a.digest);
}

TEST_F(DatasetDir, StructuralErrorsAreDataErrors) {
  auto expect_data_error = [&](const std::string& needle) {
    try {
      (void)load_dataset(dir.path(), 16);
      ADD_FAILURE() << "expected failure mentioning " << needle;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::data);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  write_text_file(dir / "dogs/e.ppm", "P6\n4 4\n255\n");
  expect_data_error("e.ppm");
  fs::remove(dir / "dogs/e.ppm");
  fs::create_directories(dir.path() / "zebras");
  expect_data_error("exactly two");
  fs::remove(dir.path() / "zebras");
  fs::remove(dir / "dogs/c.ppm");
  fs::remove(dir / "dogs/d.ppm");
  expect_data_error("dogs");
}

TEST(Dataset, MissingDirectoryNamesPath) {
  try {
    (void)load_dataset("/no/such/place", 16);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("/no/such/place"), std::string::npos);
  }
}

TEST(SynthBlobs, DeterministicAndSeeded) {
  const Dataset a = synth_blobs(20, 24, 1001);
  const Dataset b = synth_blobs(20, 24, 1001);
  const Dataset c = synth_blobs(20, 24, 1002);
  EXPECT_EQ(a.digest, b.digest);
  EXPECT_NE(a.digest, c.digest);
  EXPECT_EQ(a.items[3].label, 1);
  EXPECT_EQ(a.items[4].label, 0);
  EXPECT_TRUE(a.balanced());
  EXPECT_THROW(synth_blobs(3, 24, 1), Error);
  EXPECT_THROW(synth_blobs(0, 24, 1), Error);
  // the two-image set is the first two images of any larger set
  EXPECT_TRUE(synth_blobs(2, 24, 1001).items[1].image.bit_equal(a.items[1].image));
}

TEST(SynthBlobs, SeparableByMeanIntensity) {
  const Dataset ds = synth_blobs(1000, 32, 7);
  std::size_t correct = 0;
  for (const auto& it : ds.items) {
    double sum = 0.0;
    for (float v : it.image.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 255.0f);
      sum += v;
    }
    const int predicted = sum / static_cast<double>(it.image.size()) > 127.5 ? 1 : 0;
    correct += predicted == it.label;
  }
  EXPECT_EQ(correct, 1000u);
}
