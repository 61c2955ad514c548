#include <cmath>
#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>

#include "golden_fixtures.hpp"

#include "swarmcam/errors.hpp"
#include "swarmcam/formats.hpp"
#include "swarmcam/model.hpp"

using namespace swarmcam;
using namespace swarmcam::io;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(SWARMCAM_SOURCE_DIR) / "tests" / "golden";

// With SWARMCAM_UPDATE_GOLDEN set the file is (re)written instead of compared.
void check_golden(const std::string& name, const Bytes& bytes) {
  const auto path = kGolden / name;
  if (std::getenv("SWARMCAM_UPDATE_GOLDEN")) {
    write_file_atomic(path, bytes);
    return;
  }
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  EXPECT_EQ(read_file(path), bytes) << name;
}

using oracle::golden_checkpoint;
using oracle::golden_flow;
using oracle::golden_gray;
using oracle::golden_rgb;

}  // namespace

TEST(ByteIoTest, LittleEndianAndTruncation) {
  ByteWriter w;
  w.u32(0x01020304u);
  w.f64(1.5);
  const Bytes b = w.take();
  EXPECT_EQ(b[0], 0x04);
  EXPECT_EQ(b[3], 0x01);
  ByteReader r(b);
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.f64(), 1.5);
  EXPECT_THROW(r.u8(), FormatError);
}

TEST(FloTest, RoundTripAndLayout) {
  const FlowField f = golden_flow();
  const Bytes b = encode_flo(f);
  ASSERT_EQ(b.size(), 12u + 8u * 12u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "PIEH");
  const FlowField back = decode_flo(b);
  EXPECT_EQ(back, f);  // values are exact in float32
  EXPECT_EQ(encode_flo(back), b);
  check_golden("field.flo", b);
  EXPECT_EQ(decode_flo(read_file(kGolden / "field.flo")), f);

  EXPECT_EQ(encode_flo(FlowField(64, 64)).size(), 32780u);
}

TEST(FloTest, Float32Truncation) {
  FlowField f(1, 1);
  f.u[0] = 0.1;
  f.v[0] = 1.0 / 3.0;
  const FlowField back = decode_flo(encode_flo(f));
  EXPECT_EQ(back.u[0], static_cast<double>(0.1f));
  EXPECT_EQ(back.v[0], static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST(FloTest, Errors) {
  Bytes b = encode_flo(golden_flow());
  Bytes zero_magic = b;
  std::fill(zero_magic.begin(), zero_magic.begin() + 4, 0);
  EXPECT_THROW(decode_flo(zero_magic), FormatError);
  Bytes short_payload(b.begin(), b.end() - 1);
  EXPECT_THROW(decode_flo(short_payload), FormatError);
  b.push_back(0);
  EXPECT_THROW(decode_flo(b), FormatError);
  EXPECT_THROW(decode_flo(Bytes{0, 1}), FormatError);
  FlowField bad(1, 1);
  bad.u[0] = NAN;
  EXPECT_THROW(encode_flo(bad), ValidationError);
}

TEST(PgmTest, ScalingHeaderAndRoundTrip) {
  const Bytes u = encode_pgm(GrayImage(2, 3, 0.8));
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(u.size(), header.size() + 6);
  EXPECT_EQ(std::string(u.begin(), u.begin() + static_cast<long>(header.size())), header);
  for (std::size_t i = header.size(); i < u.size(); ++i) EXPECT_EQ(u[i], 204);

  const GrayImage g = golden_gray();
  const Bytes b = encode_pgm(g);
  EXPECT_EQ(decode_pgm(b), g);
  EXPECT_EQ(encode_pgm(decode_pgm(b)), b);
  check_golden("image.pgm", b);
}

TEST(PgmTest, CommentsSkippedAndAsciiRejected) {
  const std::string text = "P5\n# made by hand\n2 1\n# another\n255\n";
  Bytes b(text.begin(), text.end());
  b.push_back(0);
  b.push_back(255);
  const GrayImage g = decode_pgm(b);
  EXPECT_EQ(g.width, 2u);
  EXPECT_EQ(g.pixels[0], 0.0);
  EXPECT_EQ(g.pixels[1], 1.0);

  const std::string ascii = "P2\n2 1\n255\n0 255\n";
  EXPECT_THROW(decode_pgm(Bytes(ascii.begin(), ascii.end())), FormatError);
  const std::string p3 = "P3\n1 1\n255\n0 0 0\n";
  EXPECT_THROW(decode_ppm(Bytes(p3.begin(), p3.end())), FormatError);
  const std::string truncated = "P5\n2 2\n255\n";
  Bytes t(truncated.begin(), truncated.end());
  t.push_back(1);
  EXPECT_THROW(decode_pgm(t), FormatError);
}

TEST(PpmTest, RoundTrip) {
  const RgbImage r = golden_rgb();
  const Bytes b = encode_ppm(r);
  EXPECT_EQ(decode_ppm(b), r);
  EXPECT_EQ(encode_ppm(decode_ppm(b)), b);
  check_golden("image.ppm", b);
}

TEST(CheckpointGoldenTest, RoundTrip) {
  const model::Checkpoint c = golden_checkpoint();
  const Bytes b = model::encode_checkpoint(c);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SWLM");
  check_golden("model.swlm", b);
  const model::Checkpoint back = model::decode_checkpoint(read_file(kGolden / "model.swlm"));
  EXPECT_EQ(back, c);
  EXPECT_EQ(model::encode_checkpoint(back), b);
}

TEST(FileIoTest, AtomicWriteAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "swarmcam_fileio";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "a.txt", "hello");
  write_text_atomic(dir / "a.txt", "again");
  const Bytes b = read_file(dir / "a.txt");
  EXPECT_EQ(std::string(b.begin(), b.end()), "again");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1u);
  EXPECT_THROW(read_file(dir / "missing"), FormatError);
}
