#include "swarmcam/formats.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "swarmcam/errors.hpp"

namespace swarmcam::io {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteReader::need(std::size_t n) const {
  if (remaining() < n)
    throw FormatError("truncated data: need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", have " + std::to_string(remaining()));
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::raw(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Bytes encode_flo(const FlowField& field) {
  if (field.u.size() != field.height * field.width || field.v.size() != field.u.size())
    throw ValidationError("flow field component sizes disagree with its dims");
  ByteWriter w;
  w.f32(kFloMagic);
  w.i32(static_cast<std::int32_t>(field.width));
  w.i32(static_cast<std::int32_t>(field.height));
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    if (!std::isfinite(field.u[i]) || !std::isfinite(field.v[i]))
      throw ValidationError("flow field has non-finite values");
    w.f32(static_cast<float>(field.u[i]));
    w.f32(static_cast<float>(field.v[i]));
  }
  return w.take();
}

FlowField decode_flo(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 12) throw FormatError(".flo: header truncated");
  if (r.f32() != kFloMagic) throw FormatError(".flo: bad magic");
  const std::int32_t w = r.i32(), h = r.i32();
  if (w <= 0 || h <= 0) throw FormatError(".flo: non-positive dimensions");
  const std::uint64_t expect = 12 + 8ull * static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h);
  if (bytes.size() != expect)
    throw FormatError(".flo: size " + std::to_string(bytes.size()) + " does not match header (" +
                      std::to_string(expect) + ")");
  FlowField f(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = r.f32();
    f.v[i] = r.f32();
    if (!std::isfinite(f.u[i]) || !std::isfinite(f.v[i])) throw FormatError(".flo: non-finite value");
  }
  return f;
}

void write_flo(const FlowField& field, const std::filesystem::path& path) {
  write_file_atomic(path, encode_flo(field));
}

FlowField read_flo(const std::filesystem::path& path) { return decode_flo(read_file(path)); }

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Bytes encode_netpbm(char kind, std::size_t w, std::size_t h, std::span<const double> values) {
  ByteWriter out;
  out.raw(std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n");
  Bytes body(values.size());
  std::transform(values.begin(), values.end(), body.begin(), to_byte);
  out.raw(body);
  return out.take();
}

struct NetpbmHeader {
  char kind;
  std::size_t width, height;
  std::size_t data_offset;
};

NetpbmHeader parse_netpbm_header(std::span<const std::uint8_t> b) {
  if (b.size() < 2 || b[0] != 'P') throw FormatError("netpbm: missing magic");
  const char kind = static_cast<char>(b[1]);
  if (kind == '2' || kind == '3') throw FormatError("netpbm: ASCII variant P" + std::string(1, kind) + " unsupported");
  if (kind != '5' && kind != '6') throw FormatError("netpbm: unsupported magic P" + std::string(1, kind));
  std::size_t pos = 2;
  auto next_token = [&]() -> std::size_t {
    for (;;) {
      if (pos >= b.size()) throw FormatError("netpbm: header truncated");
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (!std::isdigit(b[pos])) throw FormatError("netpbm: malformed header");
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
      if (v > (1u << 24)) throw FormatError("netpbm: header value too large");
      ++pos;
    }
    return v;
  };
  const std::size_t w = next_token(), h = next_token(), maxval = next_token();
  if (w == 0 || h == 0) throw FormatError("netpbm: zero dimension");
  if (maxval != 255) throw FormatError("netpbm: only maxval 255 is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("netpbm: header truncated");
  ++pos;  // exactly one whitespace before the raster
  return {kind, w, h, pos};
}

std::vector<double> decode_raster(std::span<const std::uint8_t> b, const NetpbmHeader& hd, std::size_t channels) {
  const std::size_t n = hd.width * hd.height * channels;
  if (b.size() - hd.data_offset != n)
    throw FormatError("netpbm: raster size " + std::to_string(b.size() - hd.data_offset) + " != " +
                      std::to_string(n));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = b[hd.data_offset + i] / 255.0;
  return out;
}

}  // namespace

Bytes encode_pgm(const GrayImage& image) {
  return encode_netpbm('5', image.width, image.height, image.pixels);
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  const auto hd = parse_netpbm_header(bytes);
  if (hd.kind != '5') throw FormatError("expected a P5 image");
  GrayImage img;
  img.height = hd.height;
  img.width = hd.width;
  img.pixels = decode_raster(bytes, hd, 1);
  return img;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(image));
}

GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

Bytes encode_ppm(const RgbImage& image) { return encode_netpbm('6', image.width, image.height, image.data); }

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  const auto hd = parse_netpbm_header(bytes);
  if (hd.kind != '6') throw FormatError("expected a P6 image");
  RgbImage img;
  img.height = hd.height;
  img.width = hd.width;
  img.data = decode_raster(bytes, hd, 3);
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_file_atomic(path, encode_ppm(image));
}

RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

}  // namespace swarmcam::io
