#include "crossdose/raster.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "crossdose/error.hpp"

namespace crossdose {

RasterF32::RasterF32(std::uint32_t h, std::uint32_t w, std::vector<float> values)
    : height(h), width(w), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(h) * w) {
    throw ValidationError("raster data length " + std::to_string(data.size()) + " != " +
                          std::to_string(h) + "x" + std::to_string(w));
  }
}

void RasterF32::validate() const {
  if (height == 0 || width == 0) throw ValidationError("raster dimensions must be positive");
  if (data.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("raster data length does not match height x width");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError("raster contains a non-finite value at index " + std::to_string(i));
    }
  }
}

void require_same_shape(const RasterF32& a, const RasterF32& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                          std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                          std::to_string(b.width));
  }
}

namespace rasterio {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_floats(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  char* dst = out.data() + start;
  for (float f : values) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) *dst++ = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  }
}

void get_floats(const unsigned char* p, std::span<float> out) {
  for (float& f : out) {
    f = std::bit_cast<float>(get_u32(p));
    p += 4;
  }
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void require_finite(std::span<const float> values) {
  for (float f : values) {
    if (!std::isfinite(f)) throw ValidationError("refusing to write non-finite value");
  }
}

}  // namespace

void write_raster(const std::filesystem::path& path, const RasterF32& img) {
  img.validate();
  std::string bytes;
  bytes.reserve(kRasterHeaderBytes + img.size() * 4);
  bytes.append(kRasterMagic, 4);
  bytes.push_back(static_cast<char>(kRasterVersion));
  put_u32(bytes, img.height);
  put_u32(bytes, img.width);
  put_floats(bytes, img.data);
  write_bytes(path, bytes);
}

RasterF32 read_raster(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(p, kRasterMagic, 4) != 0) {
    throw FormatError("magic", "expected 'PTR1' in " + path.string());
  }
  if (bytes.size() < 5 || p[4] != kRasterVersion) throw FormatError("version", "unsupported raster version");
  if (bytes.size() < kRasterHeaderBytes) throw FormatError("header", "truncated header");
  const std::uint32_t h = get_u32(p + 5);
  const std::uint32_t w = get_u32(p + 9);
  if (h == 0) throw FormatError("height", "must be positive");
  if (w == 0) throw FormatError("width", "must be positive");
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w;
  if (count > std::numeric_limits<std::uint32_t>::max() / 4u) {
    throw FormatError("dimensions", std::to_string(h) + "x" + std::to_string(w) + " overflows");
  }
  const std::uint64_t expected = kRasterHeaderBytes + count * 4;
  if (bytes.size() < expected) {
    throw FormatError("payload", "truncated: expected " + std::to_string(expected) + " bytes, got " +
                                     std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) throw FormatError("payload", "trailing bytes after payload");
  RasterF32 img(h, w);
  get_floats(p + kRasterHeaderBytes, img.data);
  for (float f : img.data) {
    if (!std::isfinite(f)) throw FormatError("payload", "non-finite value");
  }
  return img;
}

void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                  std::span<const float> data) {
  if (shape.size() > 255) throw ValidationError("tensor rank exceeds 255");
  std::uint64_t count = 1;
  for (auto d : shape) count *= d;
  if (count != data.size()) throw ValidationError("tensor payload does not match its shape");
  require_finite(data);
  std::string bytes;
  bytes.append(kTensorMagic, 4);
  bytes.push_back(static_cast<char>(shape.size()));
  for (auto d : shape) put_u32(bytes, d);
  put_floats(bytes, data);
  write_bytes(path, bytes);
}

TensorF32 read_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(p, kTensorMagic, 4) != 0) {
    throw FormatError("magic", "expected 'PTN1' in " + path.string());
  }
  if (bytes.size() < 5) throw FormatError("rank", "truncated header");
  const std::size_t rank = p[4];
  const std::size_t header = 5 + 4 * rank;
  if (bytes.size() < header) throw FormatError("dims", "truncated header");
  TensorF32 t;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    t.shape.push_back(get_u32(p + 5 + 4 * i));
    count *= t.shape.back();
    if (count > std::numeric_limits<std::uint32_t>::max() / 4u) throw FormatError("dims", "overflow");
  }
  const std::uint64_t expected = header + count * 4;
  if (bytes.size() < expected) throw FormatError("payload", "truncated tensor payload");
  if (bytes.size() > expected) throw FormatError("payload", "trailing bytes after payload");
  t.data.resize(count);
  get_floats(p + header, t.data);
  return t;
}

}  // namespace rasterio
}  // namespace crossdose
