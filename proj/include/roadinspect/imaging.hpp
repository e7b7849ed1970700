#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "roadinspect/error.hpp"
#include "roadinspect/tensor.hpp"

namespace roadinspect {

using Bytes = std::vector<std::uint8_t>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit interleaved RGB raster, row-major.
class ImageRGB8 {
 public:
  ImageRGB8() = default;

  ImageRGB8(std::size_t width, std::size_t height, Rgb fill = {})
      : width_(width), height_(height), data_(width * height * 3) {
    check_dims();
    for (std::size_t i = 0; i < width * height; ++i) {
      data_[3 * i] = fill.r;
      data_[3 * i + 1] = fill.g;
      data_[3 * i + 2] = fill.b;
    }
  }

  ImageRGB8(std::size_t width, std::size_t height, Bytes data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims();
    if (data_.size() != width_ * height_ * 3) {
      throw ShapeError("image payload length " + std::to_string(data_.size()) + " != " +
                       std::to_string(width_ * height_ * 3));
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  Rgb pixel(std::size_t x, std::size_t y) const {
    const auto* p = &data_[(y * width_ + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set_pixel(std::size_t x, std::size_t y, Rgb c) {
    auto* p = &data_[(y * width_ + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return data_[(y * width_ + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return data_[(y * width_ + x) * 3 + c]; }

  friend bool operator==(const ImageRGB8&, const ImageRGB8&) = default;

 private:
  void check_dims() const {
    if (width_ == 0 || height_ == 0) throw ShapeError("image dimensions must be >= 1");
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  Bytes data_;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  long x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  long width() const noexcept { return x1 - x0; }
  long height() const noexcept { return y1 - y0; }
  bool empty() const noexcept { return x1 <= x0 || y1 <= y0; }

  PixelRect clipped(std::size_t w, std::size_t h) const {
    const long W = static_cast<long>(w), H = static_cast<long>(h);
    return {std::clamp(x0, 0L, W), std::clamp(y0, 0L, H), std::clamp(x1, 0L, W), std::clamp(y1, 0L, H)};
  }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// ---------------------------------------------------------------------------
// PPM (binary P6, maxval 255)

namespace detail {

inline bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Skips whitespace and '#' comments; returns false at end of input.
inline bool skip_header_space(std::span<const std::uint8_t> in, std::size_t& pos) {
  while (pos < in.size()) {
    if (in[pos] == '#') {
      while (pos < in.size() && in[pos] != '\n') ++pos;
    } else if (is_space(in[pos])) {
      ++pos;
    } else {
      return true;
    }
  }
  return false;
}

inline std::size_t read_header_uint(std::span<const std::uint8_t> in, std::size_t& pos, const char* field) {
  if (!skip_header_space(in, pos)) {
    throw FormatError(FormatError::Kind::MalformedHeader, std::string("PPM header ends before ") + field);
  }
  if (in[pos] < '0' || in[pos] > '9') {
    throw FormatError(FormatError::Kind::MalformedHeader, std::string("PPM header: expected digits for ") + field);
  }
  std::size_t value = 0;
  while (pos < in.size() && in[pos] >= '0' && in[pos] <= '9') {
    value = value * 10 + (in[pos] - '0');
    if (value > (1u << 24)) {
      throw FormatError(FormatError::Kind::MalformedHeader, std::string("PPM header: ") + field + " too large");
    }
    ++pos;
  }
  return value;
}

}  // namespace detail

inline ImageRGB8 decode_ppm(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError(Kind::BadMagic, "not a binary PPM (expected P6 magic)");
  }
  std::size_t pos = 2;
  if (pos < bytes.size() && !detail::is_space(bytes[pos]) && bytes[pos] != '#') {
    throw FormatError(Kind::BadMagic, "not a binary PPM (expected whitespace after P6)");
  }
  const std::size_t width = detail::read_header_uint(bytes, pos, "width");
  const std::size_t height = detail::read_header_uint(bytes, pos, "height");
  const std::size_t maxval = detail::read_header_uint(bytes, pos, "maxval");
  if (width == 0 || height == 0) throw FormatError(Kind::MalformedHeader, "PPM dimensions must be >= 1");
  if (maxval != 255) throw FormatError(Kind::UnsupportedMaxval, "PPM maxval " + std::to_string(maxval) + " != 255");
  if (pos >= bytes.size() || !detail::is_space(bytes[pos])) {
    throw FormatError(Kind::MalformedHeader, "PPM header: expected one whitespace byte after maxval");
  }
  ++pos;
  const std::size_t need = width * height * 3;
  if (bytes.size() - pos < need) {
    throw FormatError(Kind::Truncated, "PPM payload has " + std::to_string(bytes.size() - pos) + " bytes, need " +
                                           std::to_string(need));
  }
  return ImageRGB8(width, height, Bytes(bytes.begin() + pos, bytes.begin() + pos + need));
}

inline Bytes encode_ppm(const ImageRGB8& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.data().begin(), img.data().end());
  return out;
}

// ---------------------------------------------------------------------------
// PNG writer: stored (uncompressed) deflate blocks only.

namespace detail {

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t n = 0; n < 256; ++n) {
      std::uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[n] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (auto b : bytes) crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

inline std::uint32_t adler32(std::span<const std::uint8_t> bytes) {
  constexpr std::uint32_t kMod = 65521;
  std::uint32_t a = 1, b = 0;
  for (auto x : bytes) {
    a = (a + x) % kMod;
    b = (b + a) % kMod;
  }
  return (b << 16) | a;
}

inline void put_be32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(Bytes& out, const char type[4], std::span<const std::uint8_t> payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  put_be32(out, crc32(std::span<const std::uint8_t>(out).subspan(type_at, 4 + payload.size())));
}

}  // namespace detail

inline Bytes encode_png_stored(const ImageRGB8& img) {
  static constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  Bytes out(kSignature.begin(), kSignature.end());

  Bytes ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.width()));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.height()));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, truecolor, deflate, filter 0, no interlace
  detail::put_chunk(out, "IHDR", ihdr);

  // Filtered scanlines: each row prefixed with filter type 0.
  const std::size_t stride = img.width() * 3;
  Bytes raw;
  raw.reserve((stride + 1) * img.height());
  for (std::size_t y = 0; y < img.height(); ++y) {
    raw.push_back(0);
    auto row = img.data().subspan(y * stride, stride);
    raw.insert(raw.end(), row.begin(), row.end());
  }

  Bytes z = {0x78, 0x01};
  constexpr std::size_t kMaxStored = 65535;
  std::size_t pos = 0;
  do {
    const std::size_t len = std::min(kMaxStored, raw.size() - pos);
    const bool final = pos + len == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(len & 0xFF));
    z.push_back(static_cast<std::uint8_t>(len >> 8));
    z.push_back(static_cast<std::uint8_t>(~len & 0xFF));
    z.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + len);
    pos += len;
  } while (pos < raw.size());
  detail::put_be32(z, detail::adler32(raw));

  detail::put_chunk(out, "IDAT", z);
  detail::put_chunk(out, "IEND", {});
  return out;
}

// ---------------------------------------------------------------------------
// Geometry and resampling

/// Copies rect out of img. rect must lie within the image.
inline ImageRGB8 crop(const ImageRGB8& img, const PixelRect& rect) {
  if (rect.empty()) throw EmptyRectError("crop rectangle has zero area");
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > static_cast<long>(img.width()) ||
      rect.y1 > static_cast<long>(img.height())) {
    throw ShapeError("crop rectangle exceeds image bounds");
  }
  const auto w = static_cast<std::size_t>(rect.width());
  const auto h = static_cast<std::size_t>(rect.height());
  Bytes out;
  out.reserve(w * h * 3);
  for (std::size_t y = 0; y < h; ++y) {
    const auto row = img.data().subspan(((rect.y0 + y) * img.width() + rect.x0) * 3, w * 3);
    out.insert(out.end(), row.begin(), row.end());
  }
  return ImageRGB8(w, h, std::move(out));
}

/// Bilinear resize with half-pixel centers, edge clamping and
/// round-half-away-from-zero.
inline ImageRGB8 resize_bilinear(const ImageRGB8& img, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0) throw ShapeError("resize target must be >= 1x1");
  if (w == img.width() && h == img.height()) return img;

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
      double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const auto lo = static_cast<std::size_t>(std::floor(s));
      out[i] = {lo, std::min(lo + 1, src - 1), s - static_cast<double>(lo)};
    }
    return out;
  };
  const auto xs = taps(img.width(), w);
  const auto ys = taps(img.height(), h);

  ImageRGB8 out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < w; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(tx.lo, ty.lo, c) * (1.0 - tx.frac) + img.at(tx.hi, ty.lo, c) * tx.frac;
        const double bot = img.at(tx.lo, ty.hi, c) * (1.0 - tx.frac) + img.at(tx.hi, ty.hi, c) * tx.frac;
        const double v = top * (1.0 - ty.frac) + bot * ty.frac;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

/// H x W x 3 tensor with each byte mapped to byte / 255.
inline Tensor to_float_norm(const ImageRGB8& img) {
  std::vector<float> data(img.data().size());
  std::transform(img.data().begin(), img.data().end(), data.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b / 255.0); });
  return Tensor({img.height(), img.width(), 3}, std::move(data));
}

// ---------------------------------------------------------------------------
// File helpers

inline Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline ImageRGB8 load_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

inline void save_ppm(const std::filesystem::path& path, const ImageRGB8& img) { write_file_bytes(path, encode_ppm(img)); }

}  // namespace roadinspect
