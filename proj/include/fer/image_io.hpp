#pragma once

// Binary PGM (P5) and PPM (P6) codecs, 8 bits per sample. Intensities map
// linearly between 0..maxval and 0.0..1.0.

#include <cctype>
#include <cmath>
#include <string>

#include "fer/image.hpp"
#include "fer/io_util.hpp"

namespace fer {

namespace detail {

inline int read_header_int(const std::string& bytes, std::size_t& pos, const std::string& what) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorCode::ParseError, what + ": malformed netpbm header at byte " + std::to_string(pos));
  }
  long value = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1'000'000) throw Error(ErrorCode::ParseError, what + ": header value too large");
    ++pos;
  }
  return static_cast<int>(value);
}

}  // namespace detail

inline Image decode_netpbm(const std::string& bytes, const std::string& what = "image") {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw Error(ErrorCode::ParseError, what + ": not a binary PGM/PPM file");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const int width = detail::read_header_int(bytes, pos, what);
  const int height = detail::read_header_int(bytes, pos, what);
  const int maxval = detail::read_header_int(bytes, pos, what);
  if (maxval < 1 || maxval > 255) {
    throw Error(ErrorCode::ParseError, what + ": only 8-bit netpbm files are supported");
  }
  ++pos;  // single whitespace before raster
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < pos + need) {
    throw Error(ErrorCode::ParseError, what + ": truncated raster (have " +
                                           std::to_string(bytes.size() - std::min(pos, bytes.size())) +
                                           " bytes, need " + std::to_string(need) + ")");
  }
  Image img(height, width, channels);
  auto data = img.data();
  for (std::size_t i = 0; i < need; ++i) {
    data[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) / maxval;
  }
  return img;
}

inline std::string encode_netpbm(const Image& img) {
  std::string out = (img.channels() == 1 ? "P5\n" : "P6\n") + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n";
  const auto data = img.data();
  const std::size_t header = out.size();
  out.resize(header + data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = std::clamp(static_cast<double>(data[i]), 0.0, 1.0);
    out[header + i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  return out;
}

inline Image read_image(const fs::path& path) { return decode_netpbm(read_file(path), path.string()); }

inline void write_image(const fs::path& path, const Image& img) {
  write_file_atomic(path, encode_netpbm(img));
}

/// Conventional extension for an image's channel count.
inline std::string netpbm_extension(const Image& img) { return img.channels() == 1 ? ".pgm" : ".ppm"; }

}  // namespace fer
