#pragma once

// FPT1 container: named float32 tensors, all integers little-endian.
//
//   "FPT1"                      4 bytes
//   entry count                 u32
//   per entry:
//     name length, name bytes   u32, UTF-8
//     axis count                u32
//     axis sizes                u32 each
//     payload                   f32 each, row-major

#include <bit>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fer/io_util.hpp"
#include "fer/tensor.hpp"

namespace fer {

struct NamedTensor {
  std::string name;
  FeatureTensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

using TensorFile = std::vector<NamedTensor>;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n, const char* field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::ParseError, what_ + ": truncated at byte " + std::to_string(pos_) + " reading " +
                                             field + " (need " + std::to_string(n) + " bytes, have " +
                                             std::to_string(bytes_.size() - pos_) + ")");
    }
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_tensor_file(const TensorFile& entries) {
  std::string out = "FPT1";
  detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.tensor.data.size() != shape_size(e.tensor.dims)) {
      throw Error(ErrorCode::ShapeMismatch, "tensor '" + e.name + "' data does not match its shape");
    }
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put_u32(out, static_cast<std::uint32_t>(e.tensor.dims.size()));
    for (std::size_t d : e.tensor.dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
    out.reserve(out.size() + 4 * e.tensor.data.size());
    for (float v : e.tensor.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline TensorFile decode_tensor_file(const std::string& bytes, const std::string& what = "tensor file") {
  detail::ByteReader in(bytes, what);
  if (in.str(4, "magic") != "FPT1") throw Error(ErrorCode::ParseError, what + ": bad magic, expected FPT1");
  const std::uint32_t count = in.u32("entry count");
  TensorFile entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    e.name = in.str(in.u32("name length"), "name");
    const std::uint32_t axes = in.u32("axis count");
    if (axes > 16) throw Error(ErrorCode::ParseError, what + ": implausible axis count at byte " + std::to_string(in.pos()));
    std::size_t total = 1;
    for (std::uint32_t a = 0; a < axes; ++a) {
      e.tensor.dims.push_back(in.u32("axis size"));
      total *= e.tensor.dims.back();
    }
    in.need(total * 4, "payload");
    e.tensor.data.resize(total);
    for (std::size_t k = 0; k < total; ++k) e.tensor.data[k] = std::bit_cast<float>(in.u32("payload"));
    entries.push_back(std::move(e));
  }
  if (!in.done()) {
    throw Error(ErrorCode::ParseError, what + ": trailing bytes after entry " + std::to_string(count) + " at byte " +
                                           std::to_string(in.pos()));
  }
  return entries;
}

inline TensorFile read_tensor_file(const fs::path& path) {
  return decode_tensor_file(read_file(path), path.string());
}

inline void write_tensor_file(const fs::path& path, const TensorFile& entries) {
  write_file_atomic(path, encode_tensor_file(entries));
}

inline const FeatureTensor& find_tensor(const TensorFile& file, const std::string& name) {
  for (const auto& e : file) {
    if (e.name == name) return e.tensor;
  }
  throw Error(ErrorCode::ParseError, "tensor entry '" + name + "' not found");
}

}  // namespace fer
