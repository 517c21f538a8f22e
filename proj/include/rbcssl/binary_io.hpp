#pragma once

// Little-endian primitive encoding shared by the checkpoint and embedding formats.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbcssl/errors.hpp"

namespace rbc {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.append(s); }

  template <typename U>
  void le(U value) {
    static_assert(std::is_trivially_copyable_v<U>);
    char raw[sizeof(U)];
    std::memcpy(raw, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    buf_.append(raw, sizeof(U));
  }

  void f32_array(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      buf_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    } else {
      for (float v : values) le(v);
    }
  }

  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string origin)
      : data_(data), origin_(std::move(origin)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename U>
  U le() {
    need(sizeof(U));
    char raw[sizeof(U)];
    std::memcpy(raw, data_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, raw, sizeof(U));
    return value;
  }

  std::vector<float> f32_array(std::size_t n) {
    if (n > remaining() / sizeof(float)) truncated();
    std::vector<float> out(n);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, n * sizeof(float));
      pos_ += n * sizeof(float);
    } else {
      for (float& v : out) v = le<float>();
    }
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) truncated();
  }
  [[noreturn]] void truncated() const { throw InputError(origin_ + ": truncated file"); }

  std::string_view data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace rbc
