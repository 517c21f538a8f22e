#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rbc {

/// 8-bit interleaved RGB, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const RgbImage&) const = default;
};

/// A smear micrograph (or a patch of one) with provenance.
struct SmearImage {
  RgbImage image;
  std::string source_id;
  std::string image_id;
};

/// Integer label map: 0 is background, k > 0 marks cell k.
struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t w, std::size_t h) : width(w), height(h), labels(w * h, 0) {}
  std::uint16_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  std::uint16_t& at(std::size_t x, std::size_t y) { return labels[y * width + x]; }
};

/// Float RGB in [0, 1], row-major HWC; the encoder's input representation.
struct FloatImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(std::size_t w, std::size_t h) : width(w), height(h), data(w * h * 3, 0.0f) {}
  float& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * 3 + c]; }
  float at(std::size_t x, std::size_t y, std::size_t c) const {
    return data[(y * width + x) * 3 + c];
  }
  bool operator==(const FloatImage&) const = default;
};

FloatImage to_float(const RgbImage& img);
RgbImage to_rgb8(const FloatImage& img);

// Binary PNM codecs: P6 (8-bit RGB) for images, P5 (8- or 16-bit) for label maps.
std::string encode_ppm(const RgbImage& img);
RgbImage decode_ppm(std::string_view bytes, const std::string& origin = "ppm");
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

std::string encode_pgm16(const LabelMap& map);
LabelMap decode_pgm(std::string_view bytes, const std::string& origin = "pgm");
LabelMap read_pgm(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const LabelMap& map);

/// Bilinear resampling with pixel-centre alignment; same-size input is copied verbatim.
RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height);
FloatImage resize_bilinear(const FloatImage& img, std::size_t width, std::size_t height);
RgbImage resize_nearest(const RgbImage& img, std::size_t width, std::size_t height);

/// Sub-rectangle [x0, x0 + w) × [y0, y0 + h).
RgbImage crop(const RgbImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);
FloatImage crop(const FloatImage& img, std::size_t x0, std::size_t y0, std::size_t w,
                std::size_t h);

}  // namespace rbc
