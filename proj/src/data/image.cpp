#include "rbcssl/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rbcssl/binary_io.hpp"
#include "rbcssl/errors.hpp"

namespace rbc {

FloatImage to_float(const RgbImage& img) {
  FloatImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.data[i] = img.pixels[i] / 255.0f;
  return out;
}

RgbImage to_rgb8(const FloatImage& img) {
  RgbImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.pixels[i] = static_cast<std::uint8_t>(
        std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

namespace {

// Parses "P?" header tokens (whitespace and # comments) and leaves `pos` at the
// first raster byte.
struct PnmHeader {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t raster_offset = 0;
};

PnmHeader parse_pnm_header(std::string_view bytes, const std::string& origin) {
  PnmHeader h;
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw InputError(origin + ": truncated PNM header");
    return std::string(bytes.substr(start, pos - start));
  };
  auto number = [&] {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }))
      throw InputError(origin + ": malformed PNM header field '" + t + "'");
    return static_cast<std::size_t>(std::stoull(t));
  };
  h.magic = token();
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (pos >= bytes.size()) throw InputError(origin + ": missing PNM raster");
  h.raster_offset = pos + 1;  // exactly one whitespace byte
  if (h.width == 0 || h.height == 0) throw InputError(origin + ": zero image extent");
  if (h.maxval == 0 || h.maxval > 65535) throw InputError(origin + ": bad maxval");
  return h;
}

}  // namespace

std::string encode_ppm(const RgbImage& img) {
  std::ostringstream os;
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string out = os.str();
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

RgbImage decode_ppm(std::string_view bytes, const std::string& origin) {
  const PnmHeader h = parse_pnm_header(bytes, origin);
  if (h.magic != "P6") throw InputError(origin + ": not a binary PPM (P6)");
  if (h.maxval != 255) throw InputError(origin + ": only 8-bit PPM is supported");
  RgbImage img(h.width, h.height);
  if (bytes.size() - h.raster_offset < img.pixels.size())
    throw InputError(origin + ": truncated PPM raster");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.raster_offset), img.pixels.size(),
              reinterpret_cast<char*>(img.pixels.data()));
  return img;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  return decode_ppm(read_file(path), path.string());
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  write_file(path, encode_ppm(img));
}

std::string encode_pgm16(const LabelMap& map) {
  std::ostringstream os;
  os << "P5\n" << map.width << ' ' << map.height << "\n65535\n";
  std::string out = os.str();
  out.reserve(out.size() + map.labels.size() * 2);
  for (std::uint16_t v : map.labels) {  // PNM samples are big-endian
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

LabelMap decode_pgm(std::string_view bytes, const std::string& origin) {
  const PnmHeader h = parse_pnm_header(bytes, origin);
  if (h.magic != "P5") throw InputError(origin + ": not a binary PGM (P5)");
  LabelMap map(h.width, h.height);
  const std::size_t bps = h.maxval > 255 ? 2 : 1;
  if (bytes.size() - h.raster_offset < map.labels.size() * bps)
    throw InputError(origin + ": truncated PGM raster");
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + h.raster_offset);
  for (std::size_t i = 0; i < map.labels.size(); ++i)
    map.labels[i] = bps == 2 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1])
                             : raw[i];
  return map;
}

LabelMap read_pgm(const std::filesystem::path& path) {
  return decode_pgm(read_file(path), path.string());
}

void write_pgm16(const std::filesystem::path& path, const LabelMap& map) {
  write_file(path, encode_pgm16(map));
}

namespace {

template <typename Img, typename Get, typename Put>
void bilinear(const Img& src, std::size_t w, std::size_t h, Get get, Put put) {
  const double sx = static_cast<double>(src.width) / static_cast<double>(w);
  const double sy = static_cast<double>(src.height) / static_cast<double>(h);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = get(x0, y0, c) * (1 - tx) + get(x1, y0, c) * tx;
        const double bot = get(x0, y1, c) * (1 - tx) + get(x1, y1, c) * tx;
        put(x, y, c, top * (1 - ty) + bot * ty);
      }
    }
  }
}

void require_extent(std::size_t w, std::size_t h) {
  if (w == 0 || h == 0) throw DimensionError("resize target must be non-empty");
}

}  // namespace

RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height) {
  require_extent(width, height);
  if (img.width == width && img.height == height) return img;
  RgbImage out(width, height);
  bilinear(
      img, width, height, [&](std::size_t x, std::size_t y, std::size_t c) { return double(img.at(x, y, c)); },
      [&](std::size_t x, std::size_t y, std::size_t c, double v) {
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      });
  return out;
}

FloatImage resize_bilinear(const FloatImage& img, std::size_t width, std::size_t height) {
  require_extent(width, height);
  if (img.width == width && img.height == height) return img;
  FloatImage out(width, height);
  bilinear(
      img, width, height, [&](std::size_t x, std::size_t y, std::size_t c) { return double(img.at(x, y, c)); },
      [&](std::size_t x, std::size_t y, std::size_t c, double v) {
        out.at(x, y, c) = static_cast<float>(v);
      });
  return out;
}

RgbImage resize_nearest(const RgbImage& img, std::size_t width, std::size_t height) {
  require_extent(width, height);
  RgbImage out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * img.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * img.width / width;
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

namespace {
template <typename Img>
Img crop_impl(const Img& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0 || x0 + w > img.width || y0 + h > img.height)
    throw DimensionError("crop rectangle outside image");
  Img out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  return out;
}
}  // namespace

RgbImage crop(const RgbImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  return crop_impl(img, x0, y0, w, h);
}

FloatImage crop(const FloatImage& img, std::size_t x0, std::size_t y0, std::size_t w,
                std::size_t h) {
  return crop_impl(img, x0, y0, w, h);
}

}  // namespace rbc
