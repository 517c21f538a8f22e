#include "rbcssl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rbcssl/errors.hpp"

namespace rbc {

std::vector<Patch> patchify(const RgbImage& img, std::size_t patch) {
  if (img.width == 0 || img.height == 0) throw InputError("cannot patchify an empty image");
  if (patch == 0) throw ParameterError("patch size must be positive");
  RgbImage src = img;
  double factor = 1.0;
  const std::size_t shorter = std::min(img.width, img.height);
  if (shorter < patch) {
    factor = static_cast<double>(patch) / static_cast<double>(shorter);
    std::size_t w = static_cast<std::size_t>(std::lround(img.width * factor));
    std::size_t h = static_cast<std::size_t>(std::lround(img.height * factor));
    // The shorter side lands on `patch` exactly regardless of rounding.
    (img.width <= img.height ? w : h) = patch;
    src = resize_bilinear(img, w, h);
  }
  std::vector<Patch> out;
  for (std::size_t gy = 0; gy < src.height / patch; ++gy)
    for (std::size_t gx = 0; gx < src.width / patch; ++gx)
      out.push_back({crop(src, gx * patch, gy * patch, patch, patch), gx * patch, gy * patch, factor});
  return out;
}

std::array<std::uint8_t, 3> median_border_color(const RgbImage& img) {
  std::array<std::vector<std::uint8_t>, 3> ch;
  auto take = [&](std::size_t x, std::size_t y) {
    for (std::size_t c = 0; c < 3; ++c) ch[c].push_back(img.at(x, y, c));
  };
  for (std::size_t x = 0; x < img.width; ++x) {
    take(x, 0);
    if (img.height > 1) take(x, img.height - 1);
  }
  for (std::size_t y = 1; y + 1 < img.height; ++y) {
    take(0, y);
    if (img.width > 1) take(img.width - 1, y);
  }
  std::array<std::uint8_t, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    auto& v = ch[c];
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    out[c] = v[v.size() / 2];
  }
  return out;
}

CellCropResult extract_cells(const RgbImage& img, const LabelMap& mask,
                             const CellCropOptions& opts) {
  if (mask.width != img.width || mask.height != img.height)
    throw DimensionError("mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                         " does not match image " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));
  if (opts.output_size == 0) throw ParameterError("cell crop output size must be positive");
  struct Acc {
    BoundingBox box{~std::size_t{0}, ~std::size_t{0}, 0, 0};
    std::size_t pixels = 0;
  };
  std::map<std::uint16_t, Acc> cells;
  for (std::size_t y = 0; y < mask.height; ++y)
    for (std::size_t x = 0; x < mask.width; ++x) {
      const std::uint16_t l = mask.at(x, y);
      if (l == 0) continue;
      Acc& a = cells[l];
      a.box.x0 = std::min(a.box.x0, x);
      a.box.y0 = std::min(a.box.y0, y);
      a.box.x1 = std::max(a.box.x1, x);
      a.box.y1 = std::max(a.box.y1, y);
      ++a.pixels;
    }
  CellCropResult result;
  if (cells.empty()) return result;
  const auto fill = median_border_color(img);
  for (const auto& [label, acc] : cells) {
    if (acc.pixels < opts.min_pixels) {
      ++result.skipped_small;
      continue;
    }
    const BoundingBox& b = acc.box;
    const double bw = static_cast<double>(b.x1 - b.x0 + 1), bh = static_cast<double>(b.y1 - b.y0 + 1);
    const auto grow_x = static_cast<std::ptrdiff_t>(std::lround(bw * opts.margin));
    const auto grow_y = static_cast<std::ptrdiff_t>(std::lround(bh * opts.margin));
    const auto x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(b.x0) - grow_x));
    const auto y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(b.y0) - grow_y));
    const std::size_t x1 = std::min(img.width - 1, b.x1 + static_cast<std::size_t>(grow_x));
    const std::size_t y1 = std::min(img.height - 1, b.y1 + static_cast<std::size_t>(grow_y));
    const RgbImage region = crop(img, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    const std::size_t side = std::max(region.width, region.height);
    RgbImage square(side, side);
    for (std::size_t i = 0; i < side * side; ++i)
      for (std::size_t c = 0; c < 3; ++c) square.pixels[i * 3 + c] = fill[c];
    const std::size_t ox = (side - region.width) / 2, oy = (side - region.height) / 2;
    for (std::size_t y = 0; y < region.height; ++y)
      for (std::size_t x = 0; x < region.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) square.at(ox + x, oy + y, c) = region.at(x, y, c);
    result.crops.push_back({label, b, resize_bilinear(square, opts.output_size, opts.output_size)});
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<Augmentation> CropSpec::default_augmentations() {
  return {{"hflip", 0.5, 0.0},       {"vflip", 0.5, 0.0},     {"color_jitter", 0.8, 0.4},
          {"grayscale", 0.2, 0.0},   {"blur", 0.5, 1.0},      {"solarize", 0.2, 0.5}};
}

std::vector<Augmentation> CropSpec::parse_augmentations(const std::string& text) {
  std::vector<Augmentation> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::stringstream is(item);
    std::string name, p, m;
    if (!std::getline(is, name, ':') || !std::getline(is, p, ':'))
      throw ParameterError("augmentation '" + item + "' is not name:probability[:magnitude]");
    std::getline(is, m, ':');
    Augmentation a{name, 0.0, 0.0};
    try {
      a.probability = std::stod(p);
      a.magnitude = m.empty() ? 0.0 : std::stod(m);
    } catch (const std::exception&) {
      throw ParameterError("augmentation '" + item + "' has a non-numeric field");
    }
    out.push_back(a);
  }
  return out;
}

std::string CropSpec::format_augmentations(const std::vector<Augmentation>& augs) {
  if (augs.empty()) return "none";
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < augs.size(); ++i)
    os << (i ? "," : "") << augs[i].name << ':' << augs[i].probability << ':' << augs[i].magnitude;
  return os.str();
}

void CropSpec::validate() const {
  if (global_crops < 2) throw ParameterError("crop.global_crops must be >= 2");
  if (global_size == 0 || local_size == 0) throw ParameterError("crop sizes must be positive");
  auto check_range = [](double lo, double hi, const char* what) {
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0))
      throw ParameterError(std::string(what) + " scale range must satisfy 0 < min <= max <= 1");
  };
  check_range(global_scale_min, global_scale_max, "crop.global");
  if (local_crops > 0) check_range(local_scale_min, local_scale_max, "crop.local");
  for (const auto& a : augmentations) {
    static const char* kKnown[] = {"hflip", "vflip", "color_jitter", "grayscale", "blur", "solarize"};
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return a.name == k; }) ==
        std::end(kKnown))
      throw ParameterError("unknown augmentation '" + a.name + "'");
    if (!(a.probability >= 0.0 && a.probability <= 1.0))
      throw ParameterError("augmentation probability must lie in [0, 1]");
    if (!(a.magnitude >= 0.0)) throw ParameterError("augmentation magnitude must be >= 0");
  }
}

FloatImage random_resized_crop(const FloatImage& img, std::size_t size, double scale_min,
                               double scale_max, Rng& rng) {
  if (scale_min == 1.0 && scale_max == 1.0) return resize_bilinear(img, size, size);
  const double area = static_cast<double>(img.width * img.height);
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * uniform(rng, scale_min, scale_max);
    const double ratio = std::exp(uniform(rng, log_lo, log_hi));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / ratio)));
    if (w == 0 || h == 0 || w > img.width || h > img.height) continue;
    const auto x0 = static_cast<std::size_t>(uniform(rng) * static_cast<double>(img.width - w + 1));
    const auto y0 = static_cast<std::size_t>(uniform(rng) * static_cast<double>(img.height - h + 1));
    return resize_bilinear(crop(img, std::min(x0, img.width - w), std::min(y0, img.height - h), w, h),
                           size, size);
  }
  return resize_bilinear(img, size, size);
}

namespace {

void clamp01(FloatImage& img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

void gaussian_blur(FloatImage& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;
  const auto w = static_cast<std::ptrdiff_t>(img.width), h = static_cast<std::ptrdiff_t>(img.height);
  FloatImage tmp = img;
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * img.at(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x + i, 0, w - 1)),
                                        static_cast<std::size_t>(y), c);
        tmp.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = static_cast<float>(acc);
      }
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(static_cast<std::size_t>(x),
                                        static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y + i, 0, h - 1)), c);
        img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = static_cast<float>(acc);
      }
}

float luma(const FloatImage& img, std::size_t i) {
  return 0.299f * img.data[3 * i] + 0.587f * img.data[3 * i + 1] + 0.114f * img.data[3 * i + 2];
}

}  // namespace

void apply_augmentation(FloatImage& img, const Augmentation& aug, Rng& rng) {
  // The coin is always drawn so the stream position does not depend on outcomes.
  const bool fire = uniform(rng) < aug.probability;
  const std::size_t n = img.width * img.height;
  if (aug.name == "hflip") {
    if (!fire) return;
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width / 2; ++x)
        for (std::size_t c = 0; c < 3; ++c) std::swap(img.at(x, y, c), img.at(img.width - 1 - x, y, c));
  } else if (aug.name == "vflip") {
    if (!fire) return;
    for (std::size_t y = 0; y < img.height / 2; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) std::swap(img.at(x, y, c), img.at(x, img.height - 1 - y, c));
  } else if (aug.name == "color_jitter") {
    const double m = aug.magnitude;
    const double brightness = uniform(rng, 1.0 - m, 1.0 + m);
    const double contrast = uniform(rng, 1.0 - m, 1.0 + m);
    const double saturation = uniform(rng, 1.0 - m, 1.0 + m);
    std::array<double, 3> shift{};
    for (double& s : shift) s = uniform(rng, -0.25 * m, 0.25 * m);  // per-channel stain shift
    if (!fire) return;
    for (float& v : img.data) v = static_cast<float>(v * brightness);
    clamp01(img);
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += luma(img, i);
    mean /= static_cast<double>(n);
    for (float& v : img.data) v = static_cast<float>(mean + (v - mean) * contrast);
    clamp01(img);
    for (std::size_t i = 0; i < n; ++i) {
      const float g = luma(img, i);
      for (std::size_t c = 0; c < 3; ++c)
        img.data[3 * i + c] = static_cast<float>(g + (img.data[3 * i + c] - g) * saturation + shift[c]);
    }
  } else if (aug.name == "grayscale") {
    if (!fire) return;
    for (std::size_t i = 0; i < n; ++i) {
      const float g = luma(img, i);
      for (std::size_t c = 0; c < 3; ++c) img.data[3 * i + c] = g;
    }
  } else if (aug.name == "blur") {
    const double sigma = uniform(rng, 0.1, std::max(0.1, aug.magnitude));
    if (!fire) return;
    gaussian_blur(img, sigma);
  } else if (aug.name == "solarize") {
    if (!fire) return;
    for (float& v : img.data)
      if (v >= aug.magnitude) v = 1.0f - v;
  } else {
    throw ParameterError("unknown augmentation '" + aug.name + "'");
  }
  clamp01(img);
}

std::vector<FloatImage> multicrop(const FloatImage& img, const CropSpec& spec, Rng& rng) {
  std::vector<FloatImage> views;
  auto emit = [&](std::size_t size, double lo, double hi) {
    FloatImage v = random_resized_crop(img, size, lo, hi, rng);
    for (const auto& aug : spec.augmentations) apply_augmentation(v, aug, rng);
    clamp01(v);
    views.push_back(std::move(v));
  };
  for (std::size_t i = 0; i < spec.global_crops; ++i)
    emit(spec.global_size, spec.global_scale_min, spec.global_scale_max);
  for (std::size_t i = 0; i < spec.local_crops; ++i)
    emit(spec.local_size, spec.local_scale_min, spec.local_scale_max);
  return views;
}

Tensor pack_images(const std::vector<FloatImage>& images) {
  if (images.empty()) throw DimensionError("no images to pack");
  const std::size_t w = images.front().width, h = images.front().height;
  std::vector<float> data;
  data.reserve(images.size() * w * h * 3);
  for (const auto& im : images) {
    if (im.width != w || im.height != h) throw DimensionError("images differ in size");
    data.insert(data.end(), im.data.begin(), im.data.end());
  }
  return Tensor::from({images.size(), h, w, 3}, std::move(data));
}

}  // namespace rbc
