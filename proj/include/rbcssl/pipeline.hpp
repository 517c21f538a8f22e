#pragma once

// Sample extraction (smear patches, single-cell crops) and multi-crop views.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rbcssl/image.hpp"
#include "rbcssl/rng.hpp"
#include "rbcssl/tensor.hpp"

namespace rbc {

struct Patch {
  RgbImage image;
  std::size_t x = 0;   // origin in the (possibly upscaled) smear
  std::size_t y = 0;
  double scale = 1.0;  // factor applied to the smear before tiling
};

/// Non-overlapping square tiles. A smear whose shorter side is below `patch`
/// is first upscaled by a single factor (aspect ratio kept) so that side equals
/// `patch`; the grid floor(H'/patch) × floor(W'/patch) is then cut and the
/// right/bottom remainders are dropped.
std::vector<Patch> patchify(const RgbImage& img, std::size_t patch = 224);

struct CellCropOptions {
  double margin = 0.12;         // bounding-box growth per side, fraction of box extent
  std::size_t output_size = 224;
  std::size_t min_pixels = 16;  // smaller labels are skipped
};

struct BoundingBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive
  bool operator==(const BoundingBox&) const = default;
};

struct CellCrop {
  std::uint16_t label = 0;
  BoundingBox tight;
  RgbImage image;
};

struct CellCropResult {
  std::vector<CellCrop> crops;  // ordered by label
  std::size_t skipped_small = 0;
};

/// One square crop per labelled cell of `mask`: tight box, grown by the margin
/// and clamped, padded to a square with the image's median border colour, and
/// resized to the output size.
CellCropResult extract_cells(const RgbImage& img, const LabelMap& mask,
                             const CellCropOptions& opts = {});

/// Per-channel median over the outermost pixel ring.
std::array<std::uint8_t, 3> median_border_color(const RgbImage& img);

struct Augmentation {
  std::string name;          // hflip | vflip | color_jitter | grayscale | blur | solarize
  double probability = 0.0;
  double magnitude = 0.0;    // jitter strength, blur sigma (px), or solarize threshold
};

struct CropSpec {
  std::size_t global_crops = 2;
  std::size_t global_size = 224;
  double global_scale_min = 0.32;
  double global_scale_max = 1.0;
  std::size_t local_crops = 0;
  std::size_t local_size = 224;
  double local_scale_min = 0.05;
  double local_scale_max = 0.32;
  std::vector<Augmentation> augmentations = default_augmentations();

  static std::vector<Augmentation> default_augmentations();
  /// "name:probability:magnitude" entries joined by commas.
  static std::vector<Augmentation> parse_augmentations(const std::string& text);
  static std::string format_augmentations(const std::vector<Augmentation>& augs);

  void validate() const;
};

/// Global views first, then local views; every pixel in [0, 1].
std::vector<FloatImage> multicrop(const FloatImage& img, const CropSpec& spec, Rng& rng);

/// Random-resized crop: area fraction in [scale_min, scale_max], aspect ratio
/// log-uniform in [3/4, 4/3], ten attempts then the whole image.
FloatImage random_resized_crop(const FloatImage& img, std::size_t size, double scale_min,
                               double scale_max, Rng& rng);

void apply_augmentation(FloatImage& img, const Augmentation& aug, Rng& rng);

/// Stacks equally sized images into a [B, H, W, 3] tensor.
Tensor pack_images(const std::vector<FloatImage>& images);

}  // namespace rbc
