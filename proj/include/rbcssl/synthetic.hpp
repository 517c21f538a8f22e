#pragma once

// Deterministic stand-in corpus: smear-like fields of red cells with
// class-dependent morphology and per-source staining shifts.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rbcssl/image.hpp"

namespace rbc {

/// Morphology classes in index order; `classes = n` uses the first n.
const std::vector<std::string>& synthetic_class_names();

inline constexpr std::size_t kRingParasiteClass = 3;

struct CellSpec {
  std::size_t morphology = 0;  // index into synthetic_class_names()
  double cx = 0, cy = 0;       // centre, pixels
  double radius = 10;          // nominal radius, pixels
  double angle = 0;            // orientation, radians
};

/// Per-source acquisition appearance.
struct SourceStyle {
  std::array<double, 3> background{0.86, 0.80, 0.82};
  std::array<double, 3> tint{0, 0, 0};  // additive RGB offset
  double noise = 0.01;                  // per-pixel Gaussian noise stddev
  double illumination = 0.0;            // amplitude of a zero-mean horizontal gradient
};

/// Style of source `s` for a given tint magnitude. Any two sources differ by at
/// least `tint_delta` in some channel of their tint.
SourceStyle source_style(std::size_t s, double tint_delta);

struct RenderedField {
  RgbImage image;
  LabelMap mask;      // cell index (1-based, in CellSpec order); later cells overwrite
  LabelMap parasite;  // 1 where a ring-parasite overlay was drawn
};

RenderedField render_field(std::size_t width, std::size_t height, const std::vector<CellSpec>& cells,
                           const SourceStyle& style, std::uint64_t noise_seed);

struct SyntheticConfig {
  std::size_t n_images = 0;
  std::size_t sources = 1;
  std::size_t classes = 3;
  std::uint64_t seed = 0;
  std::size_t image_size = 32;
  std::size_t cells_per_image = 1;
  double tint_delta = 0.08;

  void validate() const;
};

struct SyntheticSample {
  SmearImage smear;
  LabelMap mask;
  std::string label;
  std::size_t class_index = 0;
  std::size_t source_index = 0;
};

/// Image i has class i mod classes and source (i / classes) mod sources. All
/// cells in an image share its class; the first sits near the centre.
std::vector<SyntheticSample> gen_synthetic(const SyntheticConfig& cfg);

}  // namespace rbc
