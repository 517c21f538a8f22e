#include "rbcssl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rbcssl/errors.hpp"
#include "rbcssl/rng.hpp"

namespace rbc {

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names = {
      "discocyte",  "elliptocyte", "echinocyte",  "ring_parasite",
      "spherocyte", "stomatocyte", "target_cell", "dacrocyte"};
  return names;
}

SourceStyle source_style(std::size_t s, double tint_delta) {
  static const std::array<std::array<double, 3>, 6> kDirections = {{
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {-1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
  SourceStyle style;
  const double reach = tint_delta * static_cast<double>(1 + s / kDirections.size());
  for (std::size_t c = 0; c < 3; ++c) style.tint[c] = reach * kDirections[s % kDirections.size()][c];
  style.noise = 0.01 + 0.01 * static_cast<double>(s % 3);
  style.illumination = 0.03 * static_cast<double>(s % 2);
  return style;
}

namespace {

struct Morphology {
  double a = 1, b = 1;          // semi-axes relative to radius
  double spikes = 0;            // boundary spicule amplitude
  double tail = 0;              // teardrop tail strength
  double pallor = 0.35;         // central brightening
  double pallor_x = 0.45, pallor_y = 0.45;
  double darkness = 0.0;        // overall darkening of the cell body
  bool ring = false;
  bool target_dot = false;
};

Morphology shape_of(std::size_t morphology) {
  Morphology s;
  switch (morphology) {
    case 0: break;                                                              // discocyte
    case 1: s.a = 1.45; s.b = 0.6; s.pallor = 0.2; s.pallor_y = 0.25; break;    // elliptocyte
    case 2: s.spikes = 0.2; s.pallor = 0.0; s.darkness = 0.08; break;           // echinocyte
    case 3: break;                                                              // ring parasite
    case 4: s.a = s.b = 0.75; s.pallor = 0.0; s.darkness = 0.15; break;         // spherocyte
    case 5: s.pallor_x = 0.5; s.pallor_y = 0.12; break;                         // stomatocyte
    case 6: s.target_dot = true; break;                                         // target cell
    case 7: s.tail = 0.7; s.a = 0.9; s.b = 0.8; s.pallor = 0.15; break;         // dacrocyte
    default: throw ParameterError("unknown morphology index");
  }
  if (morphology == kRingParasiteClass) s.ring = true;
  return s;
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

}  // namespace

RenderedField render_field(std::size_t width, std::size_t height, const std::vector<CellSpec>& cells,
                           const SourceStyle& style, std::uint64_t noise_seed) {
  if (width == 0 || height == 0) throw ParameterError("field extents must be positive");
  std::vector<double> rgb(width * height * 3);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) rgb[(y * width + x) * 3 + c] = style.background[c];

  RenderedField out{RgbImage(width, height), LabelMap(width, height), LabelMap(width, height)};
  const std::array<double, 3> body{0.80, 0.42, 0.44};
  const std::array<double, 3> parasite{0.38, 0.16, 0.48};

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const CellSpec& cell = cells[ci];
    const Morphology sh = shape_of(cell.morphology);
    const double ca = std::cos(cell.angle), sa = std::sin(cell.angle);
    const double reach = cell.radius * (std::max(sh.a, sh.b) * (1 + sh.spikes + sh.tail) + 0.2) + 2;
    const auto lo_x = static_cast<std::ptrdiff_t>(std::floor(cell.cx - reach));
    const auto hi_x = static_cast<std::ptrdiff_t>(std::ceil(cell.cx + reach));
    const auto lo_y = static_cast<std::ptrdiff_t>(std::floor(cell.cy - reach));
    const auto hi_y = static_cast<std::ptrdiff_t>(std::ceil(cell.cy + reach));
    for (std::ptrdiff_t py = std::max<std::ptrdiff_t>(0, lo_y);
         py <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(height) - 1, hi_y); ++py)
      for (std::ptrdiff_t px = std::max<std::ptrdiff_t>(0, lo_x);
           px <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(width) - 1, hi_x); ++px) {
        const double dx = px + 0.5 - cell.cx, dy = py + 0.5 - cell.cy;
        const double u = (ca * dx + sa * dy) / (cell.radius * sh.a);
        const double v = (-sa * dx + ca * dy) / (cell.radius * sh.b);
        const double rho = std::hypot(u, v);
        const double phi = std::atan2(v, u);
        double boundary = 1.0 + sh.spikes * std::cos(10.0 * phi);
        if (sh.tail > 0) boundary += sh.tail * std::pow(std::max(0.0, std::cos(phi)), 6.0);
        // Signed distance to the boundary in pixels (approximate).
        const double inside_px = (boundary - rho) * cell.radius * std::min(sh.a, sh.b);
        const double alpha = smoothstep(-0.6, 0.6, inside_px);
        if (alpha <= 0) continue;
        const double r_rel = rho / boundary;
        const double pu = u / sh.pallor_x, pv = v / sh.pallor_y;
        const double pallor = sh.pallor * std::exp(-(pu * pu + pv * pv));
        const double rim = 0.12 * smoothstep(0.6, 1.0, r_rel);  // darker membrane rim
        std::array<double, 3> col{};
        for (std::size_t c = 0; c < 3; ++c) {
          const double base = body[c] * (1.0 - sh.darkness - rim);
          col[c] = base + pallor * (style.background[c] - base);
        }
        if (sh.target_dot) {
          const double dot = std::exp(-(rho * rho) / 0.02);
          for (std::size_t c = 0; c < 3; ++c) col[c] += dot * (body[c] * 0.9 - col[c]);
        }
        bool on_parasite = false;
        if (sh.ring) {
          const double ring = std::exp(-std::pow((rho - 0.32) / 0.07, 2.0));
          const double ddx = u - 0.32, ddy = v;
          const double chromatin = std::exp(-(ddx * ddx + ddy * ddy) / 0.012);
          const double w = std::min(1.0, ring + chromatin);
          for (std::size_t c = 0; c < 3; ++c) col[c] += w * (parasite[c] - col[c]);
          on_parasite = w > 0.35;
        }
        const std::size_t idx = static_cast<std::size_t>(py) * width + static_cast<std::size_t>(px);
        for (std::size_t c = 0; c < 3; ++c) rgb[idx * 3 + c] += alpha * (col[c] - rgb[idx * 3 + c]);
        if (alpha >= 0.5) {
          out.mask.labels[idx] = static_cast<std::uint16_t>(ci + 1);
          out.parasite.labels[idx] = on_parasite ? 1 : 0;
        }
      }
  }

  Rng rng = make_rng(noise_seed, {0x6e6fu});
  std::normal_distribution<double> noise(0.0, style.noise);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double ramp =
          width > 1 ? style.illumination * (2.0 * static_cast<double>(x) / static_cast<double>(width - 1) - 1.0) : 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t i = (y * width + x) * 3 + c;
        const double v = rgb[i] + style.tint[c] + ramp + noise(rng);
        out.image.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  return out;
}

void SyntheticConfig::validate() const {
  if (classes == 0 || classes > synthetic_class_names().size())
    throw ParameterError("synthetic classes must be in [1, 8], got " + std::to_string(classes));
  if (sources == 0) throw ParameterError("synthetic sources must be >= 1");
  if (image_size < 8) throw ParameterError("synthetic image_size must be >= 8");
  if (cells_per_image == 0) throw ParameterError("synthetic cells_per_image must be >= 1");
  if (!(tint_delta >= 0)) throw ParameterError("synthetic tint_delta must be >= 0");
}

std::vector<SyntheticSample> gen_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  std::vector<SyntheticSample> out;
  out.reserve(cfg.n_images);
  const double size = static_cast<double>(cfg.image_size);
  for (std::size_t i = 0; i < cfg.n_images; ++i) {
    const std::size_t cls = i % cfg.classes;
    const std::size_t src = (i / cfg.classes) % cfg.sources;
    Rng rng = make_rng(cfg.seed, {i});
    std::vector<CellSpec> cells;
    const double nominal = size * (cfg.cells_per_image == 1 ? 0.28 : 0.16);
    for (std::size_t c = 0; c < cfg.cells_per_image; ++c) {
      CellSpec cell;
      cell.morphology = cls;
      cell.radius = nominal * uniform(rng, 0.9, 1.1);
      cell.angle = uniform(rng, 0.0, std::numbers::pi);
      if (c == 0) {
        cell.cx = size / 2 + uniform(rng, -0.06, 0.06) * size;
        cell.cy = size / 2 + uniform(rng, -0.06, 0.06) * size;
      } else {
        cell.cx = uniform(rng, 0.1, 0.9) * size;
        cell.cy = uniform(rng, 0.1, 0.9) * size;
      }
      cells.push_back(cell);
    }
    const std::uint64_t noise_seed = rng();
    RenderedField f = render_field(cfg.image_size, cfg.image_size, cells,
                                   source_style(src, cfg.tint_delta), noise_seed);
    SyntheticSample s;
    s.smear.image = std::move(f.image);
    s.smear.source_id = "source" + std::to_string(src);
    s.smear.image_id = "img" + std::to_string(i);
    s.mask = std::move(f.mask);
    s.label = synthetic_class_names()[cls];
    s.class_index = cls;
    s.source_index = src;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rbc
