#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "rbcssl/errors.hpp"
#include "rbcssl/eval.hpp"
#include "rbcssl/log.hpp"
#include "rbcssl/rng.hpp"

namespace rbc {

PcaResult principal_components(const std::vector<double>& x, std::size_t n, std::size_t d, std::size_t count,
                               double tol, std::size_t max_iter) {
  if (x.size() != n * d) throw DimensionError("PCA input holds " + std::to_string(x.size()) + " values, expected n*d");
  if (n < 3 || n < count) throw ProtocolError("PCA needs at least 3 tokens, got " + std::to_string(n));
  if (count > d) throw ProtocolError("PCA asked for more components than dimensions");
  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  const auto ni = static_cast<Eigen::Index>(n), di = static_cast<Eigen::Index>(d);
  const Mat data = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data(), ni, di);
  const Vec mean = data.colwise().mean().transpose();
  const Mat centered = data.rowwise() - mean.transpose();
  const Mat cov = centered.transpose() * centered / static_cast<double>(n - 1);

  PcaResult out;
  out.dim = d;
  out.mean.assign(mean.data(), mean.data() + d);
  Mat deflated = cov;
  std::vector<Vec> found;
  Rng rng = make_rng(0x9cau);
  for (std::size_t c = 0; c < count; ++c) {
    Vec v(di);
    for (Eigen::Index j = 0; j < di; ++j) v(j) = normal(rng);
    auto orthogonalize = [&](Vec& u) {
      for (const auto& f : found) u -= f.dot(u) * f;
    };
    orthogonalize(v);
    v.normalize();
    bool converged = false;
    for (std::size_t it = 0; it < max_iter; ++it) {
      Vec w = deflated * v;
      orthogonalize(w);
      const double norm = w.norm();
      if (!(norm > 0)) {
        converged = true;  // remaining spectrum is zero; any orthogonal direction works
        break;
      }
      w /= norm;
      if (w.dot(v) < 0) w = -w;
      const double change = (w - v).norm();
      v = std::move(w);
      if (change < tol) {
        converged = true;
        break;
      }
    }
    if (!converged) log_warn("power iteration for component " + std::to_string(c) + " did not reach tolerance");
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const double lambda = v.dot(cov * v);
    deflated -= lambda * v * v.transpose();
    out.components.insert(out.components.end(), v.data(), v.data() + d);
    out.explained.push_back(lambda);
    found.push_back(std::move(v));
  }
  out.projections.resize(n * count);
  for (std::size_t c = 0; c < count; ++c) {
    const Vec proj = centered * found[c];
    for (std::size_t i = 0; i < n; ++i) out.projections[i * count + c] = proj(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<double> patch_token_features(const VitEncoder& encoder, const FloatImage& image) {
  const auto& cfg = encoder.config();
  if (image.width != cfg.image_size || image.height != cfg.image_size)
    throw DimensionError("PCA map input is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                         ", encoder expects " + std::to_string(cfg.image_size));
  NoGradScope<float> no_grad;
  const Tensor tokens = encoder.forward_tokens(Tensor::from({1, cfg.image_size, cfg.image_size, 3}, image.data));
  const auto v = tokens.data();
  const std::size_t d = cfg.embed_dim;
  return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(d), v.end());  // drop CLS
}

RgbImage pca_map(const VitEncoder& encoder, const FloatImage& image, PcaResult* result) {
  const auto& cfg = encoder.config();
  const std::size_t n = cfg.num_patches(), g = cfg.grid();
  if (n < 3) throw ProtocolError("PCA map needs at least 3 patch tokens, encoder yields " + std::to_string(n));
  const auto feats = patch_token_features(encoder, image);
  PcaResult pca = principal_components(feats, n, cfg.embed_dim, 3);
  RgbImage small(g, g);
  for (std::size_t c = 0; c < 3; ++c) {
    double lo = pca.projections[c], hi = lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, pca.projections[i * 3 + c]);
      hi = std::max(hi, pca.projections[i * 3 + c]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double t = hi > lo ? (pca.projections[i * 3 + c] - lo) / (hi - lo) : 0.0;
      small.at(i % g, i / g, c) = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
  }
  if (result) *result = std::move(pca);
  return resize_nearest(small, image.width, image.height);
}

}  // namespace rbc
