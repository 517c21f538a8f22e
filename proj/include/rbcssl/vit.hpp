#pragma once

#include <cstddef>
#include <cstdint>

#include "rbcssl/params.hpp"
#include "rbcssl/tensor.hpp"

namespace rbc {

struct VitConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  std::size_t in_channels = 3;

  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * in_channels; }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t mlp_hidden() const;

  /// Closed-form count of scalar parameters of the encoder described by this config.
  std::uint64_t parameter_count() const;

  // Published size points (224 px input, patch 14); used for arithmetic only.
  static VitConfig small();
  static VitConfig base();
  static VitConfig large();

  bool operator==(const VitConfig&) const = default;
};

/// Layernorm / l2-normalize stabilizer used throughout.
inline constexpr double kNormEps = 1e-6;

/// Vision transformer with learned absolute positions and CLS pooling.
/// Images are [B, H, W, C] tensors with values in [0, 1].
template <typename T>
class BasicVitEncoder {
 public:
  /// Fresh encoder: truncated-normal(0.02) projections, zero biases, unit norm gains.
  BasicVitEncoder(const VitConfig& cfg, std::uint64_t seed);
  /// Encoder over existing parameters (checkpoint load); names and shapes are validated.
  BasicVitEncoder(const VitConfig& cfg, ParameterSet<T> params);

  const VitConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// [B, H, W, C] -> [B, N, D] linear patch projection.
  BasicTensor<T> patch_embed(const BasicTensor<T>& images) const;
  /// Multi-head self-attention of block `block` on [B, N, D]. When `weights` is
  /// given it receives the [B, heads, N, N] attention matrix.
  BasicTensor<T> attention(const BasicTensor<T>& tokens, std::size_t block,
                           BasicTensor<T>* weights = nullptr) const;
  /// All tokens after the final layernorm, [B, 1 + N, D]; row 0 is CLS.
  BasicTensor<T> forward_tokens(const BasicTensor<T>& images) const;
  /// CLS embedding, [B, D].
  BasicTensor<T> forward(const BasicTensor<T>& images) const;

 private:
  BasicTensor<T> block(const BasicTensor<T>& x, std::size_t index) const;
  void check_shapes() const;

  VitConfig cfg_;
  ParameterSet<T> params_;
};

using VitEncoder = BasicVitEncoder<float>;

/// Rearranges [B, H, W, C] images into [B, N, P*P*C] patch rows (row-major grid,
/// each patch flattened as (dy, dx, c)). Not differentiable.
template <typename T>
BasicTensor<T> images_to_patches(const BasicTensor<T>& images, std::size_t patch_size);

}  // namespace rbc
