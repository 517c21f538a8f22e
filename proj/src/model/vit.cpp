#include "rbcssl/vit.hpp"

#include <cmath>
#include <string>

#include "rbcssl/errors.hpp"
#include "rbcssl/rng.hpp"

namespace rbc {

void VitConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || embed_dim == 0 || depth == 0 || heads == 0 ||
      in_channels == 0)
    throw ParameterError("vit extents must be positive");
  if (image_size % patch_size != 0)
    throw ParameterError("image_size " + std::to_string(image_size) +
                         " is not divisible by patch_size " + std::to_string(patch_size));
  if (embed_dim % heads != 0)
    throw ParameterError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                         std::to_string(heads));
  if (!(mlp_ratio > 0.0)) throw ParameterError("mlp_ratio must be positive");
}

std::size_t VitConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(embed_dim) * mlp_ratio));
}

std::uint64_t VitConfig::parameter_count() const {
  const std::uint64_t d = embed_dim, h = mlp_hidden(), n = num_patches();
  const std::uint64_t stem = patch_dim() * d + d + d /* cls */ + (n + 1) * d;
  const std::uint64_t per_block = 2 * d                 // norm1
                                  + d * 3 * d + 3 * d   // qkv
                                  + d * d + d           // proj
                                  + 2 * d               // norm2
                                  + d * h + h           // fc1
                                  + h * d + d;          // fc2
  return stem + depth * per_block + 2 * d;
}

VitConfig VitConfig::small() { return {224, 14, 384, 12, 6, 4.0, 3}; }
VitConfig VitConfig::base() { return {224, 14, 768, 12, 12, 4.0, 3}; }
VitConfig VitConfig::large() { return {224, 14, 1024, 24, 16, 4.0, 3}; }

namespace {

template <typename T>
BasicTensor<T> trunc_normal(Shape shape, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(truncated_normal(rng, 0.02));
  return BasicTensor<T>::from(std::move(shape), std::move(v));
}

std::string block_name(std::size_t i, const char* leaf) {
  return "blocks." + std::to_string(i) + "." + leaf;
}

}  // namespace

template <typename T>
BasicVitEncoder<T>::BasicVitEncoder(const VitConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_rng(seed, {0x7669u});
  const std::size_t d = cfg_.embed_dim, h = cfg_.mlp_hidden();
  auto zeros = [](Shape s) { return BasicTensor<T>::zeros(std::move(s)); };
  auto ones = [](Shape s) { return BasicTensor<T>::full(std::move(s), T(1)); };

  params_.add("patch_embed.weight", trunc_normal<T>({cfg_.patch_dim(), d}, rng));
  params_.add("patch_embed.bias", zeros({d}));
  {
    std::vector<T> cls(d);
    for (T& x : cls) x = static_cast<T>(normal(rng, 0.0, 0.02));
    params_.add("cls_token", BasicTensor<T>::from({1, d}, std::move(cls)));
  }
  params_.add("pos_embed", trunc_normal<T>({cfg_.num_patches() + 1, d}, rng));
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    params_.add(block_name(i, "norm1.weight"), ones({d}));
    params_.add(block_name(i, "norm1.bias"), zeros({d}));
    params_.add(block_name(i, "attn.qkv.weight"), trunc_normal<T>({d, 3 * d}, rng));
    params_.add(block_name(i, "attn.qkv.bias"), zeros({3 * d}));
    params_.add(block_name(i, "attn.proj.weight"), trunc_normal<T>({d, d}, rng));
    params_.add(block_name(i, "attn.proj.bias"), zeros({d}));
    params_.add(block_name(i, "norm2.weight"), ones({d}));
    params_.add(block_name(i, "norm2.bias"), zeros({d}));
    params_.add(block_name(i, "mlp.fc1.weight"), trunc_normal<T>({d, h}, rng));
    params_.add(block_name(i, "mlp.fc1.bias"), zeros({h}));
    params_.add(block_name(i, "mlp.fc2.weight"), trunc_normal<T>({h, d}, rng));
    params_.add(block_name(i, "mlp.fc2.bias"), zeros({d}));
  }
  params_.add("norm.weight", ones({d}));
  params_.add("norm.bias", zeros({d}));
}

template <typename T>
BasicVitEncoder<T>::BasicVitEncoder(const VitConfig& cfg, ParameterSet<T> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  check_shapes();
}

template <typename T>
void BasicVitEncoder<T>::check_shapes() const {
  // A freshly initialized encoder defines the expected layout.
  const BasicVitEncoder<T> reference(cfg_, 0);
  if (reference.params_.size() != params_.size())
    throw DimensionError("encoder expects " + std::to_string(reference.params_.size()) +
                         " parameter tensors, got " + std::to_string(params_.size()));
  for (const auto& [name, ref] : reference.params_.entries()) {
    if (!params_.contains(name)) throw DimensionError("missing encoder parameter " + name);
    if (params_.get(name).shape() != ref.shape())
      throw DimensionError("encoder parameter " + name + " has shape " +
                           shape_str(params_.get(name).shape()) + ", expected " +
                           shape_str(ref.shape()));
  }
}

template <typename T>
BasicTensor<T> images_to_patches(const BasicTensor<T>& images, std::size_t p) {
  if (images.rank() != 4) throw DimensionError("images must be [B, H, W, C]");
  const std::size_t b = images.dim(0), hgt = images.dim(1), wid = images.dim(2),
                    c = images.dim(3);
  if (hgt % p != 0 || wid % p != 0) throw DimensionError("image not divisible into patches");
  const std::size_t gh = hgt / p, gw = wid / p, pd = p * p * c;
  std::vector<T> out(b * gh * gw * pd);
  const auto src = images.data();
  std::size_t o = 0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t gy = 0; gy < gh; ++gy)
      for (std::size_t gx = 0; gx < gw; ++gx)
        for (std::size_t dy = 0; dy < p; ++dy) {
          const std::size_t row = ((n * hgt + gy * p + dy) * wid + gx * p) * c;
          for (std::size_t k = 0; k < p * c; ++k) out[o++] = src[row + k];
        }
  return BasicTensor<T>::from({b, gh * gw, pd}, std::move(out));
}

template <typename T>
BasicTensor<T> BasicVitEncoder<T>::patch_embed(const BasicTensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.image_size ||
      images.dim(2) != cfg_.image_size || images.dim(3) != cfg_.in_channels)
    throw DimensionError("encoder expects [B, " + std::to_string(cfg_.image_size) + ", " +
                         std::to_string(cfg_.image_size) + ", " +
                         std::to_string(cfg_.in_channels) + "] images, got " +
                         shape_str(images.shape()));
  const auto patches = images_to_patches(images, cfg_.patch_size);
  return add(matmul(patches, params_.get("patch_embed.weight")), params_.get("patch_embed.bias"));
}

template <typename T>
BasicTensor<T> BasicVitEncoder<T>::attention(const BasicTensor<T>& x, std::size_t i,
                                             BasicTensor<T>* weights) const {
  const std::size_t b = x.dim(0), n = x.dim(1), d = cfg_.embed_dim, h = cfg_.heads,
                    dh = cfg_.head_dim();
  auto qkv = add(matmul(x, params_.get(block_name(i, "attn.qkv.weight"))),
                 params_.get(block_name(i, "attn.qkv.bias")));
  // [B, N, 3, H, dh] -> [3, B, H, N, dh]
  qkv = permute(reshape(qkv, {b, n, 3, h, dh}), {2, 0, 3, 1, 4});
  auto part = [&](std::size_t j) { return reshape(slice(qkv, 0, j, j + 1), {b, h, n, dh}); };
  const auto q = part(0), k = part(1), v = part(2);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  const auto attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt), 3);
  if (weights) *weights = attn;
  auto ctx = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {b, n, d});
  return add(matmul(ctx, params_.get(block_name(i, "attn.proj.weight"))),
             params_.get(block_name(i, "attn.proj.bias")));
}

template <typename T>
BasicTensor<T> BasicVitEncoder<T>::block(const BasicTensor<T>& x, std::size_t i) const {
  const T eps = static_cast<T>(kNormEps);
  auto y = layernorm(x, params_.get(block_name(i, "norm1.weight")),
                     params_.get(block_name(i, "norm1.bias")), eps);
  auto out = add(x, attention(y, i));
  y = layernorm(out, params_.get(block_name(i, "norm2.weight")),
                params_.get(block_name(i, "norm2.bias")), eps);
  y = gelu(add(matmul(y, params_.get(block_name(i, "mlp.fc1.weight"))),
               params_.get(block_name(i, "mlp.fc1.bias"))));
  y = add(matmul(y, params_.get(block_name(i, "mlp.fc2.weight"))),
          params_.get(block_name(i, "mlp.fc2.bias")));
  return add(out, y);
}

template <typename T>
BasicTensor<T> BasicVitEncoder<T>::forward_tokens(const BasicTensor<T>& images) const {
  const std::size_t b = images.rank() > 0 ? images.dim(0) : 0;
  auto tokens = patch_embed(images);
  auto cls = expand(params_.get("cls_token"), b);  // [B, 1, D]
  auto x = add(concat<T>({cls, tokens}, 1), params_.get("pos_embed"));
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    x = block(x, i);
    check_finite(x, "encoder block " + std::to_string(i) + " output");
  }
  return layernorm(x, params_.get("norm.weight"), params_.get("norm.bias"),
                   static_cast<T>(kNormEps));
}

template <typename T>
BasicTensor<T> BasicVitEncoder<T>::forward(const BasicTensor<T>& images) const {
  const auto tokens = forward_tokens(images);
  return reshape(slice(tokens, 1, 0, 1), {tokens.dim(0), cfg_.embed_dim});
}

template class BasicVitEncoder<float>;
template class BasicVitEncoder<double>;
template BasicTensor<float> images_to_patches(const BasicTensor<float>&, std::size_t);
template BasicTensor<double> images_to_patches(const BasicTensor<double>&, std::size_t);

}  // namespace rbc
