#include "rbcssl/checkpoint.hpp"

#include "rbcssl/binary_io.hpp"

namespace rbc {

namespace {
constexpr std::string_view kMagic = "RDCK";
}

ParameterSet<float> Checkpoint::section(const std::string& prefix) const {
  ParameterSet<float> out;
  for (const auto& [name, t] : blobs.entries())
    if (name.starts_with(prefix)) out.add(name.substr(prefix.size()), t);
  return out;
}

void Checkpoint::add_section(const std::string& prefix, const ParameterSet<float>& params) {
  for (const auto& [name, t] : params.entries()) blobs.add(prefix + name, t.detach());
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kMagic);
  w.le<std::uint16_t>(Checkpoint::kVersion);
  const VitConfig& v = ckpt.vit;
  for (std::size_t x : {v.image_size, v.patch_size, v.embed_dim, v.depth, v.heads, v.in_channels})
    w.le<std::uint32_t>(static_cast<std::uint32_t>(x));
  w.le<double>(v.mlp_ratio);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, t] : ckpt.blobs.entries()) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(e));
    w.f32_array(t.data());
  }
  return w.str();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.bytes(kMagic.size()) != kMagic) throw InputError(origin + ": not an RDCK checkpoint");
  const auto version = r.le<std::uint16_t>();
  if (version != Checkpoint::kVersion)
    throw InputError(origin + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  VitConfig& v = ckpt.vit;
  for (std::size_t* x : {&v.image_size, &v.patch_size, &v.embed_dim, &v.depth, &v.heads,
                         &v.in_channels})
    *x = r.le<std::uint32_t>();
  v.mlp_ratio = r.le<double>();
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint32_t>();
    std::string name(r.bytes(len));
    const auto rank = r.le<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = r.le<std::uint32_t>();
    auto values = r.f32_array(shape_numel(shape));
    ckpt.blobs.add(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw InputError(origin + ": trailing bytes after last blob");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

VitEncoder load_encoder(const Checkpoint& ckpt) {
  auto teacher = ckpt.section("teacher.backbone.");
  if (teacher.size() > 0) return VitEncoder(ckpt.vit, std::move(teacher));
  return VitEncoder(ckpt.vit, ckpt.blobs.clone());
}

}  // namespace rbc
