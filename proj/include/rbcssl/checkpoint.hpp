#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rbcssl/params.hpp"
#include "rbcssl/vit.hpp"

namespace rbc {

/// RDCK file: magic "RDCK", u16 version, encoder config, then named float32
/// blobs (u32 name length + UTF-8 name, u32 rank, u32 extents, LE floats).
struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  VitConfig vit;
  ParameterSet<float> blobs;

  /// Blobs under `prefix` with the prefix stripped, e.g. "teacher.backbone.".
  ParameterSet<float> section(const std::string& prefix) const;
  void add_section(const std::string& prefix, const ParameterSet<float>& params);
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The evaluation encoder stored in a checkpoint: the teacher backbone of a
/// training checkpoint, or bare encoder blobs.
VitEncoder load_encoder(const Checkpoint& ckpt);

}  // namespace rbc
