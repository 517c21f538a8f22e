#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rbc {

enum class SampleKind { Patch, Cell };

SampleKind parse_sample_kind(const std::string& text);
std::string to_string(SampleKind kind);

struct ManifestRecord {
  std::string path;
  SampleKind kind = SampleKind::Patch;
  std::string source_id;
  std::optional<std::string> label;
};

/// CSV `path,kind,source_id,label`; relative paths resolve against the
/// manifest's directory.
struct SampleManifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  static SampleManifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

  std::filesystem::path resolve(const ManifestRecord& rec) const;
  /// Throws unless all records share one kind and every file exists.
  void validate_for_training() const;
};

}  // namespace rbc
