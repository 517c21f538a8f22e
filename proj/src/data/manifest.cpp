#include "rbcssl/manifest.hpp"

#include "rbcssl/csv.hpp"
#include "rbcssl/errors.hpp"

namespace rbc {

SampleKind parse_sample_kind(const std::string& text) {
  if (text == "patch") return SampleKind::Patch;
  if (text == "cell") return SampleKind::Cell;
  throw InputError("unknown sample kind '" + text + "' (expected patch|cell)");
}

std::string to_string(SampleKind kind) { return kind == SampleKind::Patch ? "patch" : "cell"; }

SampleManifest SampleManifest::read(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cp = t.column("path"), ck = t.column("kind"), cs = t.column("source_id"),
                    cl = t.column("label");
  SampleManifest m;
  m.base_dir = path.parent_path();
  for (const auto& row : t.rows) {
    ManifestRecord r;
    r.path = row[cp];
    r.kind = parse_sample_kind(row[ck]);
    r.source_id = row[cs];
    if (r.source_id.empty()) throw InputError(path.string() + ": empty source_id for " + r.path);
    if (!row[cl].empty()) r.label = row[cl];
    m.records.push_back(std::move(r));
  }
  return m;
}

void SampleManifest::write(const std::filesystem::path& path) const {
  CsvTable t;
  t.header = {"path", "kind", "source_id", "label"};
  for (const auto& r : records)
    t.rows.push_back({r.path, to_string(r.kind), r.source_id, r.label.value_or("")});
  write_csv(path, t);
}

std::filesystem::path SampleManifest::resolve(const ManifestRecord& rec) const {
  std::filesystem::path p(rec.path);
  return p.is_absolute() ? p : base_dir / p;
}

void SampleManifest::validate_for_training() const {
  if (records.empty()) throw InputError("manifest has no samples");
  for (const auto& r : records) {
    if (r.kind != records.front().kind)
      throw InputError("manifest mixes patch and cell samples; one kind per training run");
    if (!std::filesystem::exists(resolve(r)))
      throw IoError("manifest entry not found: " + resolve(r).string());
  }
}

}  // namespace rbc
