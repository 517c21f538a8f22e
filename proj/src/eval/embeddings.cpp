#include <cmath>

#include "rbcssl/binary_io.hpp"
#include "rbcssl/csv.hpp"
#include "rbcssl/errors.hpp"
#include "rbcssl/eval.hpp"

namespace rbc {

void EmbeddingSet::add_row(std::span<const float> values, EmbeddingRecord rec) {
  if (records.empty() && data.empty() && dim == 0) dim = values.size();
  if (values.size() != dim)
    throw DimensionError("embedding row has " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(dim));
  data.insert(data.end(), values.begin(), values.end());
  records.push_back(std::move(rec));
}

EmbeddingSet EmbeddingSet::subset(const std::vector<std::size_t>& rows) const {
  EmbeddingSet out;
  out.dim = dim;
  out.data.reserve(rows.size() * dim);
  for (std::size_t r : rows) {
    if (r >= size()) throw DimensionError("embedding row index out of range");
    auto v = row(r);
    out.data.insert(out.data.end(), v.begin(), v.end());
    out.records.push_back(records[r]);
  }
  return out;
}

void EmbeddingSet::validate() const {
  if (data.size() != records.size() * dim)
    throw DimensionError("embedding matrix holds " + std::to_string(data.size()) + " values for " +
                         std::to_string(records.size()) + " rows of dim " + std::to_string(dim));
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i]))
      throw InputError("non-finite embedding value in row " + std::to_string(i / dim));
}

std::string encode_emb1(const EmbeddingSet& set) {
  set.validate();
  ByteWriter w;
  w.bytes("EMB1");
  w.le<std::uint32_t>(static_cast<std::uint32_t>(set.size()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(set.dim));
  w.f32_array(set.data);
  return w.str();
}

EmbeddingSet decode_emb1(std::string_view bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.bytes(4) != "EMB1") throw InputError(origin + ": not an EMB1 file");
  const auto n = r.le<std::uint32_t>();
  const auto d = r.le<std::uint32_t>();
  EmbeddingSet set;
  set.dim = d;
  set.data = r.f32_array(static_cast<std::size_t>(n) * d);
  if (r.remaining() != 0) throw InputError(origin + ": trailing bytes after embedding matrix");
  set.records.resize(n);
  return set;
}

std::filesystem::path sidecar_path(const std::filesystem::path& emb_path) {
  auto p = emb_path;
  p += ".csv";
  return p;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  write_file(path, encode_emb1(set));
  CsvTable meta;
  meta.header = {"row", "id", "source_id", "label"};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& rec = set.records[i];
    meta.rows.push_back({std::to_string(i), rec.id, rec.source_id, rec.label});
  }
  write_csv(sidecar_path(path), meta);
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  EmbeddingSet set = decode_emb1(read_file(path), path.string());
  const auto meta_path = sidecar_path(path);
  const CsvTable meta = read_csv(meta_path);
  const std::size_t c_row = meta.column("row"), c_id = meta.column("id"), c_src = meta.column("source_id"),
                    c_label = meta.column("label");
  if (meta.rows.size() != set.size())
    throw InputError(meta_path.string() + ": " + std::to_string(meta.rows.size()) + " metadata rows for " +
                     std::to_string(set.size()) + " embeddings");
  for (std::size_t i = 0; i < meta.rows.size(); ++i) {
    const auto& row = meta.rows[i];
    if (row[c_row] != std::to_string(i))
      throw InputError(meta_path.string() + ": row " + std::to_string(i) + " has index " + row[c_row]);
    set.records[i] = {row[c_id], row[c_label], row[c_src]};
  }
  set.validate();
  return set;
}

EmbeddingSet embed_images(const VitEncoder& encoder, const std::vector<FloatImage>& images,
                          std::vector<EmbeddingRecord> records, std::size_t batch) {
  if (images.size() != records.size()) throw DimensionError("image count differs from record count");
  if (batch == 0) throw ParameterError("embedding batch size must be >= 1");
  const std::size_t s = encoder.config().image_size;
  EmbeddingSet out;
  out.dim = encoder.config().embed_dim;
  out.data.reserve(images.size() * out.dim);
  NoGradScope<float> no_grad;
  for (std::size_t start = 0; start < images.size(); start += batch) {
    const std::size_t end = std::min(images.size(), start + batch);
    std::vector<float> buf;
    buf.reserve((end - start) * s * s * 3);
    for (std::size_t i = start; i < end; ++i) {
      if (images[i].width != s || images[i].height != s)
        throw DimensionError("image " + records[i].id + " is " + std::to_string(images[i].width) + "x" +
                             std::to_string(images[i].height) + ", encoder expects " + std::to_string(s) + "x" +
                             std::to_string(s));
      buf.insert(buf.end(), images[i].data.begin(), images[i].data.end());
    }
    const Tensor cls = encoder.forward(Tensor::from({end - start, s, s, 3}, std::move(buf)));
    const auto v = cls.data();
    out.data.insert(out.data.end(), v.begin(), v.end());
  }
  out.records = std::move(records);
  out.validate();
  return out;
}

EmbeddingSet embed(const VitEncoder& encoder, const SampleManifest& manifest, std::size_t batch) {
  std::vector<FloatImage> images;
  std::vector<EmbeddingRecord> records;
  for (const auto& rec : manifest.records) {
    const auto path = manifest.resolve(rec);
    images.push_back(to_float(read_ppm(path)));
    records.push_back({rec.path, rec.label.value_or(""), rec.source_id});
  }
  return embed_images(encoder, images, std::move(records), batch);
}

}  // namespace rbc
