#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rbcssl/image.hpp"
#include "rbcssl/manifest.hpp"
#include "rbcssl/vit.hpp"

namespace rbc {

// ---------------------------------------------------------------- embeddings

struct EmbeddingRecord {
  std::string id;
  std::string label;
  std::string source_id;
};

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<float> data;  // row-major n x dim
  std::vector<EmbeddingRecord> records;

  std::size_t size() const { return records.size(); }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  void add_row(std::span<const float> values, EmbeddingRecord rec);
  EmbeddingSet subset(const std::vector<std::size_t>& rows) const;
  /// Throws on row/metadata count mismatch or non-finite values.
  void validate() const;
};

std::string encode_emb1(const EmbeddingSet& set);
/// Matrix only; metadata comes from the sidecar.
EmbeddingSet decode_emb1(std::string_view bytes, const std::string& origin = "embeddings");
std::filesystem::path sidecar_path(const std::filesystem::path& emb_path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

/// Teacher CLS embedding per manifest row; images must match the encoder
/// resolution.
EmbeddingSet embed(const VitEncoder& encoder, const SampleManifest& manifest, std::size_t batch = 32);
EmbeddingSet embed_images(const VitEncoder& encoder, const std::vector<FloatImage>& images,
                          std::vector<EmbeddingRecord> records, std::size_t batch = 32);

// ------------------------------------------------------------------- metrics

struct Metrics {
  double acc = 0;
  double bacc = 0;
  double wf1 = 0;
};

/// Labels are class indices in [0, n_classes).
Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, std::size_t n_classes);
Metrics compute_metrics(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred);

// --------------------------------------------------------------- classifiers

enum class KnnDistance { Cosine, Euclidean };
KnnDistance parse_knn_distance(const std::string& text);
std::string to_string(KnnDistance d);

struct KnnOptions {
  std::size_t k = 20;
  KnnDistance distance = KnnDistance::Cosine;
};

struct LinearProbeOptions {
  double lambda = 1e-4;
  std::size_t max_epochs = 500;
  double tol = 1e-6;
};

struct ClassifierSpec {
  enum class Kind { Knn, Linear } kind = Kind::Knn;
  KnnOptions knn;
  LinearProbeOptions linear;

  std::string name() const;
};

struct Predictions {
  std::vector<std::string> predicted;
  Metrics metrics;
};

Predictions knn_classify(const EmbeddingSet& train, const EmbeddingSet& test, const KnnOptions& opt);
Predictions linear_probe(const EmbeddingSet& train, const EmbeddingSet& test, const LinearProbeOptions& opt);
Predictions run_classifier(const EmbeddingSet& train, const EmbeddingSet& test, const ClassifierSpec& spec);

// ----------------------------------------------------------------- protocols

struct SplitRecord {
  std::string train_sources;
  std::string test_sources;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  Metrics metrics;
};

struct AggregateRow {
  std::string group;  // "all", "train=<source>", "source-means"
  std::size_t count = 0;
  Metrics mean;
  Metrics std;      // sample standard deviation
  bool has_std = false;
};

struct EvalReport {
  std::string protocol;
  std::string classifier;
  std::vector<SplitRecord> splits;
  std::vector<AggregateRow> aggregates;
};

AggregateRow aggregate(const std::string& group, const std::vector<Metrics>& values);

/// One split per ordered (train, test) source pair.
EvalReport leave_one_source_out(const EmbeddingSet& set, const ClassifierSpec& spec);

/// Test-row indices of each fold.
std::vector<std::vector<std::size_t>> kfold_assignment(const std::vector<std::string>& labels, std::size_t k,
                                                       std::uint64_t seed);
EvalReport kfold(const EmbeddingSet& set, std::size_t k, std::uint64_t seed, const ClassifierSpec& spec);

/// Single train/test evaluation packaged as a one-split report.
EvalReport holdout_report(const EmbeddingSet& train, const EmbeddingSet& test, const ClassifierSpec& spec);

std::string format_report_csv(const EvalReport& report);
std::string format_report_text(const EvalReport& report);

// ----------------------------------------------------------------------- PCA

struct PcaResult {
  std::size_t dim = 0;
  std::vector<double> mean;         // dim
  std::vector<double> components;   // count x dim, unit rows
  std::vector<double> explained;    // eigenvalues of the covariance
  std::vector<double> projections;  // n x count
};

/// Top `count` principal components of the rows of `x` (n x d) by power
/// iteration with deflation. Each component's sign makes its largest-magnitude
/// coordinate positive.
PcaResult principal_components(const std::vector<double>& x, std::size_t n, std::size_t d,
                               std::size_t count = 3, double tol = 1e-9, std::size_t max_iter = 100000);

/// Patch tokens of one image, n_patches x embed_dim.
std::vector<double> patch_token_features(const VitEncoder& encoder, const FloatImage& image);

/// RGB rendering of the top-3 components at patch-grid resolution, upscaled
/// to the input size.
RgbImage pca_map(const VitEncoder& encoder, const FloatImage& image, PcaResult* result = nullptr);

}  // namespace rbc
