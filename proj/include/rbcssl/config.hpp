#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rbcssl/eval.hpp"
#include "rbcssl/pipeline.hpp"
#include "rbcssl/ssl.hpp"
#include "rbcssl/synthetic.hpp"
#include "rbcssl/trainer.hpp"
#include "rbcssl/vit.hpp"

namespace rbc {

/// Settings as `section.key = value` lines. Every key is known up front with a
/// default; setting an unknown key is a config error.
class RunConfig {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::string help;
  };

  RunConfig();

  /// Parses `section.key = value` lines; `#` starts a comment.
  void merge_text(const std::string& text, const std::string& origin);
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_string(const std::string& key) const { return get(key); }
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::vector<Entry>& entries() const { return entries_; }

  /// Fully resolved settings (derived values filled in), one line per key.
  std::string dump() const;
  void write(const std::filesystem::path& path) const;

  std::uint64_t seed() const { return get_u64("run.seed"); }
  VitConfig vit() const;
  SslConfig ssl() const;
  TrainConfig train() const;
  CropSpec crop() const;  // crop sizes follow vit.image_size
  TrainRun train_run() const;
  SyntheticConfig synthetic() const;
  CellCropOptions cell_crop() const;
  ClassifierSpec knn() const;
  ClassifierSpec linear() const;

 private:
  Entry& find(const std::string& key);
  const Entry* lookup(const std::string& key) const;
  std::vector<Entry> entries_;
};

}  // namespace rbc
