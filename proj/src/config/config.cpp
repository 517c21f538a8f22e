#include "rbcssl/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "rbcssl/binary_io.hpp"
#include "rbcssl/errors.hpp"

namespace rbc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

RunConfig::RunConfig() {
  const VitConfig v;
  const SslConfig s;
  const TrainConfig t;
  const CropSpec c;
  const SyntheticConfig g;
  const CellCropOptions cc;
  const KnnOptions k;
  const LinearProbeOptions l;
  entries_ = {
      {"run.seed", "0", "seed for every random choice of a run"},
      {"vit.image_size", std::to_string(v.image_size), "encoder input resolution (pixels)"},
      {"vit.patch_size", std::to_string(v.patch_size), "patch side (pixels)"},
      {"vit.embed_dim", std::to_string(v.embed_dim), "token width"},
      {"vit.depth", std::to_string(v.depth), "transformer blocks"},
      {"vit.heads", std::to_string(v.heads), "attention heads"},
      {"vit.mlp_ratio", fmt(v.mlp_ratio), "MLP hidden width / embed_dim"},
      {"ssl.prototypes", std::to_string(s.prototypes), "prototype count K"},
      {"ssl.head_hidden", std::to_string(s.head_hidden_dim), "projection head hidden width"},
      {"ssl.head_bottleneck", std::to_string(s.head_bottleneck_dim), "projection head bottleneck width"},
      {"ssl.student_temp", fmt(s.student_temp), "student softmax temperature"},
      {"ssl.teacher_temp", fmt(s.teacher_temp), "teacher softmax temperature"},
      {"ssl.centering", to_string(s.centering), "teacher centering: sinkhorn, ema or none"},
      {"ssl.center_momentum", fmt(s.center_momentum), "EMA centering momentum"},
      {"ssl.sinkhorn_iters", std::to_string(s.sinkhorn_iters), "Sinkhorn-Knopp iterations"},
      {"ssl.koleo", s.koleo_enabled ? "true" : "false", "enable the KoLeo regularizer"},
      {"ssl.koleo_weight", fmt(s.koleo_weight), "KoLeo weight"},
      {"ssl.koleo_eps", fmt(s.koleo_eps), "KoLeo log epsilon"},
      {"train.iterations", std::to_string(t.iterations), "optimizer steps"},
      {"train.batch_size", std::to_string(t.batch_size), "images per step"},
      {"train.base_lr", fmt(t.base_lr), "peak learning rate"},
      {"train.final_lr", fmt(t.final_lr), "learning rate at the last step"},
      {"train.warmup_iters", "auto", "warmup steps (auto = 10% of iterations)"},
      {"train.weight_decay", fmt(t.weight_decay), "decoupled weight decay"},
      {"train.teacher_momentum_start", fmt(t.teacher_momentum_start), "teacher EMA momentum at step 0"},
      {"train.teacher_momentum_end", fmt(t.teacher_momentum_end), "teacher EMA momentum at the last step"},
      {"train.deterministic", t.deterministic ? "true" : "false", "reproducible batch order"},
      {"crop.global_crops", std::to_string(c.global_crops), "global views per image"},
      {"crop.global_scale_min", fmt(c.global_scale_min), "global crop minimum area fraction"},
      {"crop.global_scale_max", fmt(c.global_scale_max), "global crop maximum area fraction"},
      {"crop.local_crops", std::to_string(c.local_crops), "local views per image"},
      {"crop.local_scale_min", fmt(c.local_scale_min), "local crop minimum area fraction"},
      {"crop.local_scale_max", fmt(c.local_scale_max), "local crop maximum area fraction"},
      {"crop.augmentations", CropSpec::format_augmentations(c.augmentations), "name:probability:magnitude list"},
      {"data.patch_size", "224", "patchify tile side (pixels)"},
      {"data.cell_size", std::to_string(cc.output_size), "cell crop output side (pixels)"},
      {"data.cell_margin", fmt(cc.margin), "cell box growth per side (fraction)"},
      {"data.min_cell_pixels", std::to_string(cc.min_pixels), "smaller cell labels are skipped"},
      {"synthetic.n_images", "60", "images to generate"},
      {"synthetic.sources", "2", "acquisition sources"},
      {"synthetic.classes", std::to_string(g.classes), "morphology classes"},
      {"synthetic.image_size", std::to_string(g.image_size), "image side (pixels)"},
      {"synthetic.cells_per_image", std::to_string(g.cells_per_image), "cells per image"},
      {"synthetic.tint_delta", fmt(g.tint_delta), "per-source colour shift"},
      {"eval.k", std::to_string(k.k), "k-NN neighbours"},
      {"eval.distance", to_string(k.distance), "k-NN distance: cosine or euclidean"},
      {"eval.lambda", fmt(l.lambda), "linear probe L2 weight"},
      {"eval.max_epochs", std::to_string(l.max_epochs), "linear probe gradient steps"},
      {"eval.tol", fmt(l.tol), "linear probe gradient-norm tolerance"},
      {"eval.folds", "5", "k-fold splits"},
  };
}

const RunConfig::Entry* RunConfig::lookup(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.key == key) return &e;
  return nullptr;
}

RunConfig::Entry& RunConfig::find(const std::string& key) {
  for (auto& e : entries_)
    if (e.key == key) return e;
  throw ConfigError("unknown key '" + key + "'");
}

bool RunConfig::has(const std::string& key) const { return lookup(key) != nullptr; }

const std::string& RunConfig::get(const std::string& key) const {
  const Entry* e = lookup(key);
  if (!e) throw ConfigError("unknown key '" + key + "'");
  return e->value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (value.find('\n') != std::string::npos) throw ConfigError(key + ": value may not span lines");
  find(key).value = trim(value);
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'section.key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.find('.') == std::string::npos) throw ConfigError(where + ": key '" + key + "' lacks a section");
    if (!has(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    set(key, body.substr(eq + 1));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) { merge_text(read_file(path), path.string()); }

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(key + ": '" + s + "' is not a finite number");
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  std::string section;
  for (const auto& e : entries_) {
    const std::string sec = e.key.substr(0, e.key.find('.'));
    if (sec != section) {
      if (!section.empty()) os << '\n';
      section = sec;
    }
    std::string value = e.value;
    if (e.key == "train.warmup_iters") value = std::to_string(train().warmup_iters);
    os << e.key << " = " << value << '\n';
  }
  return os.str();
}

void RunConfig::write(const std::filesystem::path& path) const { write_file(path, dump()); }

VitConfig RunConfig::vit() const {
  VitConfig v;
  v.image_size = get_size("vit.image_size");
  v.patch_size = get_size("vit.patch_size");
  v.embed_dim = get_size("vit.embed_dim");
  v.depth = get_size("vit.depth");
  v.heads = get_size("vit.heads");
  v.mlp_ratio = get_double("vit.mlp_ratio");
  return v;
}

SslConfig RunConfig::ssl() const {
  SslConfig s;
  s.prototypes = get_size("ssl.prototypes");
  s.head_hidden_dim = get_size("ssl.head_hidden");
  s.head_bottleneck_dim = get_size("ssl.head_bottleneck");
  s.student_temp = get_double("ssl.student_temp");
  s.teacher_temp = get_double("ssl.teacher_temp");
  s.centering = parse_centering_mode(get("ssl.centering"));
  s.center_momentum = get_double("ssl.center_momentum");
  s.sinkhorn_iters = get_size("ssl.sinkhorn_iters");
  s.koleo_enabled = get_bool("ssl.koleo");
  s.koleo_weight = get_double("ssl.koleo_weight");
  s.koleo_eps = get_double("ssl.koleo_eps");
  return s;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.iterations = get_size("train.iterations");
  t.batch_size = get_size("train.batch_size");
  t.base_lr = get_double("train.base_lr");
  t.final_lr = get_double("train.final_lr");
  t.warmup_iters = get("train.warmup_iters") == "auto" ? t.iterations / 10 : get_size("train.warmup_iters");
  t.weight_decay = get_double("train.weight_decay");
  t.teacher_momentum_start = get_double("train.teacher_momentum_start");
  t.teacher_momentum_end = get_double("train.teacher_momentum_end");
  t.deterministic = get_bool("train.deterministic");
  t.seed = seed();
  return t;
}

CropSpec RunConfig::crop() const {
  CropSpec c;
  c.global_crops = get_size("crop.global_crops");
  c.global_size = c.local_size = get_size("vit.image_size");
  c.global_scale_min = get_double("crop.global_scale_min");
  c.global_scale_max = get_double("crop.global_scale_max");
  c.local_crops = get_size("crop.local_crops");
  c.local_scale_min = get_double("crop.local_scale_min");
  c.local_scale_max = get_double("crop.local_scale_max");
  c.augmentations = CropSpec::parse_augmentations(get("crop.augmentations"));
  return c;
}

TrainRun RunConfig::train_run() const {
  TrainRun r{vit(), ssl(), train(), crop()};
  try {
    r.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return r;
}

SyntheticConfig RunConfig::synthetic() const {
  SyntheticConfig g;
  g.n_images = get_size("synthetic.n_images");
  g.sources = get_size("synthetic.sources");
  g.classes = get_size("synthetic.classes");
  g.image_size = get_size("synthetic.image_size");
  g.cells_per_image = get_size("synthetic.cells_per_image");
  g.tint_delta = get_double("synthetic.tint_delta");
  g.seed = seed();
  return g;
}

CellCropOptions RunConfig::cell_crop() const {
  CellCropOptions o;
  o.output_size = get_size("data.cell_size");
  o.margin = get_double("data.cell_margin");
  o.min_pixels = get_size("data.min_cell_pixels");
  return o;
}

ClassifierSpec RunConfig::knn() const {
  ClassifierSpec s;
  s.kind = ClassifierSpec::Kind::Knn;
  s.knn.k = get_size("eval.k");
  s.knn.distance = parse_knn_distance(get("eval.distance"));
  return s;
}

ClassifierSpec RunConfig::linear() const {
  ClassifierSpec s;
  s.kind = ClassifierSpec::Kind::Linear;
  s.linear.lambda = get_double("eval.lambda");
  s.linear.max_epochs = get_size("eval.max_epochs");
  s.linear.tol = get_double("eval.tol");
  return s;
}

}  // namespace rbc
