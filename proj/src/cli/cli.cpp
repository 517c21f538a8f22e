#include "rbcssl/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include "rbcssl/binary_io.hpp"
#include "rbcssl/checkpoint.hpp"
#include "rbcssl/config.hpp"
#include "rbcssl/csv.hpp"
#include "rbcssl/errors.hpp"
#include "rbcssl/eval.hpp"
#include "rbcssl/log.hpp"
#include "rbcssl/manifest.hpp"
#include "rbcssl/pipeline.hpp"
#include "rbcssl/synthetic.hpp"
#include "rbcssl/trainer.hpp"

namespace fs = std::filesystem;

namespace rbc {

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  bool quiet = false;
};

// Flags that are shorthands for config keys.
struct KeyFlag {
  std::string flag;
  std::string key;
};

RunConfig resolve(const Common& common, const std::map<std::string, std::string>& flag_values) {
  RunConfig cfg;
  if (!common.config_file.empty()) cfg.merge_file(common.config_file);
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.merge_text(kv, "--set");
  }
  for (const auto& [key, value] : flag_values) cfg.set(key, value);
  return cfg;
}

void write_report(const fs::path& prefix, const EvalReport& report, const RunConfig& cfg) {
  fs::path csv = prefix, txt = prefix, conf = prefix;
  csv += ".csv";
  txt += ".txt";
  conf += ".cfg";
  const std::string text = format_report_text(report);
  write_file(csv, format_report_csv(report));
  write_file(txt, text);
  cfg.write(conf);
  log_info(text.substr(0, text.find_last_not_of('\n') + 1));
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised red-blood-cell representation learning: data preparation, training, "
               "embedding, evaluation and feature visualization."};
  app.name("rbcssl");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every command");

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_file, "Config file of 'section.key = value' lines");
    sub->add_option("--set", common.overrides, "Override a config key (key=value), repeatable");
    sub->add_flag("-q,--quiet", common.quiet, "Only report warnings and errors");
  };
  // Shorthand flags: the value is recorded only if the flag is given.
  std::map<std::string, std::string> flag_values;
  auto add_key_flag = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&flag_values, key](const std::string& v) { flag_values[key] = v; },
                                          help + " (" + key + ")");
  };

  std::function<void()> action;
  std::string out_path, manifest_path, mask_dir, checkpoint_path, resume_path, image_path, train_path, test_path,
      embeddings_path, classifier = "knn";

  auto* gen = app.add_subcommand("gen-synthetic", "Render a synthetic labelled smear dataset");
  add_common(gen);
  gen->add_option("-o,--out", out_path, "Output directory")->required();
  add_key_flag(gen, "--n-images", "synthetic.n_images", "Images to render");
  add_key_flag(gen, "--sources", "synthetic.sources", "Acquisition sources");
  add_key_flag(gen, "--classes", "synthetic.classes", "Morphology classes");
  add_key_flag(gen, "--image-size", "synthetic.image_size", "Image side in pixels");
  add_key_flag(gen, "--seed", "run.seed", "Random seed");

  auto* patch = app.add_subcommand("patchify", "Tile smear images into fixed-size patches");
  add_common(patch);
  patch->add_option("-m,--manifest", manifest_path, "Input manifest CSV")->required();
  patch->add_option("-o,--out", out_path, "Output directory")->required();
  add_key_flag(patch, "--patch-size", "data.patch_size", "Tile side in pixels");

  auto* cells = app.add_subcommand("extract-cells", "Cut one square crop per segmented cell");
  add_common(cells);
  cells->add_option("-m,--manifest", manifest_path, "Input manifest CSV")->required();
  cells->add_option("--mask-dir", mask_dir, "Directory of <image stem>.pgm label maps")->required();
  cells->add_option("-o,--out", out_path, "Output directory")->required();
  add_key_flag(cells, "--cell-size", "data.cell_size", "Crop side in pixels");

  auto* train = app.add_subcommand("train", "Train the student/teacher encoder");
  add_common(train);
  train->add_option("-m,--manifest", manifest_path, "Training manifest CSV")->required();
  train->add_option("-o,--out", out_path, "Output directory")->required();
  train->add_option("--resume", resume_path, "Continue from a training checkpoint");
  add_key_flag(train, "--iterations", "train.iterations", "Optimizer steps");
  add_key_flag(train, "--batch-size", "train.batch_size", "Images per step");
  add_key_flag(train, "--centering", "ssl.centering", "sinkhorn, ema or none");
  add_key_flag(train, "--seed", "run.seed", "Random seed");

  auto* emb = app.add_subcommand("embed", "Extract teacher CLS embeddings");
  add_common(emb);
  emb->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  emb->add_option("-m,--manifest", manifest_path, "Manifest CSV")->required();
  emb->add_option("-o,--out", out_path, "Output embedding file (sidecar <out>.csv)")->required();

  auto* lin = app.add_subcommand("eval-linear", "Linear probe: train on one embedding file, test on another");
  auto* knn = app.add_subcommand("eval-knn", "k-NN: train on one embedding file, test on another");
  for (auto* sub : {lin, knn}) {
    add_common(sub);
    sub->add_option("--train", train_path, "Training embeddings")->required();
    sub->add_option("--test", test_path, "Test embeddings")->required();
    sub->add_option("-o,--out", out_path, "Report prefix (.csv, .txt)")->required();
  }
  add_key_flag(lin, "--lambda", "eval.lambda", "L2 weight");
  add_key_flag(knn, "--k", "eval.k", "Neighbours");
  add_key_flag(knn, "--distance", "eval.distance", "cosine or euclidean");

  auto* loso = app.add_subcommand("eval-loso", "Leave-one-source-out evaluation");
  auto* kf = app.add_subcommand("eval-kfold", "Stratified k-fold evaluation");
  for (auto* sub : {loso, kf}) {
    add_common(sub);
    sub->add_option("-e,--embeddings", embeddings_path, "Embedding file")->required();
    sub->add_option("--classifier", classifier, "knn or linear")->check(CLI::IsMember({"knn", "linear"}));
    sub->add_option("-o,--out", out_path, "Report prefix (.csv, .txt)")->required();
    add_key_flag(sub, "--k", "eval.k", "Neighbours");
  }
  add_key_flag(kf, "--folds", "eval.folds", "Number of folds");
  add_key_flag(kf, "--seed", "run.seed", "Random seed");

  auto* pca = app.add_subcommand("pca-map", "Render the top-3 PCA components of patch tokens as RGB");
  add_common(pca);
  pca->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  pca->add_option("-i,--image", image_path, "Input PPM image")->required();
  pca->add_option("-o,--out", out_path, "Output PPM")->required();

  // ------------------------------------------------------------- actions

  gen->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const auto samples = gen_synthetic(cfg.synthetic());
      const fs::path dir = out_path;
      SampleManifest manifest;
      for (const auto& s : samples) {
        const std::string rel = "images/" + s.smear.image_id + ".ppm";
        write_ppm(dir / rel, s.smear.image);
        write_pgm16(dir / "masks" / (s.smear.image_id + ".pgm"), s.mask);
        manifest.records.push_back({rel, SampleKind::Patch, s.smear.source_id, s.label});
      }
      manifest.write(dir / "manifest.csv");
      cfg.write(dir / "config.cfg");
      log_info("wrote " + std::to_string(samples.size()) + " images to " + dir.string());
    };
  });

  patch->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const std::size_t size = cfg.get_size("data.patch_size");
      const auto in = SampleManifest::read(manifest_path);
      const fs::path dir = out_path;
      SampleManifest outm;
      for (const auto& rec : in.records) {
        const auto tiles = patchify(read_ppm(in.resolve(rec)), size);
        for (const auto& t : tiles) {
          const std::string rel =
              "patches/" + stem_of(rec.path) + "_" + std::to_string(t.x) + "_" + std::to_string(t.y) + ".ppm";
          write_ppm(dir / rel, t.image);
          outm.records.push_back({rel, SampleKind::Patch, rec.source_id, rec.label});
        }
      }
      outm.write(dir / "manifest.csv");
      cfg.write(dir / "config.cfg");
      log_info("wrote " + std::to_string(outm.records.size()) + " patches");
    };
  });

  cells->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const auto opts = cfg.cell_crop();
      const auto in = SampleManifest::read(manifest_path);
      const fs::path dir = out_path;
      SampleManifest outm;
      std::size_t skipped = 0;
      for (const auto& rec : in.records) {
        const auto mask = read_pgm(fs::path(mask_dir) / (stem_of(rec.path) + ".pgm"));
        const auto result = extract_cells(read_ppm(in.resolve(rec)), mask, opts);
        skipped += result.skipped_small;
        for (const auto& c : result.crops) {
          const std::string rel = "cells/" + stem_of(rec.path) + "_cell" + std::to_string(c.label) + ".ppm";
          write_ppm(dir / rel, c.image);
          outm.records.push_back({rel, SampleKind::Cell, rec.source_id, rec.label});
        }
      }
      if (skipped) log_warn("skipped " + std::to_string(skipped) + " cells below the minimum size");
      outm.write(dir / "manifest.csv");
      cfg.write(dir / "config.cfg");
      log_info("wrote " + std::to_string(outm.records.size()) + " cell crops");
    };
  });

  train->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const TrainRun run = cfg.train_run();
      const auto manifest = SampleManifest::read(manifest_path);
      manifest.validate_for_training();
      std::vector<FloatImage> images;
      for (const auto& rec : manifest.records) images.push_back(to_float(read_ppm(manifest.resolve(rec))));

      TrainState state = resume_path.empty() ? init_train_state(run.vit, run.ssl, cfg.seed())
                                             : from_checkpoint(load_checkpoint(resume_path));
      if (!(state.student.backbone.config() == run.vit))
        throw ConfigError("resume checkpoint encoder shape differs from vit.* settings");
      if (state.iteration > run.train.iterations)
        throw ConfigError("resume checkpoint is at iteration " + std::to_string(state.iteration) +
                          ", beyond train.iterations");
      const fs::path dir = out_path;
      cfg.write(dir / "config.cfg");
      CsvTable log;
      log.header = {"iter", "loss", "lr", "teacher_momentum"};
      auto num = [](double v) {
        std::ostringstream os;
        os.precision(9);
        os << v;
        return os.str();
      };
      run_training(state, images, run, [&](const StepRecord& r) {
        log.rows.push_back({std::to_string(r.iter), num(r.loss), num(r.lr), num(r.teacher_momentum)});
        if ((r.iter + 1) % 50 == 0 || r.iter + 1 == run.train.iterations)
          log_info("iter " + std::to_string(r.iter + 1) + "/" + std::to_string(run.train.iterations) +
                   " loss " + num(r.loss));
      });
      save_checkpoint(dir / "checkpoint.rdck", to_checkpoint(state));
      write_csv(dir / "loss_log.csv", log);
    };
  });

  emb->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const VitEncoder enc = load_encoder(load_checkpoint(checkpoint_path));
      const auto set = embed(enc, SampleManifest::read(manifest_path));
      write_embeddings(out_path, set);
      cfg.write(fs::path(out_path + ".cfg"));
      log_info("embedded " + std::to_string(set.size()) + " samples (dim " + std::to_string(set.dim) + ")");
    };
  });

  lin->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      write_report(out_path, holdout_report(read_embeddings(train_path), read_embeddings(test_path), cfg.linear()),
                   cfg);
    };
  });
  knn->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      write_report(out_path, holdout_report(read_embeddings(train_path), read_embeddings(test_path), cfg.knn()),
                   cfg);
    };
  });
  loso->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const auto spec = classifier == "knn" ? cfg.knn() : cfg.linear();
      write_report(out_path, leave_one_source_out(read_embeddings(embeddings_path), spec), cfg);
    };
  });
  kf->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const auto spec = classifier == "knn" ? cfg.knn() : cfg.linear();
      write_report(out_path, kfold(read_embeddings(embeddings_path), cfg.get_size("eval.folds"), cfg.seed(), spec),
                   cfg);
    };
  });

  pca->callback([&] {
    action = [&] {
      const RunConfig cfg = resolve(common, flag_values);
      const VitEncoder enc = load_encoder(load_checkpoint(checkpoint_path));
      write_ppm(out_path, pca_map(enc, to_float(read_ppm(image_path))));
      cfg.write(fs::path(out_path + ".cfg"));
    };
  });

  std::vector<std::string> argv(args.rbegin(), args.rend());  // CLI11 consumes a reversed vector
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  const LogLevel previous = log_level();
  set_log_level(common.quiet ? LogLevel::Warn : LogLevel::Info);
  int code = 0;
  try {
    if (action) action();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    code = 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = 2;
  }
  set_log_level(previous);
  return code;
}

}  // namespace rbc
