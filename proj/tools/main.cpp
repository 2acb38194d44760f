// Command-line front end for the whole pipeline: split preparation, the two
// training phases, prediction, evaluation, analysis, and figure emission.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <metachex/metachex.hpp>

namespace fs = std::filesystem;
using namespace metachex;

namespace {

// Tries each configured image directory in order.
class SearchPathProvider : public ImageProvider {
 public:
  explicit SearchPathProvider(std::vector<std::string> dirs) {
    for (auto& d : dirs)
      if (!d.empty()) dirs_.push_back(std::move(d));
    require(!dirs_.empty(), "no image directory configured");
  }

  Image load(const std::string& image_id) const override {
    std::string name = image_id;
    if (name.size() < 4 || name.compare(name.size() - 4, 4, ".png") != 0) name += ".png";
    for (const auto& dir : dirs_) {
      const fs::path candidate = fs::path(dir) / name;
      if (fs::exists(candidate)) return read_png(candidate.string());
    }
    fail(cat("image not found in any configured directory: ", name));
  }

 private:
  std::vector<std::string> dirs_;
};

struct CommonOptions {
  std::string config_path;
  std::string data_root;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "run configuration (JSON)")->required();
  cmd->add_option("--data-root", opts.data_root,
                  "directory that relative data paths resolve against "
                  "(default: $METACHEX_DATA_ROOT)");
  cmd->add_option("--output-dir", opts.output_dir, "override output_dir");
  cmd->add_option("--seed", opts.seed, "override seed");
  cmd->add_option("--variant", opts.variant, "override variant (chexnet|metachexnet)");
  cmd->add_option("--epochs", opts.epochs, "override epoch count for the trained phase");
  cmd->add_option("--batch-size", opts.batch_size, "override batch_size");
  cmd->add_option("--lr", opts.lr, "override initial_lr");
}

RunConfig load_config(const CommonOptions& opts, int phase = 0) {
  RunConfig cfg = load_run_config(opts.config_path);
  if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.variant) cfg.variant = variant_from_string(*opts.variant);
  if (opts.epochs) (phase == 2 ? cfg.phase2_epochs : cfg.phase1_epochs) = *opts.epochs;
  if (opts.batch_size) cfg.batch_size = *opts.batch_size;
  if (opts.lr) cfg.initial_lr = *opts.lr;
  std::string root = opts.data_root;
  if (root.empty())
    if (const char* env = std::getenv("METACHEX_DATA_ROOT")) root = env;
  resolve_data_paths(cfg, root);
  cfg.validate();
  return cfg;
}

fs::path manifest_path(const RunConfig& cfg, const std::string& stem) {
  return fs::path(cfg.output_dir) / "manifests" / (stem + ".txt");
}

std::vector<SampleRecord> chestxray_records(const RunConfig& cfg) {
  require(!cfg.metadata_csv.empty(), "config: metadata_csv is required for this command");
  return parse_chestxray14_metadata(cfg.metadata_csv);
}

// Joins manifest entries with parsed metadata, keeping manifest order.
std::vector<SampleRecord> records_for_manifest(const std::vector<SampleRecord>& all,
                                               const SplitManifest& manifest) {
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : all) by_id[r.image_id] = &r;
  std::vector<SampleRecord> out;
  for (const auto& id : manifest.entries) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(cat("manifest entry ", id, " is not in the metadata table"));
    out.push_back(*it->second);
  }
  return out;
}

std::vector<TbSampleRecord> tb_records_for_manifest(const SplitManifest& manifest) {
  std::vector<TbSampleRecord> out;
  for (const auto& id : manifest.entries) {
    DatasetTag tag = id.rfind("MCUCXR", 0) == 0 ? DatasetTag::montgomery : DatasetTag::shenzhen;
    out.push_back(tb_record_from_id(id, tag));
  }
  return out;
}

void check_manifest_coverage(const std::vector<PredictionRecord>& preds,
                             const std::string& manifest_file) {
  auto manifest = read_manifest(manifest_file);
  std::vector<std::string> pred_ids, manifest_ids = manifest.manifest.entries;
  for (const auto& p : preds) pred_ids.push_back(p.image_id);
  std::sort(pred_ids.begin(), pred_ids.end());
  std::sort(manifest_ids.begin(), manifest_ids.end());
  if (pred_ids != manifest_ids)
    fail(cat("prediction ids do not match manifest ", manifest_file, " (", pred_ids.size(),
             " predictions vs ", manifest_ids.size(), " manifest entries)"));
}

void progress_printer(const EpochRecord& rec) {
  std::cerr << "epoch " << rec.epoch << ": train_loss=" << rec.train_loss
            << " val_loss=" << rec.val_loss;
  if (rec.val_auc) std::cerr << " val_auc=" << *rec.val_auc;
  std::cerr << " lr=" << rec.lr << (rec.is_best ? " *" : "") << "\n";
}

// ---------------------------------------------------------------------------

int cmd_prepare(const CommonOptions& opts) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  fs::create_directories(fs::path(cfg.output_dir) / "manifests");
  nlohmann::json summary{{"config_hash", hash}};

  if (!cfg.metadata_csv.empty()) {
    auto records = chestxray_records(cfg);
    auto manifests = partition_by_patient(records, cfg.split_fractions, cfg.seed);
    nlohmann::json splits;
    for (const auto& m : manifests) {
      write_manifest(manifest_path(cfg, cat("chestxray14_", to_string(m.split_name))).string(),
                     m, hash);
      splits[to_string(m.split_name)] = {{"images", m.entries.size()},
                                         {"patients", m.patient_ids.size()}};
    }
    summary["chestxray14"] = {{"total_images", records.size()}, {"splits", splits}};
  }

  if (!cfg.shenzhen_dir.empty() || !cfg.montgomery_dir.empty()) {
    std::vector<TbSampleRecord> records;
    if (!cfg.shenzhen_dir.empty()) {
      auto shenzhen = load_tb_dataset(cfg.shenzhen_dir, DatasetTag::shenzhen);
      records.insert(records.end(), shenzhen.begin(), shenzhen.end());
    }
    if (!cfg.montgomery_dir.empty()) {
      auto montgomery = load_tb_dataset(cfg.montgomery_dir, DatasetTag::montgomery);
      records.insert(records.end(), montgomery.begin(), montgomery.end());
    }
    auto manifests = fixed_tb_split(records, cfg.tb_counts, cfg.seed);
    nlohmann::json splits;
    for (const auto& m : manifests) {
      write_manifest(manifest_path(cfg, cat("tb_", to_string(m.split_name))).string(), m, hash);
      auto counts = count_tb_classes(tb_records_for_manifest(m));
      splits[to_string(m.split_name)] = {{"images", m.entries.size()},
                                         {"negatives", counts.negatives},
                                         {"positives", counts.positives}};
    }
    summary["tb"] = {{"total_images", records.size()}, {"splits", splits}};
  }

  require(summary.contains("chestxray14") || summary.contains("tb"),
          "config: no dataset paths set; nothing to prepare");
  write_json_file((fs::path(cfg.output_dir) / "manifests" / "summary.json").string(), summary);
  return 0;
}

Model build_initial_model(const RunConfig& cfg, int phase, const std::string& init) {
  const Variant target = phase == 1 ? cfg.variant : Variant::tb;
  if (init.rfind("checkpoint:", 0) == 0) {
    Checkpoint ckpt = load_checkpoint(init.substr(std::string("checkpoint:").size()));
    if (ckpt.variant == target) return model_from_checkpoint(ckpt, cfg.seed);
    if (phase == 2) {
      Model phase1_model = model_from_checkpoint(ckpt, cfg.seed);
      return swap_head_for_tb(phase1_model, cfg.seed);
    }
    fail(cat("checkpoint variant mismatch: expected ", to_string(target), ", found ",
             to_string(ckpt.variant)));
  }
  BackboneConfig backbone = cfg.backbone;
  if (init == "imagenet") {
    backbone.pretrained_source = PretrainedSource::imagenet;
    backbone.imagenet_weights_path = cfg.imagenet_weights;
  } else if (init == "random") {
    backbone.pretrained_source = PretrainedSource::random;
  } else if (!init.empty()) {
    fail(cat("unknown --init value: ", init, " (expected imagenet, random, or checkpoint:PATH)"));
  }
  return build_model(backbone, target, cfg.seed);
}

int cmd_train(const CommonOptions& opts, int phase, std::string init) {
  RunConfig cfg = load_config(opts, phase);
  const std::string hash = config_hash(cfg);
  fs::create_directories(fs::path(cfg.output_dir) / "checkpoints");
  fs::create_directories(fs::path(cfg.output_dir) / "logs");
  SearchPathProvider provider({cfg.chestxray14_dir, cfg.shenzhen_dir, cfg.montgomery_dir});

  TrainResult result;
  Variant trained_variant;
  if (phase == 1) {
    auto all = chestxray_records(cfg);
    auto train_manifest = read_manifest(manifest_path(cfg, "chestxray14_train").string());
    auto val_manifest = read_manifest(manifest_path(cfg, "chestxray14_validation").string());
    Model model = build_initial_model(cfg, phase, init);
    trained_variant = model.variant();
    result = train_phase1(model, records_for_manifest(all, train_manifest.manifest),
                          records_for_manifest(all, val_manifest.manifest), provider,
                          phase1_train_config(cfg), progress_printer);
  } else {
    if (init.empty()) {
      const fs::path default_ckpt = fs::path(cfg.output_dir) / "checkpoints" / "phase1_best.ckpt";
      if (!fs::exists(default_ckpt))
        fail(cat("no --init given and ", default_ckpt.string(),
                 " does not exist; train phase 1 first or pass --init"));
      init = "checkpoint:" + default_ckpt.string();
    }
    auto train_manifest = read_manifest(manifest_path(cfg, "tb_train").string());
    auto val_manifest = read_manifest(manifest_path(cfg, "tb_validation").string());
    Model model = build_initial_model(cfg, phase, init);
    trained_variant = model.variant();
    result = train_phase2(model, tb_records_for_manifest(train_manifest.manifest),
                          tb_records_for_manifest(val_manifest.manifest), provider,
                          phase2_train_config(cfg), progress_printer);
  }

  const std::string stem = cat("phase", phase);
  save_checkpoint((fs::path(cfg.output_dir) / "checkpoints" / (stem + "_best.ckpt")).string(),
                  result.best);
  write_training_log((fs::path(cfg.output_dir) / "logs" / (stem + "_log.jsonl")).string(), phase,
                     trained_variant, result.log, hash);
  std::cerr << "best epoch " << result.best_epoch << " (metric " << result.best_metric << "), "
            << result.log.size() << " epochs run" << (result.stopped_early ? ", stopped early" : "")
            << "\n";
  return 0;
}

int cmd_predict(const CommonOptions& opts, const std::string& checkpoint_path,
                const std::string& manifest_file, const std::string& out_path,
                const std::string& images_dir) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Model model = model_from_checkpoint(ckpt, cfg.seed);
  auto manifest = read_manifest(manifest_file);
  require(!manifest.manifest.entries.empty(), cat(manifest_file, ": empty manifest"));
  SearchPathProvider provider(
      images_dir.empty()
          ? std::vector<std::string>{cfg.chestxray14_dir, cfg.shenzhen_dir, cfg.montgomery_dir}
          : std::vector<std::string>{images_dir});
  auto set = predict_samples(model, manifest.manifest.entries, provider, cfg.preprocess,
                             cfg.batch_size);
  write_predictions(out_path, model.variant(), set.records, hash);
  return 0;
}

int cmd_evaluate(const CommonOptions& opts, const std::vector<std::string>& prediction_files,
                 const std::vector<std::string>& manifest_files, bool combine,
                 const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  require(!prediction_files.empty(), "evaluate: at least one --predictions file required");
  require(manifest_files.empty() || manifest_files.size() == prediction_files.size(),
          "evaluate: --manifest count must match --predictions count");

  std::vector<PredictionFile> files;
  for (const auto& p : prediction_files) files.push_back(read_predictions(p));
  for (std::size_t i = 1; i < files.size(); ++i)
    require(files[i].variant == files[0].variant,
            "evaluate: prediction files disagree on the model variant");
  for (std::size_t i = 0; i < manifest_files.size(); ++i)
    check_manifest_coverage(files[i].records, manifest_files[i]);

  if (files[0].variant == Variant::tb) {
    std::vector<TbScoredSet> sets;
    for (std::size_t i = 0; i < files.size(); ++i) {
      std::vector<TbSampleRecord> labels;
      for (const auto& r : files[i].records) {
        DatasetTag tag =
            r.image_id.rfind("MCUCXR", 0) == 0 ? DatasetTag::montgomery : DatasetTag::shenzhen;
        labels.push_back(tb_record_from_id(r.image_id, tag));
      }
      sets.push_back(score_tb_set(fs::path(prediction_files[i]).stem().string(),
                                  files[i].records, labels));
    }
    write_json_file(out_path, tb_report_json(build_tb_report(sets, combine), hash));
  } else {
    require(files.size() == 1, "evaluate: multitask evaluation takes a single prediction file");
    auto all = chestxray_records(cfg);
    std::map<std::string, const SampleRecord*> by_id;
    for (const auto& r : all) by_id[r.image_id] = &r;
    std::vector<SampleRecord> labeled;
    for (const auto& p : files[0].records) {
      auto it = by_id.find(p.image_id);
      if (it == by_id.end())
        fail(cat("evaluate: prediction for ", p.image_id, " has no metadata row"));
      labeled.push_back(*it->second);
    }
    auto report = build_multitask_report(files[0].records, labeled, cfg.preprocess);
    write_json_file(out_path, multitask_report_json(report, hash));
  }
  return 0;
}

int cmd_analyze_tb_logit(const CommonOptions& opts, const std::string& prediction_file,
                         const std::string& out_path, std::optional<double> l2_override) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  PredictionFile preds = read_predictions(prediction_file);
  require(preds.variant != Variant::tb,
          "analyze tb-logit: needs pathology predictions (chexnet or metachexnet), not tb output");
  std::vector<LogOddsFeatures> features;
  for (const auto& r : preds.records) {
    DatasetTag tag =
        r.image_id.rfind("MCUCXR", 0) == 0 ? DatasetTag::montgomery : DatasetTag::shenzhen;
    features.push_back(make_log_odds(r, tb_record_from_id(r.image_id, tag).label));
  }
  if (features.size() <= kNumPathologies)
    std::cerr << "warning: fitting " << kNumPathologies << "-coefficient model on only "
              << features.size() << " samples\n";
  LogisticModel model = fit_logistic(features, l2_override.value_or(cfg.l2_strength));
  if (!model.converged) std::cerr << "warning: fit did not converge\n";
  write_json_file(out_path, logistic_model_json(model, hash));
  return 0;
}

int cmd_analyze_embed(const CommonOptions& opts, const std::string& checkpoint_path,
                      const std::string& manifest_file, const std::string& out_path,
                      bool project) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Model model = model_from_checkpoint(ckpt, cfg.seed);
  auto manifest = read_manifest(manifest_file);
  auto all = chestxray_records(cfg);
  auto records = records_for_manifest(all, manifest.manifest);
  SearchPathProvider provider({cfg.chestxray14_dir, cfg.shenzhen_dir, cfg.montgomery_dir});
  auto result = export_embeddings(model, records, provider, cfg.preprocess, cfg.batch_size);
  for (const auto& err : result.errors)
    std::cerr << nlohmann::json{{"skipped_image", err}}.dump() << "\n";

  if (project) {
    auto& rows = result.embeddings.rows;
    Eigen::MatrixXd X(rows.size(), result.embeddings.feature_dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t f = 0; f < result.embeddings.feature_dim; ++f)
        X(i, f) = rows[i].features[f];
    TsneConfig tsne = cfg.tsne;
    tsne.seed = cfg.seed;
    Eigen::MatrixXd Y = run_tsne(X, tsne);
    for (std::size_t i = 0; i < rows.size(); ++i)
      rows[i].projected = {{Y(i, 0), Y(i, 1)}};
  }
  write_embeddings(out_path, result.embeddings, hash);
  return 0;
}

int cmd_plot_roc(const CommonOptions& opts, const std::vector<std::string>& prediction_files,
                 const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  require(!prediction_files.empty(), "plot roc: at least one --predictions file required");
  std::vector<std::pair<std::string, RocResult>> curves;
  for (const auto& path : prediction_files) {
    PredictionFile preds = read_predictions(path);
    require(preds.variant == Variant::tb, cat(path, ": roc plot expects tb predictions"));
    std::vector<double> probs;
    std::vector<int> labels;
    for (const auto& r : preds.records) {
      DatasetTag tag =
          r.image_id.rfind("MCUCXR", 0) == 0 ? DatasetTag::montgomery : DatasetTag::shenzhen;
      probs.push_back(r.tb_prob);
      labels.push_back(tb_record_from_id(r.image_id, tag).label);
    }
    curves.emplace_back(fs::path(path).stem().string(), roc_curve(probs, labels));
  }
  write_text_file(out_path, roc_svg(curves, hash));
  return 0;
}

int cmd_plot_bland_altman(const CommonOptions& opts, const std::string& prediction_file,
                          const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  PredictionFile preds = read_predictions(prediction_file);
  require(preds.variant == Variant::metachexnet,
          "plot bland-altman: needs metachexnet predictions (age output)");
  auto all = chestxray_records(cfg);
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : all) by_id[r.image_id] = &r;
  std::vector<double> predicted, actual;
  for (const auto& p : preds.records) {
    auto it = by_id.find(p.image_id);
    if (it == by_id.end())
      fail(cat("plot bland-altman: prediction for ", p.image_id, " has no metadata row"));
    predicted.push_back(unscale_age(p.age_scaled, cfg.preprocess));
    actual.push_back(it->second->age_years);
  }
  write_text_file(out_path, bland_altman_svg(bland_altman(predicted, actual), hash));
  return 0;
}

int cmd_plot_tsne(const CommonOptions& opts, const std::string& embeddings_file,
                  const std::string& color_by, const std::string& out_path) {
  RunConfig cfg = load_config(opts);
  const std::string hash = config_hash(cfg);
  EmbeddingFile file = read_embeddings(embeddings_file);
  require(!file.embeddings.rows.empty(), cat(embeddings_file, ": no rows"));
  require(file.embeddings.rows.front().projected.has_value(),
          cat(embeddings_file, ": no projected coordinates; run analyze embed --project"));
  write_text_file(out_path,
                  tsne_svg(file.embeddings, tsne_color_by_from_string(color_by), hash));
  return 0;
}

int cmd_synth(const std::string& out_dir, int n_patients, int image_size, int shenzhen_per_class,
              int montgomery_per_class, std::uint64_t seed) {
  SyntheticCorpusSpec spec;
  spec.image_size = image_size;
  spec.n_patients = n_patients;
  spec.plant_age_anomaly = true;
  auto records = make_synthetic_records(spec, seed);
  write_synthetic_chestxray((fs::path(out_dir) / "chestxray14").string(), records, seed,
                            image_size);
  write_synthetic_tb((fs::path(out_dir) / "shenzhen").string(), "CHNCXR", DatasetTag::shenzhen,
                     shenzhen_per_class, shenzhen_per_class, seed, image_size);
  write_synthetic_tb((fs::path(out_dir) / "montgomery").string(), "MCUCXR",
                     DatasetTag::montgomery, montgomery_per_class, montgomery_per_class,
                     seed + 1, image_size);

  // a ready-to-run configuration sized for this corpus
  RunConfig cfg;
  cfg.metadata_csv = (fs::path(out_dir) / "chestxray14" / "metadata.csv").string();
  cfg.chestxray14_dir = (fs::path(out_dir) / "chestxray14").string();
  cfg.shenzhen_dir = (fs::path(out_dir) / "shenzhen").string();
  cfg.montgomery_dir = (fs::path(out_dir) / "montgomery").string();
  cfg.output_dir = (fs::path(out_dir) / "out").string();
  cfg.seed = seed;
  cfg.backbone.family = BackboneFamily::tiny_test_cnn;
  cfg.backbone.feature_dim = 32;
  cfg.preprocess.target_size = image_size;
  const int tb_half = shenzhen_per_class;
  cfg.tb_counts = {{static_cast<std::size_t>(tb_half / 2), static_cast<std::size_t>(tb_half / 2)},
                   {static_cast<std::size_t>(tb_half / 4), static_cast<std::size_t>(tb_half / 4)},
                   {static_cast<std::size_t>(tb_half - tb_half / 2 - tb_half / 4),
                    static_cast<std::size_t>(tb_half - tb_half / 2 - tb_half / 4)}};
  cfg.phase1_epochs = 2;
  cfg.phase2_epochs = 4;
  cfg.batch_size = 8;
  cfg.tsne.perplexity = 5.0;
  cfg.tsne.iterations = 250;
  write_json_file((fs::path(out_dir) / "config.json").string(), run_config_json(cfg));
  std::cerr << "synthetic corpus written to " << out_dir << " (" << records.size()
            << " labeled images, config at " << (fs::path(out_dir) / "config.json").string()
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-phase chest X-ray training and analysis pipeline"};
  app.require_subcommand(1);

  CommonOptions prepare_opts;
  auto* prepare = app.add_subcommand("prepare", "write patient-disjoint split manifests");
  add_common(prepare, prepare_opts);

  CommonOptions train_opts;
  int train_phase = 1;
  std::string train_init;
  auto* train = app.add_subcommand("train", "run one training phase");
  add_common(train, train_opts);
  train->add_option("--phase", train_phase, "1 = joint feature learning, 2 = TB fine-tuning")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  train->add_option("--init", train_init, "imagenet | random | checkpoint:PATH");

  CommonOptions predict_opts;
  std::string predict_ckpt, predict_manifest, predict_out, predict_images;
  auto* predict = app.add_subcommand("predict", "run a checkpoint over a manifest");
  add_common(predict, predict_opts);
  predict->add_option("--checkpoint", predict_ckpt)->required();
  predict->add_option("--manifest", predict_manifest)->required();
  predict->add_option("--out", predict_out)->required();
  predict->add_option("--images", predict_images, "image directory override");

  CommonOptions eval_opts;
  std::vector<std::string> eval_preds, eval_manifests;
  bool eval_combine = false;
  std::string eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against labels");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--predictions", eval_preds)->required();
  evaluate->add_option("--manifest", eval_manifests, "cross-check coverage, paired by order");
  evaluate->add_flag("--combine", eval_combine, "also score the union of all prediction sets");
  evaluate->add_option("--out", eval_out)->required();

  auto* analyze = app.add_subcommand("analyze", "model-output analyses");
  analyze->require_subcommand(1);
  CommonOptions logit_opts;
  std::string logit_preds, logit_out;
  std::optional<double> logit_l2;
  auto* tb_logit = analyze->add_subcommand(
      "tb-logit", "logistic regression of TB on pathology log-odds");
  add_common(tb_logit, logit_opts);
  tb_logit->add_option("--predictions", logit_preds)->required();
  tb_logit->add_option("--l2", logit_l2, "override l2_strength");
  tb_logit->add_option("--out", logit_out)->required();

  CommonOptions embed_opts;
  std::string embed_ckpt, embed_manifest, embed_out;
  bool embed_project = false;
  auto* embed = analyze->add_subcommand("embed", "export feature embeddings with labels");
  add_common(embed, embed_opts);
  embed->add_option("--checkpoint", embed_ckpt)->required();
  embed->add_option("--manifest", embed_manifest)->required();
  embed->add_flag("--project", embed_project, "append 2-d t-SNE coordinates");
  embed->add_option("--out", embed_out)->required();

  auto* plot = app.add_subcommand("plot", "emit figures (SVG)");
  plot->require_subcommand(1);
  CommonOptions roc_opts;
  std::vector<std::string> roc_preds;
  std::string roc_out;
  auto* plot_roc = plot->add_subcommand("roc", "overlaid ROC curves from TB predictions");
  add_common(plot_roc, roc_opts);
  plot_roc->add_option("--predictions", roc_preds)->required();
  plot_roc->add_option("--out", roc_out)->required();

  CommonOptions ba_opts;
  std::string ba_preds, ba_out;
  auto* plot_ba = plot->add_subcommand("bland-altman", "age agreement scatter");
  add_common(plot_ba, ba_opts);
  plot_ba->add_option("--predictions", ba_preds)->required();
  plot_ba->add_option("--out", ba_out)->required();

  CommonOptions tsne_opts;
  std::string tsne_embeddings, tsne_color = "gender", tsne_out;
  auto* plot_tsne = plot->add_subcommand("tsne", "embedding scatter");
  add_common(plot_tsne, tsne_opts);
  plot_tsne->add_option("--embeddings", tsne_embeddings)->required();
  plot_tsne->add_option("--color-by", tsne_color, "gender | position | age");
  plot_tsne->add_option("--out", tsne_out)->required();

  std::string synth_dir;
  int synth_patients = 30, synth_size = 64, synth_shenzhen = 40, synth_montgomery = 10;
  std::uint64_t synth_seed = 42;
  auto* synth = app.add_subcommand("synth", "generate a synthetic test corpus + config");
  synth->add_option("--out-dir", synth_dir)->required();
  synth->add_option("--n-patients", synth_patients);
  synth->add_option("--image-size", synth_size);
  synth->add_option("--shenzhen-per-class", synth_shenzhen);
  synth->add_option("--montgomery-per-class", synth_montgomery);
  synth->add_option("--seed", synth_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) return cmd_prepare(prepare_opts);
    if (*train) return cmd_train(train_opts, train_phase, train_init);
    if (*predict)
      return cmd_predict(predict_opts, predict_ckpt, predict_manifest, predict_out,
                         predict_images);
    if (*evaluate)
      return cmd_evaluate(eval_opts, eval_preds, eval_manifests, eval_combine, eval_out);
    if (*tb_logit) return cmd_analyze_tb_logit(logit_opts, logit_preds, logit_out, logit_l2);
    if (*embed)
      return cmd_analyze_embed(embed_opts, embed_ckpt, embed_manifest, embed_out, embed_project);
    if (*plot_roc) return cmd_plot_roc(roc_opts, roc_preds, roc_out);
    if (*plot_ba) return cmd_plot_bland_altman(ba_opts, ba_preds, ba_out);
    if (*plot_tsne) return cmd_plot_tsne(tsne_opts, tsne_embeddings, tsne_color, tsne_out);
    if (*synth)
      return cmd_synth(synth_dir, synth_patients, synth_size, synth_shenzhen, synth_montgomery,
                       synth_seed);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
