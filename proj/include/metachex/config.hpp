#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "metachex/analysis.hpp"
#include "metachex/common.hpp"
#include "metachex/data_ingest.hpp"
#include "metachex/model.hpp"
#include "metachex/training.hpp"
#include "metachex/tsne.hpp"

namespace metachex {

// One structured config drives a whole run; every artifact embeds the hash
// of its canonical serialization.
struct RunConfig {
  // inputs and outputs
  std::string metadata_csv;
  std::string chestxray14_dir;
  std::string shenzhen_dir;
  std::string montgomery_dir;
  std::string imagenet_weights;
  std::string output_dir = "out";

  // identity
  std::uint64_t seed = 42;
  Variant variant = Variant::metachexnet;

  // splits
  std::array<double, 3> split_fractions = {0.7, 0.1, 0.2};
  TbSplitCounts tb_counts = {{226, 236}, {50, 50}, {50, 50}};

  BackboneConfig backbone;
  PreprocessConfig preprocess;
  AugmentConfig augment_phase1{.phase = AugmentPhase::phase1};
  AugmentConfig augment_phase2{.phase = AugmentPhase::phase2};
  LossConfig loss;
  PlateauConfig plateau;

  // training
  int phase1_epochs = 10;
  int phase2_epochs = 20;
  int batch_size = 16;
  double initial_lr = 1e-3;

  // analysis
  TsneConfig tsne;
  double l2_strength = 1.0;

  void validate() const {
    backbone.validate();
    preprocess.validate();
    augment_phase1.validate();
    augment_phase2.validate();
    loss.validate();
    plateau.validate();
    tsne.validate();
    require(phase1_epochs >= 1 && phase2_epochs >= 1, "config: epochs must be >= 1");
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(initial_lr > 0, "config: initial_lr must be positive");
    require(l2_strength >= 0, "config: l2_strength must be non-negative");
  }
};

namespace detail {

inline nlohmann::json augment_json(const AugmentConfig& a) {
  return {{"flip_prob", a.flip_prob},
          {"scale_range", a.scale_range},
          {"intensity_range", a.intensity_range},
          {"per_op_prob", a.per_op_prob}};
}

inline void augment_from_json(const nlohmann::json& j, AugmentConfig& a) {
  a.flip_prob = j.value("flip_prob", a.flip_prob);
  a.scale_range = j.value("scale_range", a.scale_range);
  a.intensity_range = j.value("intensity_range", a.intensity_range);
  a.per_op_prob = j.value("per_op_prob", a.per_op_prob);
}

}  // namespace detail

inline nlohmann::json run_config_json(const RunConfig& c) {
  return {
      {"metadata_csv", c.metadata_csv},
      {"chestxray14_dir", c.chestxray14_dir},
      {"shenzhen_dir", c.shenzhen_dir},
      {"montgomery_dir", c.montgomery_dir},
      {"imagenet_weights", c.imagenet_weights},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
      {"variant", to_string(c.variant)},
      {"split_fractions", c.split_fractions},
      {"tb_counts",
       {{"train", {{"negatives", c.tb_counts.train.negatives}, {"positives", c.tb_counts.train.positives}}},
        {"validation",
         {{"negatives", c.tb_counts.validation.negatives},
          {"positives", c.tb_counts.validation.positives}}},
        {"test", {{"negatives", c.tb_counts.test.negatives}, {"positives", c.tb_counts.test.positives}}}}},
      {"backbone",
       {{"family", to_string(c.backbone.family)},
        {"compression", c.backbone.compression},
        {"feature_dim", c.backbone.feature_dim},
        {"pretrained_source", to_string(c.backbone.pretrained_source)}}},
      {"preprocess",
       {{"target_size", c.preprocess.target_size},
        {"channel_mean", c.preprocess.channel_mean},
        {"channel_std", c.preprocess.channel_std},
        {"age_scale_max", c.preprocess.age_scale_max}}},
      {"augment_phase1", detail::augment_json(c.augment_phase1)},
      {"augment_phase2", detail::augment_json(c.augment_phase2)},
      {"loss",
       {{"binary_weight", c.loss.binary_weight},
        {"age_weight", c.loss.age_weight},
        {"drop_suspect_ages", c.loss.drop_suspect_ages},
        {"clamp_eps", c.loss.clamp_eps}}},
      {"plateau",
       {{"factor", c.plateau.factor},
        {"patience", c.plateau.patience},
        {"min_delta", c.plateau.min_delta},
        {"min_lr", c.plateau.min_lr},
        {"stop_patience", c.plateau.stop_patience}}},
      {"phase1_epochs", c.phase1_epochs},
      {"phase2_epochs", c.phase2_epochs},
      {"batch_size", c.batch_size},
      {"initial_lr", c.initial_lr},
      {"tsne",
       {{"perplexity", c.tsne.perplexity},
        {"iterations", c.tsne.iterations},
        {"learning_rate", c.tsne.learning_rate},
        {"seed", c.tsne.seed}}},
      {"l2_strength", c.l2_strength}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.metadata_csv = j.value("metadata_csv", c.metadata_csv);
  c.chestxray14_dir = j.value("chestxray14_dir", c.chestxray14_dir);
  c.shenzhen_dir = j.value("shenzhen_dir", c.shenzhen_dir);
  c.montgomery_dir = j.value("montgomery_dir", c.montgomery_dir);
  c.imagenet_weights = j.value("imagenet_weights", c.imagenet_weights);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.seed = j.value("seed", c.seed);
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.split_fractions = j.value("split_fractions", c.split_fractions);
  if (j.contains("tb_counts")) {
    const auto& t = j.at("tb_counts");
    auto read = [](const nlohmann::json& s, TbClassCounts& counts) {
      counts.negatives = s.value("negatives", counts.negatives);
      counts.positives = s.value("positives", counts.positives);
    };
    if (t.contains("train")) read(t.at("train"), c.tb_counts.train);
    if (t.contains("validation")) read(t.at("validation"), c.tb_counts.validation);
    if (t.contains("test")) read(t.at("test"), c.tb_counts.test);
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    if (b.contains("family"))
      c.backbone.family = backbone_family_from_string(b.at("family").get<std::string>());
    c.backbone.compression = b.value("compression", c.backbone.compression);
    c.backbone.feature_dim = b.value("feature_dim", c.backbone.feature_dim);
    if (b.contains("pretrained_source"))
      c.backbone.pretrained_source =
          pretrained_source_from_string(b.at("pretrained_source").get<std::string>());
  }
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    c.preprocess.target_size = p.value("target_size", c.preprocess.target_size);
    c.preprocess.channel_mean = p.value("channel_mean", c.preprocess.channel_mean);
    c.preprocess.channel_std = p.value("channel_std", c.preprocess.channel_std);
    c.preprocess.age_scale_max = p.value("age_scale_max", c.preprocess.age_scale_max);
  }
  if (j.contains("augment_phase1")) detail::augment_from_json(j.at("augment_phase1"), c.augment_phase1);
  if (j.contains("augment_phase2")) detail::augment_from_json(j.at("augment_phase2"), c.augment_phase2);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.loss.binary_weight = l.value("binary_weight", c.loss.binary_weight);
    c.loss.age_weight = l.value("age_weight", c.loss.age_weight);
    c.loss.drop_suspect_ages = l.value("drop_suspect_ages", c.loss.drop_suspect_ages);
    c.loss.clamp_eps = l.value("clamp_eps", c.loss.clamp_eps);
  }
  if (j.contains("plateau")) {
    const auto& p = j.at("plateau");
    c.plateau.factor = p.value("factor", c.plateau.factor);
    c.plateau.patience = p.value("patience", c.plateau.patience);
    c.plateau.min_delta = p.value("min_delta", c.plateau.min_delta);
    c.plateau.min_lr = p.value("min_lr", c.plateau.min_lr);
    c.plateau.stop_patience = p.value("stop_patience", c.plateau.stop_patience);
  }
  c.phase1_epochs = j.value("phase1_epochs", c.phase1_epochs);
  c.phase2_epochs = j.value("phase2_epochs", c.phase2_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.initial_lr = j.value("initial_lr", c.initial_lr);
  if (j.contains("tsne")) {
    const auto& t = j.at("tsne");
    c.tsne.perplexity = t.value("perplexity", c.tsne.perplexity);
    c.tsne.iterations = t.value("iterations", c.tsne.iterations);
    c.tsne.learning_rate = t.value("learning_rate", c.tsne.learning_rate);
    c.tsne.seed = t.value("seed", c.tsne.seed);
  }
  c.l2_strength = j.value("l2_strength", c.l2_strength);
  c.augment_phase1.phase = AugmentPhase::phase1;
  c.augment_phase2.phase = AugmentPhase::phase2;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(cat(path, ": invalid config JSON: ", e.what()));
  }
  return run_config_from_json(j);
}

// Hash of the canonical (key-sorted) serialization; embedded in artifacts.
inline std::string config_hash(const RunConfig& c) {
  return hex64(fnv1a64(run_config_json(c).dump()));
}

// Relative data paths resolve against a configured root directory.
inline void resolve_data_paths(RunConfig& c, const std::string& data_root) {
  if (data_root.empty()) return;
  auto resolve = [&](std::string& path) {
    if (!path.empty() && std::filesystem::path(path).is_relative())
      path = (std::filesystem::path(data_root) / path).string();
  };
  resolve(c.metadata_csv);
  resolve(c.chestxray14_dir);
  resolve(c.shenzhen_dir);
  resolve(c.montgomery_dir);
  resolve(c.imagenet_weights);
}

inline TrainConfig phase1_train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.phase1_epochs;
  t.batch_size = c.batch_size;
  t.initial_lr = c.initial_lr;
  t.seed = c.seed;
  t.loss = c.loss;
  t.plateau = c.plateau;
  t.augment = c.augment_phase1;
  t.preprocess = c.preprocess;
  return t;
}

inline TrainConfig phase2_train_config(const RunConfig& c) {
  TrainConfig t = phase1_train_config(c);
  t.epochs = c.phase2_epochs;
  t.augment = c.augment_phase2;
  return t;
}

}  // namespace metachex
