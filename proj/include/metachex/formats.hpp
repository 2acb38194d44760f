#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metachex/analysis.hpp"
#include "metachex/common.hpp"
#include "metachex/data_ingest.hpp"
#include "metachex/model.hpp"
#include "metachex/report.hpp"
#include "metachex/training.hpp"

namespace metachex {

// ---------------------------------------------------------------------------
// Split manifests: '#'-prefixed header, then one image id per line.

struct ManifestFile {
  SplitManifest manifest;
  std::string config_hash;
};

inline void write_manifest(const std::string& path, const SplitManifest& manifest,
                           const std::string& config_hash) {
  std::string text = cat("# split=", to_string(manifest.split_name), "\n# seed=", manifest.seed,
                         "\n# config_hash=", config_hash, "\n");
  for (const auto& id : manifest.entries) text += id + "\n";
  write_text_file(path, text);
}

namespace detail {

inline std::string header_value(const std::string& line, const std::string& key,
                                const std::string& path) {
  const std::string prefix = cat("# ", key, "=");
  if (line.rfind(prefix, 0) != 0)
    fail(cat(path, ": expected '", prefix, "...' header line, got '", line, "'"));
  return line.substr(prefix.size());
}

}  // namespace detail

inline ManifestFile read_manifest(const std::string& path) {
  const std::string text = read_text_file(path);
  auto lines = split(text, '\n');
  require(lines.size() >= 3, cat(path, ": not a split manifest"));
  ManifestFile file;
  file.manifest.split_name =
      split_name_from_string(detail::header_value(lines[0], "split", path));
  file.manifest.seed = std::stoull(detail::header_value(lines[1], "seed", path));
  file.config_hash = detail::header_value(lines[2], "config_hash", path);
  for (std::size_t i = 3; i < lines.size(); ++i) {
    const std::string id = trim(lines[i]);
    if (!id.empty()) file.manifest.entries.push_back(id);
  }
  return file;
}

// Re-derives a TB label from the image-id suffix convention.
inline TbSampleRecord tb_record_from_id(const std::string& image_id, DatasetTag tag,
                                        const TbLabelingSpec& labeling = {}) {
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  TbSampleRecord rec;
  rec.image_id = image_id;
  rec.dataset_tag = tag;
  if (ends_with(image_id, labeling.negative_suffix)) rec.label = 0;
  else if (ends_with(image_id, labeling.positive_suffix)) rec.label = 1;
  else fail(cat("image id does not follow the labeling convention (expected '",
                labeling.negative_suffix, "' or '", labeling.positive_suffix,
                "' suffix): ", image_id));
  return rec;
}

// ---------------------------------------------------------------------------
// Predictions: tab-separated with a self-describing column header.

struct PredictionFile {
  Variant variant = Variant::chexnet;
  std::vector<PredictionRecord> records;
  std::string config_hash;
};

namespace detail {

inline std::vector<std::string> prediction_columns(Variant variant) {
  std::vector<std::string> cols = {"image_id"};
  if (variant == Variant::tb) {
    cols.push_back("tb_prob");
    return cols;
  }
  for (const auto& name : kPathologyNames) cols.push_back(name);
  if (variant == Variant::metachexnet) {
    cols.push_back("gender_male_prob");
    cols.push_back("position_pa_prob");
    cols.push_back("age_scaled");
  }
  return cols;
}

}  // namespace detail

inline void write_predictions(const std::string& path, Variant variant,
                              const std::vector<PredictionRecord>& records,
                              const std::string& config_hash) {
  std::string text = cat("# config_hash=", config_hash, "\n# variant=", to_string(variant), "\n");
  const auto cols = detail::prediction_columns(variant);
  for (std::size_t i = 0; i < cols.size(); ++i) text += (i ? "\t" : "") + cols[i];
  text += "\n";
  for (const auto& r : records) {
    text += r.image_id;
    if (variant == Variant::tb) {
      text += "\t" + format_double(r.tb_prob);
    } else {
      for (double p : r.pathology_probs) text += "\t" + format_double(p);
      if (variant == Variant::metachexnet) {
        text += "\t" + format_double(r.gender_prob);
        text += "\t" + format_double(r.position_prob);
        text += "\t" + format_double(r.age_scaled);
      }
    }
    text += "\n";
  }
  write_text_file(path, text);
}

inline PredictionFile read_predictions(const std::string& path) {
  const std::string text = read_text_file(path);
  auto lines = split(text, '\n');
  require(lines.size() >= 3, cat(path, ": not a prediction file"));
  PredictionFile file;
  file.config_hash = detail::header_value(lines[0], "config_hash", path);
  file.variant = variant_from_string(detail::header_value(lines[1], "variant", path));
  const auto expected_cols = detail::prediction_columns(file.variant);
  auto header = split(lines[2], '\t');
  require(header == expected_cols, cat(path, ": column header does not match variant ",
                                       to_string(file.variant)));
  for (std::size_t i = 3; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto fields = split(lines[i], '\t');
    require(fields.size() == expected_cols.size(),
            cat(path, " line ", i + 1, ": expected ", expected_cols.size(), " fields, got ",
                fields.size()));
    PredictionRecord r;
    r.image_id = fields[0];
    if (file.variant == Variant::tb) {
      r.tb_prob = std::stod(fields[1]);
    } else {
      for (std::size_t k = 0; k < kNumPathologies; ++k) r.pathology_probs[k] = std::stod(fields[1 + k]);
      if (file.variant == Variant::metachexnet) {
        r.gender_prob = std::stod(fields[15]);
        r.position_prob = std::stod(fields[16]);
        r.age_scaled = std::stod(fields[17]);
      }
    }
    file.records.push_back(std::move(r));
  }
  return file;
}

// ---------------------------------------------------------------------------
// Training log: one JSON object per line, header line first.

inline void write_training_log(const std::string& path, int phase, Variant variant,
                               const std::vector<EpochRecord>& log,
                               const std::string& config_hash) {
  std::string text =
      nlohmann::json{{"config_hash", config_hash}, {"phase", phase}, {"variant", to_string(variant)}}
          .dump() +
      "\n";
  for (const auto& rec : log) {
    nlohmann::json j{{"epoch", rec.epoch},
                     {"train_loss", rec.train_loss},
                     {"train_binary", rec.train_binary},
                     {"train_age", rec.train_age},
                     {"val_loss", rec.val_loss},
                     {"val_binary", rec.val_binary},
                     {"val_age", rec.val_age},
                     {"lr", rec.lr},
                     {"reduced", rec.reduced},
                     {"stopped", rec.stopped},
                     {"is_best", rec.is_best}};
    j["val_auc"] = rec.val_auc ? nlohmann::json(*rec.val_auc) : nlohmann::json(nullptr);
    text += j.dump() + "\n";
  }
  write_text_file(path, text);
}

// ---------------------------------------------------------------------------
// Evaluation reports (JSON).

inline nlohmann::json multitask_report_json(const MultitaskEvalReport& report,
                                            const std::string& config_hash) {
  nlohmann::json per_pathology;
  for (std::size_t k = 0; k < kNumPathologies; ++k)
    per_pathology[kPathologyNames[k]] = report.pathology.per_pathology[k]
                                            ? nlohmann::json(*report.pathology.per_pathology[k])
                                            : nlohmann::json(nullptr);
  return nlohmann::json{
      {"config_hash", config_hash},
      {"kind", "multitask"},
      {"n_images", report.n_images},
      {"pathology",
       {{"per_pathology", per_pathology},
        {"mean_auc", report.pathology.mean_auc},
        {"excluded", report.pathology.excluded}}},
      {"gender_auc", report.gender_auc ? nlohmann::json(*report.gender_auc) : nlohmann::json(nullptr)},
      {"position_auc",
       report.position_auc ? nlohmann::json(*report.position_auc) : nlohmann::json(nullptr)},
      {"age",
       {{"mean_error", report.age.mean_error},
        {"std_error", report.age.std_error},
        {"mean_abs_error", report.age.mean_abs_error},
        {"n", report.age.n}}},
      {"bland_altman",
       {{"bias", report.bland_altman.bias},
        {"sd_diff", report.bland_altman.sd_diff},
        {"loa_lower", report.bland_altman.loa_lower},
        {"loa_upper", report.bland_altman.loa_upper}}},
      {"age_outliers", report.age_outliers}};
}

inline nlohmann::json tb_report_json(const TbEvalReport& report, const std::string& config_hash) {
  auto set_json = [](const TbSetEval& s) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : s.roc.points)
      points.push_back({{"fpr", p.fpr},
                        {"tpr", p.tpr},
                        {"threshold", std::isinf(p.threshold) ? nlohmann::json(nullptr)
                                                              : nlohmann::json(p.threshold)}});
    return nlohmann::json{{"name", s.name}, {"n", s.n}, {"auc", s.auc}, {"roc_points", points}};
  };
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& s : report.sets) sets.push_back(set_json(s));
  return nlohmann::json{{"config_hash", config_hash},
                        {"kind", "tb"},
                        {"sets", sets},
                        {"combined", report.combined ? set_json(*report.combined)
                                                     : nlohmann::json(nullptr)}};
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Embedding export: image_id, labels, feature columns, optional 2-d point.

inline void write_embeddings(const std::string& path, const EmbeddingExport& embeddings,
                             const std::string& config_hash) {
  const bool projected = !embeddings.rows.empty() && embeddings.rows.front().projected.has_value();
  std::string text = cat("# config_hash=", config_hash, "\n# feature_dim=",
                         embeddings.feature_dim, "\n");
  text += "image_id\tgender\tposition\tage_years";
  for (std::size_t f = 1; f <= embeddings.feature_dim; ++f) text += cat("\tf_", f);
  if (projected) text += "\tx\ty";
  text += "\n";
  for (const auto& row : embeddings.rows) {
    require(row.features.size() == embeddings.feature_dim,
            "embedding export: ragged feature vectors");
    require(row.projected.has_value() == projected,
            "embedding export: projection present for only some rows");
    text += cat(row.image_id, "\t", to_string(row.gender), "\t", to_string(row.position), "\t",
                format_double(row.age_years));
    for (double f : row.features) text += "\t" + format_double(f);
    if (projected)
      text += cat("\t", format_double((*row.projected)[0]), "\t", format_double((*row.projected)[1]));
    text += "\n";
  }
  write_text_file(path, text);
}

struct EmbeddingFile {
  EmbeddingExport embeddings;
  std::string config_hash;
};

inline EmbeddingFile read_embeddings(const std::string& path) {
  const std::string text = read_text_file(path);
  auto lines = split(text, '\n');
  require(lines.size() >= 3, cat(path, ": not an embedding file"));
  EmbeddingFile file;
  file.config_hash = detail::header_value(lines[0], "config_hash", path);
  file.embeddings.feature_dim = std::stoull(detail::header_value(lines[1], "feature_dim", path));
  auto header = split(lines[2], '\t');
  const std::size_t base_cols = 4 + file.embeddings.feature_dim;
  const bool projected = header.size() == base_cols + 2;
  require(projected || header.size() == base_cols,
          cat(path, ": header has ", header.size(), " columns, expected ", base_cols, " or ",
          base_cols + 2));
  for (std::size_t i = 3; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto fields = split(lines[i], '\t');
    require(fields.size() == header.size(),
            cat(path, " line ", i + 1, ": expected ", header.size(), " fields, got ",
                fields.size()));
    EmbeddingRow row;
    row.image_id = fields[0];
    if (fields[1] == "M") row.gender = Gender::Male;
    else if (fields[1] == "F") row.gender = Gender::Female;
    else fail(cat(path, " line ", i + 1, ": unknown gender '", fields[1], "'"));
    if (fields[2] == "AP") row.position = ViewPosition::AP;
    else if (fields[2] == "PA") row.position = ViewPosition::PA;
    else fail(cat(path, " line ", i + 1, ": unknown view position '", fields[2], "'"));
    row.age_years = std::stod(fields[3]);
    for (std::size_t f = 0; f < file.embeddings.feature_dim; ++f)
      row.features.push_back(std::stod(fields[4 + f]));
    if (projected)
      row.projected = {{std::stod(fields[base_cols]), std::stod(fields[base_cols + 1])}};
    file.embeddings.rows.push_back(std::move(row));
  }
  return file;
}

// ---------------------------------------------------------------------------
// Logistic regression model (JSON, coefficients in canonical label order).

inline nlohmann::json logistic_model_json(const LogisticModel& model,
                                          const std::string& config_hash) {
  nlohmann::json coefficients = nlohmann::json::array();
  for (std::size_t k = 0; k < kNumPathologies; ++k)
    coefficients.push_back(
        {{"pathology", kPathologyNames[k]}, {"coefficient", model.coefficients[k]}});
  return nlohmann::json{{"config_hash", config_hash},
                        {"coefficients", coefficients},
                        {"intercept", model.intercept},
                        {"l2_strength", model.l2_strength},
                        {"fit_accuracy", model.fit_accuracy},
                        {"converged", model.converged},
                        {"iterations", model.iterations}};
}

inline LogisticModel read_logistic_model(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(cat(path, ": not a logistic model file: ", e.what()));
  }
  LogisticModel model;
  const auto& coefficients = j.at("coefficients");
  require(coefficients.size() == kNumPathologies,
          cat(path, ": expected ", kNumPathologies, " coefficients"));
  for (std::size_t k = 0; k < kNumPathologies; ++k) {
    require(coefficients[k].at("pathology").get<std::string>() == kPathologyNames[k],
            cat(path, ": coefficient ", k, " is not in canonical label order"));
    model.coefficients[k] = coefficients[k].at("coefficient").get<double>();
  }
  model.intercept = j.at("intercept").get<double>();
  model.l2_strength = j.at("l2_strength").get<double>();
  model.fit_accuracy = j.at("fit_accuracy").get<double>();
  model.converged = j.at("converged").get<bool>();
  model.iterations = j.at("iterations").get<int>();
  return model;
}

}  // namespace metachex
