#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metachex/data_ingest.hpp"
#include "metachex/metrics.hpp"
#include "metachex/model.hpp"
#include "metachex/preprocess.hpp"

namespace metachex {

struct MultitaskEvalReport {
  std::size_t n_images = 0;
  PathologyAucReport pathology;
  std::optional<double> gender_auc;    // absent when the split has one gender
  std::optional<double> position_auc;  // absent when the split has one view
  AgeErrorStats age;                   // in years
  BlandAltmanResult bland_altman;      // predicted vs labeled age, years
  std::vector<std::string> age_outliers;  // |diff - bias| > 1.96 sd, sorted by image_id
};

namespace detail {

inline std::optional<double> auc_if_defined(const std::vector<double>& scores,
                                            const std::vector<int>& labels) {
  bool has0 = false, has1 = false;
  for (int y : labels) (y ? has1 : has0) = true;
  if (!has0 || !has1) return std::nullopt;
  return roc_auc(scores, labels);
}

template <typename Record>
std::map<std::string, const Record*> index_by_id(const std::vector<Record>& records) {
  std::map<std::string, const Record*> index;
  for (const auto& r : records) index[r.image_id] = &r;
  return index;
}

}  // namespace detail

// Joins predictions with labeled records by image_id; the two sets must
// cover exactly the same images.
inline MultitaskEvalReport build_multitask_report(const std::vector<PredictionRecord>& preds,
                                                  const std::vector<SampleRecord>& records,
                                                  const PreprocessConfig& pre) {
  require(preds.size() == records.size(),
          cat("evaluate: ", preds.size(), " predictions vs ", records.size(), " labeled records"));
  auto index = detail::index_by_id(records);
  const std::size_t n = preds.size();
  require(index.size() == n, "evaluate: duplicate image ids in the labeled records");

  MultitaskEvalReport report;
  report.n_images = n;
  Tensor scores({n, kNumPathologies}), labels({n, kNumPathologies});
  std::vector<double> gender_scores(n), position_scores(n);
  std::vector<int> gender_labels(n), position_labels(n);
  std::vector<double> age_pred(n), age_actual(n);

  for (std::size_t i = 0; i < n; ++i) {
    auto it = index.find(preds[i].image_id);
    if (it == index.end())
      fail(cat("evaluate: prediction for ", preds[i].image_id, " has no labeled record"));
    const SampleRecord& rec = *it->second;
    for (std::size_t k = 0; k < kNumPathologies; ++k) {
      scores.at(i, k) = preds[i].pathology_probs[k];
      labels.at(i, k) = rec.pathology[k];
    }
    gender_scores[i] = preds[i].gender_prob;
    gender_labels[i] = rec.gender == Gender::Male ? 1 : 0;
    position_scores[i] = preds[i].position_prob;
    position_labels[i] = rec.position == ViewPosition::PA ? 1 : 0;
    age_pred[i] = unscale_age(preds[i].age_scaled, pre);
    age_actual[i] = rec.age_years;
  }

  report.pathology = pathology_auc_report(scores, labels);
  report.gender_auc = detail::auc_if_defined(gender_scores, gender_labels);
  report.position_auc = detail::auc_if_defined(position_scores, position_labels);
  report.age = age_error_stats(age_pred, age_actual);
  report.bland_altman = bland_altman(age_pred, age_actual);
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(report.bland_altman.diffs[i] - report.bland_altman.bias) >
        1.96 * report.bland_altman.sd_diff)
      report.age_outliers.push_back(preds[i].image_id);
  std::sort(report.age_outliers.begin(), report.age_outliers.end());
  return report;
}

struct TbSetEval {
  std::string name;
  std::size_t n = 0;
  double auc = 0.0;
  RocResult roc;
};

struct TbEvalReport {
  std::vector<TbSetEval> sets;
  std::optional<TbSetEval> combined;  // single score scale, no recalibration
};

struct TbScoredSet {
  std::string name;
  std::vector<double> probs;
  std::vector<int> labels;
};

inline TbScoredSet score_tb_set(const std::string& name,
                                const std::vector<PredictionRecord>& preds,
                                const std::vector<TbSampleRecord>& records) {
  require(preds.size() == records.size(),
          cat("evaluate: ", preds.size(), " predictions vs ", records.size(), " labeled records"));
  auto index = detail::index_by_id(records);
  require(index.size() == preds.size(), "evaluate: duplicate image ids in the labeled records");
  TbScoredSet set;
  set.name = name;
  for (const auto& pred : preds) {
    auto it = index.find(pred.image_id);
    if (it == index.end())
      fail(cat("evaluate: prediction for ", pred.image_id, " has no labeled record"));
    set.probs.push_back(pred.tb_prob);
    set.labels.push_back(it->second->label);
  }
  return set;
}

inline TbEvalReport build_tb_report(const std::vector<TbScoredSet>& sets, bool combine) {
  require(!sets.empty(), "evaluate: no prediction sets");
  TbEvalReport report;
  for (const auto& s : sets) {
    TbSetEval ev;
    ev.name = s.name;
    ev.n = s.probs.size();
    ev.roc = roc_curve(s.probs, s.labels);
    ev.auc = ev.roc.auc;
    report.sets.push_back(std::move(ev));
  }
  if (combine) {
    TbSetEval all;
    all.name = "combined";
    std::vector<double> probs;
    std::vector<int> labels;
    for (const auto& s : sets) {
      probs.insert(probs.end(), s.probs.begin(), s.probs.end());
      labels.insert(labels.end(), s.labels.begin(), s.labels.end());
    }
    all.n = probs.size();
    all.roc = roc_curve(probs, labels);
    all.auc = all.roc.auc;
    report.combined = std::move(all);
  }
  return report;
}

}  // namespace metachex
