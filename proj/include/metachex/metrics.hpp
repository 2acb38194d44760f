#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "metachex/data_ingest.hpp"
#include "metachex/tensor.hpp"

namespace metachex {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Threshold sweep over the distinct score values, descending; tied scores
// move as one block. AUC is the trapezoidal area under the resulting curve.
inline RocResult roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), "roc: scores and labels differ in length");
  require(!scores.empty(), "roc: empty input");
  std::size_t pos = 0, neg = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, "roc: labels must be 0 or 1");
    y ? ++pos : ++neg;
  }
  if (pos == 0 || neg == 0) fail("AUC undefined: only one class present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult res;
  res.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      labels[order[i]] ? ++tp : ++fp;
      ++i;
    }
    res.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  for (std::size_t k = 1; k < res.points.size(); ++k)
    res.auc += (res.points[k].fpr - res.points[k - 1].fpr) *
               (res.points[k].tpr + res.points[k - 1].tpr) / 2.0;
  return res;
}

inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return roc_curve(scores, labels).auc;
}

// Per-pathology AUCs over (N,14) score/label matrices. Pathologies with a
// single label class have no defined AUC; they are listed and left out of
// the mean rather than failing the whole evaluation.
struct PathologyAucReport {
  std::array<std::optional<double>, kNumPathologies> per_pathology;
  double mean_auc = 0.0;
  std::vector<std::string> excluded;
};

inline PathologyAucReport pathology_auc_report(const Tensor& scores, const Tensor& labels) {
  require(scores.rank() == 2 && scores.dim(1) == kNumPathologies,
          "pathology auc: scores must be (N, 14)");
  require(scores.same_shape(labels), "pathology auc: label shape mismatch");
  const std::size_t n = scores.dim(0);
  PathologyAucReport report;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < kNumPathologies; ++k) {
    std::vector<double> s(n);
    std::vector<int> y(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores.at(i, k);
      y[i] = labels.at(i, k) != 0.0 ? 1 : 0;
      (y[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) {
      report.excluded.push_back(kPathologyNames[k]);
      continue;
    }
    report.per_pathology[k] = roc_auc(s, y);
    sum += *report.per_pathology[k];
    ++defined;
  }
  if (defined == 0) fail("AUC undefined: every pathology has a single class");
  report.mean_auc = sum / static_cast<double>(defined);
  return report;
}

struct AgeErrorStats {
  double mean_error = 0.0;      // signed, predicted - actual
  double std_error = 0.0;       // sample standard deviation (n-1)
  double mean_abs_error = 0.0;
  std::size_t n = 0;
};

inline AgeErrorStats age_error_stats(const std::vector<double>& predicted,
                                     const std::vector<double>& actual) {
  require(predicted.size() == actual.size(), "age stats: size mismatch");
  require(predicted.size() >= 2, "age stats: need at least 2 samples for a sample std");
  AgeErrorStats st;
  st.n = predicted.size();
  for (std::size_t i = 0; i < st.n; ++i) {
    const double e = predicted[i] - actual[i];
    st.mean_error += e;
    st.mean_abs_error += std::abs(e);
  }
  st.mean_error /= static_cast<double>(st.n);
  st.mean_abs_error /= static_cast<double>(st.n);
  double ss = 0.0;
  for (std::size_t i = 0; i < st.n; ++i) {
    const double d = predicted[i] - actual[i] - st.mean_error;
    ss += d * d;
  }
  st.std_error = std::sqrt(ss / static_cast<double>(st.n - 1));
  return st;
}

struct BlandAltmanResult {
  double bias = 0.0;       // mean difference
  double sd_diff = 0.0;    // sample std of the differences (n-1)
  double loa_lower = 0.0;  // bias - 1.96 * sd
  double loa_upper = 0.0;  // bias + 1.96 * sd
  std::vector<double> means;  // per-pair (predicted + actual) / 2
  std::vector<double> diffs;  // per-pair predicted - actual
};

inline BlandAltmanResult bland_altman(const std::vector<double>& predicted,
                                      const std::vector<double>& actual) {
  require(predicted.size() == actual.size(), "bland-altman: size mismatch");
  require(predicted.size() >= 2, "bland-altman: need at least 2 pairs");
  BlandAltmanResult res;
  const std::size_t n = predicted.size();
  res.means.resize(n);
  res.diffs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.means[i] = (predicted[i] + actual[i]) / 2.0;
    res.diffs[i] = predicted[i] - actual[i];
    res.bias += res.diffs[i];
  }
  res.bias /= static_cast<double>(n);
  double ss = 0.0;
  for (double d : res.diffs) ss += (d - res.bias) * (d - res.bias);
  res.sd_diff = std::sqrt(ss / static_cast<double>(n - 1));
  res.loa_lower = res.bias - 1.96 * res.sd_diff;
  res.loa_upper = res.bias + 1.96 * res.sd_diff;
  return res;
}

}  // namespace metachex
