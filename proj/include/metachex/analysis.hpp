#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metachex/data_ingest.hpp"
#include "metachex/model.hpp"
#include "metachex/training.hpp"

namespace metachex {

// ln(p / (1-p)) with the probability clamped away from {0,1}.
inline double logit(double p, double eps = 1e-7) {
  const double q = std::clamp(p, eps, 1.0 - eps);
  return std::log(q / (1.0 - q));
}

// One image's regression row: log-odds of the 14 pathology outputs.
struct LogOddsFeatures {
  std::array<double, kNumPathologies> x{};
  int tb_label = 0;
};

inline LogOddsFeatures make_log_odds(const PredictionRecord& pred, int tb_label,
                                     double eps = 1e-7) {
  LogOddsFeatures f;
  for (std::size_t k = 0; k < kNumPathologies; ++k) f.x[k] = logit(pred.pathology_probs[k], eps);
  f.tb_label = tb_label;
  return f;
}

struct LogisticModel {
  std::array<double, kNumPathologies> coefficients{};
  double intercept = 0.0;
  double l2_strength = 1.0;
  double fit_accuracy = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

struct RawLogisticFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double fit_accuracy = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Penalized log-likelihood: sum_i [y ln p + (1-y) ln(1-p)] - (l2/2)||w||^2,
// intercept unpenalized. Probabilities are clamped only inside the
// likelihood so saturated fits stay finite.
inline double penalized_log_likelihood(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& w, double l2) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double p = std::clamp(1.0 / (1.0 + std::exp(-z[i])), 1e-12, 1.0 - 1e-12);
    ll += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return ll - 0.5 * l2 * w.squaredNorm();
}

// Newton / iteratively reweighted least squares with step halving. With no
// penalty, coefficients growing without bound indicate separated classes:
// the likelihood supremum is not attained, so the fit is flagged as
// non-converged.
inline RawLogisticFit fit_logistic_raw(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       double l2, double grad_tol = 1e-8, int max_iters = 100) {
  require(X.rows() == y.size(), "logistic fit: feature/label count mismatch");
  require(X.rows() > 0, "logistic fit: empty data");
  require(l2 >= 0, "logistic fit: l2_strength must be non-negative");
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    require(y[i] == 0.0 || y[i] == 1.0, "logistic fit: labels must be 0 or 1");
    if (y[i] == 1.0) ++pos;
  }
  if (pos == 0 || static_cast<Eigen::Index>(pos) == y.size())
    fail("logistic fit: only one class present");

  const Eigen::Index n = X.rows(), d = X.cols();
  Eigen::MatrixXd A(n, d + 1);
  A.leftCols(d) = X;
  A.col(d).setOnes();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
  constexpr double kSeparationGuard = 10.0;
  constexpr double kStallGradTol = 1e-6;

  RawLogisticFit fit;
  Eigen::VectorXd z = A * theta;
  double ll = penalized_log_likelihood(z, y, theta.head(d), l2);
  for (int iter = 0; iter < max_iters; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + std::exp(-z[i]));
    Eigen::VectorXd grad = A.transpose() * (y - p);
    grad.head(d) -= l2 * theta.head(d);
    if (grad.norm() < grad_tol) {
      fit.converged = true;
      break;
    }
    if (l2 == 0.0 && theta.head(d).lpNorm<Eigen::Infinity>() > kSeparationGuard) break;

    Eigen::VectorXd s = p.array() * (1.0 - p.array());
    Eigen::MatrixXd H = A.transpose() * s.asDiagonal() * A;
    H.topLeftCorner(d, d).diagonal().array() += l2;
    Eigen::VectorXd delta = H.ldlt().solve(grad);
    if (!delta.allFinite()) break;

    double alpha = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, alpha *= 0.5) {
      Eigen::VectorXd candidate = theta + alpha * delta;
      Eigen::VectorXd zc = A * candidate;
      const double llc = penalized_log_likelihood(zc, y, candidate.head(d), l2);
      if (llc > ll) {
        theta = std::move(candidate);
        z = std::move(zc);
        ll = llc;
        improved = true;
        break;
      }
    }
    if (!improved) {
      // The likelihood is flat at double resolution, so no step can be
      // accepted; certify stationarity by the gradient already in hand.
      fit.converged = grad.norm() < kStallGradTol;
      break;
    }
  }

  fit.coefficients = theta.head(d);
  fit.intercept = theta[d];
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    if ((p > 0.5 ? 1.0 : 0.0) == y[i]) ++correct;
  }
  fit.fit_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return fit;
}

}  // namespace detail

inline LogisticModel fit_logistic(const std::vector<LogOddsFeatures>& features,
                                  double l2_strength = 1.0) {
  require(!features.empty(), "logistic fit: empty data");
  const Eigen::Index n = static_cast<Eigen::Index>(features.size());
  Eigen::MatrixXd X(n, kNumPathologies);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < kNumPathologies; ++k) X(i, k) = features[i].x[k];
    y[i] = features[i].tb_label;
  }
  auto raw = detail::fit_logistic_raw(X, y, l2_strength);
  LogisticModel model;
  for (std::size_t k = 0; k < kNumPathologies; ++k) model.coefficients[k] = raw.coefficients[k];
  model.intercept = raw.intercept;
  model.l2_strength = l2_strength;
  model.fit_accuracy = raw.fit_accuracy;
  model.converged = raw.converged;
  model.iterations = raw.iterations;
  return model;
}

inline double logistic_predict(const LogisticModel& model, const LogOddsFeatures& f) {
  double z = model.intercept;
  for (std::size_t k = 0; k < kNumPathologies; ++k) z += model.coefficients[k] * f.x[k];
  return 1.0 / (1.0 + std::exp(-z));
}

struct EmbeddingRow {
  std::string image_id;
  Gender gender = Gender::Female;
  ViewPosition position = ViewPosition::AP;
  double age_years = 0.0;
  std::vector<double> features;
  std::optional<std::array<double, 2>> projected;
};

struct EmbeddingExport {
  std::size_t feature_dim = 0;
  std::vector<EmbeddingRow> rows;
};

struct EmbeddingExportResult {
  EmbeddingExport embeddings;
  std::vector<std::string> errors;  // "image_id: reason", one per failed image
};

// Frozen-model feature vectors with metadata sidecar labels. A missing or
// unreadable image is recorded and skipped; the run continues.
inline EmbeddingExportResult export_embeddings(Model& model,
                                               const std::vector<SampleRecord>& records,
                                               const ImageProvider& provider,
                                               const PreprocessConfig& pre, int batch_size = 16) {
  EmbeddingExportResult result;
  result.embeddings.feature_dim = static_cast<std::size_t>(model.feature_dim());
  std::vector<const SampleRecord*> loadable;
  std::vector<Tensor> images;
  for (const auto& rec : records) {
    try {
      images.push_back(normalize_image(resize_for_model(provider.load(rec.image_id), pre), pre));
      loadable.push_back(&rec);
    } catch (const std::exception& e) {
      result.errors.push_back(cat(rec.image_id, ": ", e.what()));
    }
  }
  for (std::size_t start = 0; start < loadable.size(); start += batch_size) {
    const std::size_t stop = std::min(loadable.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Tensor> batch_images(images.begin() + start, images.begin() + stop);
    ModelOutput out = model.forward(detail::stack_images(batch_images), false);
    for (std::size_t i = start; i < stop; ++i) {
      EmbeddingRow row;
      row.image_id = loadable[i]->image_id;
      row.gender = loadable[i]->gender;
      row.position = loadable[i]->position;
      row.age_years = loadable[i]->age_years;
      row.features.resize(result.embeddings.feature_dim);
      for (std::size_t f = 0; f < row.features.size(); ++f)
        row.features[f] = out.features.at(i - start, f);
      result.embeddings.rows.push_back(std::move(row));
    }
  }
  return result;
}

}  // namespace metachex
