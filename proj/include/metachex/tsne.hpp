#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "metachex/common.hpp"
#include "metachex/rng.hpp"

namespace metachex {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 500;
  double learning_rate = 100.0;
  double early_exaggeration = 4.0;
  int exaggeration_iters = 50;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 250;
  std::uint64_t seed = 0;

  void validate() const {
    require(perplexity > 0, "tsne: perplexity must be positive");
    require(iterations >= 1, "tsne: iterations must be >= 1");
    require(learning_rate > 0, "tsne: learning_rate must be positive");
  }
};

namespace detail {

// Per-point precision search: find beta = 1/(2 sigma^2) whose conditional
// distribution has the requested perplexity (entropy log2-perplexity match
// via natural-log entropy).
inline Eigen::VectorXd conditional_probs(const Eigen::VectorXd& dist_row, Eigen::Index self,
                                         double perplexity) {
  const double target_entropy = std::log(perplexity);
  double beta = 1.0, beta_lo = 0.0, beta_hi = 0.0;
  bool has_lo = false, has_hi = false;
  Eigen::VectorXd p(dist_row.size());
  for (int iter = 0; iter < 64; ++iter) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < dist_row.size(); ++j) {
      p[j] = j == self ? 0.0 : std::exp(-beta * dist_row[j]);
      sum += p[j];
    }
    double entropy = 0.0;
    for (Eigen::Index j = 0; j < dist_row.size(); ++j) {
      p[j] /= sum;
      if (p[j] > 1e-300) entropy -= p[j] * std::log(p[j]);
    }
    const double diff = entropy - target_entropy;
    if (std::abs(diff) < 1e-7) break;
    if (diff > 0) {  // too flat: sharpen
      beta_lo = beta;
      has_lo = true;
      beta = has_hi ? (beta_lo + beta_hi) / 2.0 : beta * 2.0;
    } else {
      beta_hi = beta;
      has_hi = true;
      beta = has_lo ? (beta_lo + beta_hi) / 2.0 : beta / 2.0;
    }
  }
  return p;
}

}  // namespace detail

// Exact (quadratic-cost) t-SNE to two dimensions. Deterministic for a fixed
// seed: the only randomness is the Gaussian initialization.
inline Eigen::MatrixXd run_tsne(const Eigen::MatrixXd& points, const TsneConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = points.rows();
  if (static_cast<double>(n) < 3.0 * cfg.perplexity)
    fail(cat("too few points for perplexity ", cfg.perplexity, ": need at least ",
             static_cast<long>(3.0 * cfg.perplexity), ", got ", static_cast<long>(n)));

  // pairwise squared distances
  Eigen::VectorXd sq = points.rowwise().squaredNorm();
  Eigen::MatrixXd D = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
                      2.0 * points * points.transpose();
  D = D.cwiseMax(0.0);

  // symmetrized joint probabilities
  Eigen::MatrixXd P(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    P.row(i) = detail::conditional_probs(D.row(i), i, cfg.perplexity).transpose();
  P = (P + P.transpose().eval()) / (2.0 * static_cast<double>(n));
  P = P.cwiseMax(1e-12);
  P.diagonal().setZero();

  Rng rng = substream(cfg.seed, "tsne_init");
  Eigen::MatrixXd Y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int d = 0; d < 2; ++d) Y(i, d) = rng.normal() * 1e-2;

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    const double momentum =
        iter < cfg.momentum_switch_iter ? cfg.initial_momentum : cfg.final_momentum;

    // student-t affinities in the embedding
    Eigen::MatrixXd num(n, n);
    double qsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d2 = (Y.row(i) - Y.row(j)).squaredNorm();
        num(i, j) = num(j, i) = 1.0 / (1.0 + d2);
        qsum += 2.0 * num(i, j);
      }
    }

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num(i, j) / qsum, 1e-12);
        const double mult = 4.0 * (exaggeration * P(i, j) - q) * num(i, j);
        grad.row(i) += mult * (Y.row(i) - Y.row(j));
      }
    }

    for (Eigen::Index i = 0; i < n; ++i)
      for (int d = 0; d < 2; ++d) {
        const bool same_sign = (grad(i, d) > 0.0) == (velocity(i, d) > 0.0);
        gains(i, d) = std::max(same_sign ? gains(i, d) * 0.8 : gains(i, d) + 0.2, 0.01);
        velocity(i, d) = momentum * velocity(i, d) - cfg.learning_rate * gains(i, d) * grad(i, d);
        Y(i, d) += velocity(i, d);
      }
    Y.rowwise() -= Y.colwise().mean();
  }
  return Y;
}

}  // namespace metachex
