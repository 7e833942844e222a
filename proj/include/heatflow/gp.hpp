#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "heatflow/heatkernel.hpp"

namespace heatflow {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

enum class LikelihoodKind { gaussian, bernoulli_logistic };

/// Canonical exponential-family likelihood: Gaussian with identity link or
/// Bernoulli with logistic link.
struct LikelihoodSpec {
  LikelihoodKind kind = LikelihoodKind::gaussian;
  double noise_sd = 0.1;  // sigma_eta, gaussian only

  void validate() const {
    if (kind == LikelihoodKind::gaussian && !(noise_sd > 0))
      throw std::invalid_argument("LikelihoodSpec: noise_sd must be > 0");
  }
};

struct PosteriorSummary {
  Eigen::VectorXd mean;        // predictive mean of the mean function phi
  Eigen::VectorXd variance;    // predictive variance of the latent f
  Eigen::VectorXd class_prob;  // classification only, empty otherwise
};

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

/// Cholesky with relative-jitter escalation over three decades
/// (1e-10, 1e-9, 1e-8 of the mean diagonal); throws on persistent failure.
inline Eigen::LLT<Eigen::MatrixXd> llt_with_escalation(const Eigen::MatrixXd& K,
                                                       double base_level = 1e-10) {
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() == Eigen::Success) return llt;
  double level = base_level;
  for (int attempt = 0; attempt < 3; ++attempt, level *= 10.0) {
    llt.compute(add_jitter(K, level));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw std::runtime_error("llt_with_escalation: factorization failed after jitter escalation");
}

}  // namespace detail

/// Gaussian marginal log-likelihood:
/// -1/2 y^T (K + sigma^2 I)^{-1} y - 1/2 log det(K + sigma^2 I) - m/2 log 2pi.
inline double gaussian_marginal_loglik(const Eigen::MatrixXd& Kmm, const Eigen::VectorXd& y,
                                       double noise_sd) {
  if (Kmm.rows() != Kmm.cols() || Kmm.rows() != y.size())
    throw std::invalid_argument("gaussian_marginal_loglik: shape mismatch");
  Eigen::MatrixXd C = Kmm;
  C.diagonal().array() += noise_sd * noise_sd;
  const auto llt = detail::llt_with_escalation(C);
  const Eigen::VectorXd alpha = llt.solve(y);
  const double m = static_cast<double>(y.size());
  double logdet = 0.0;
  for (Index i = 0; i < y.size(); ++i) logdet += std::log(llt.matrixLLT()(i, i));
  return -0.5 * y.dot(alpha) - logdet - 0.5 * m * kLog2Pi;
}

/// Conjugate GP regression posterior:
///   mu* = Kxm (Kmm + sigma^2 I)^{-1} y
///   var* = diag(Kxx) - diag(Kxm (Kmm + sigma^2 I)^{-1} Kmx), clamped at 0.
inline PosteriorSummary gp_regression_predict_blocks(const Eigen::MatrixXd& Kmm,
                                                     const Eigen::MatrixXd& Kxm,
                                                     const Eigen::VectorXd& kxx_diag,
                                                     const Eigen::VectorXd& y, double noise_sd) {
  if (Kmm.rows() != y.size() || Kxm.cols() != y.size() || kxx_diag.size() != Kxm.rows())
    throw std::invalid_argument("gp_regression_predict_blocks: shape mismatch");
  Eigen::MatrixXd C = Kmm;
  C.diagonal().array() += noise_sd * noise_sd;
  const auto llt = detail::llt_with_escalation(C);

  PosteriorSummary out;
  out.mean = Kxm * llt.solve(y);
  const Eigen::MatrixXd half = llt.matrixL().solve(Kxm.transpose());  // m x ntest
  out.variance = (kxx_diag - half.colwise().squaredNorm().transpose()).cwiseMax(0.0);
  return out;
}

/// Covariance-backed overload: test indices must be disjoint from the
/// training prefix [0, m).
template <class Cov>
PosteriorSummary gp_regression_predict(const Cov& cov, const Eigen::VectorXd& y, double noise_sd,
                                       const std::vector<Index>& test, double jitter = 1e-10) {
  const Index m = y.size();
  for (Index t : test)
    if (t < m) throw std::invalid_argument("gp_regression_predict: test index inside training prefix");
  std::vector<Index> train(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) train[static_cast<std::size_t>(i)] = i;
  const Eigen::MatrixXd Kmm = add_jitter(covariance_block(cov, train, train), jitter);
  const Eigen::MatrixXd Kxm = covariance_block(cov, test, train);
  const Eigen::VectorXd kxx = covariance_diagonal(cov, test);
  return gp_regression_predict_blocks(Kmm, Kxm, kxx, y, noise_sd);
}

/// Laplace approximation state at the posterior mode.
struct LaplaceFit {
  Eigen::VectorXd mode;       // f-hat
  Eigen::VectorXd pi;         // logistic(f-hat)
  Eigen::VectorXd W;          // site precisions pi (1 - pi)
  Eigen::VectorXd grad_data;  // y - pi
  Eigen::MatrixXd chol_B;     // lower Cholesky of B = I + sqrt(W) K sqrt(W)
  double evidence = 0.0;      // Laplace approximation of log p(y)
  double grad_inf_norm = 0.0;
  Index iterations = 0;
  bool converged = false;
};

/// Newton iterations maximizing log p(y|f) - 1/2 f^T K^{-1} f (the stable
/// formulation of GPML Algorithm 3.1) until the objective gradient's
/// inf-norm drops below tol.
inline LaplaceFit laplace_fit(const Eigen::MatrixXd& Kmm, const Eigen::VectorXd& y,
                              double tol = 1e-6, Index max_iter = 100) {
  const Index m = y.size();
  if (Kmm.rows() != m || Kmm.cols() != m)
    throw std::invalid_argument("laplace_fit: shape mismatch");
  for (Index i = 0; i < m; ++i)
    if (y[i] != 0.0 && y[i] != 1.0)
      throw std::invalid_argument("laplace_fit: labels must be 0 or 1");

  LaplaceFit fit;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m);

  for (Index iter = 1; iter <= max_iter; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd pi(m), W(m);
    for (Index i = 0; i < m; ++i) {
      pi[i] = logistic(f[i]);
      W[i] = std::max(pi[i] * (1.0 - pi[i]), 1e-300);
    }
    const Eigen::VectorXd sqW = W.cwiseSqrt();
    Eigen::MatrixXd B = sqW.asDiagonal() * Kmm * sqW.asDiagonal();
    B.diagonal().array() += 1.0;
    const auto llt = detail::llt_with_escalation(B);

    const Eigen::VectorXd b = W.cwiseProduct(f) + (y - pi);
    const Eigen::VectorXd Kb = Kmm * b;
    a = b - sqW.cwiseProduct(llt.solve(sqW.cwiseProduct(Kb)));
    f = Kmm * a;

    // Objective gradient at the new iterate: (y - pi(f)) - K^{-1} f, with
    // K^{-1} f = a available from the stable update.
    Eigen::VectorXd pi_new(m);
    for (Index i = 0; i < m; ++i) pi_new[i] = logistic(f[i]);
    fit.grad_inf_norm = ((y - pi_new) - a).lpNorm<Eigen::Infinity>();
    if (fit.grad_inf_norm < tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged)
    throw std::runtime_error("laplace_fit: Newton did not converge; last gradient inf-norm " +
                             std::to_string(fit.grad_inf_norm));

  fit.mode = f;
  fit.pi.resize(m);
  fit.W.resize(m);
  for (Index i = 0; i < m; ++i) {
    fit.pi[i] = logistic(f[i]);
    fit.W[i] = std::max(fit.pi[i] * (1.0 - fit.pi[i]), 1e-300);
  }
  fit.grad_data = y - fit.pi;

  const Eigen::VectorXd sqW = fit.W.cwiseSqrt();
  Eigen::MatrixXd B = sqW.asDiagonal() * Kmm * sqW.asDiagonal();
  B.diagonal().array() += 1.0;
  const auto llt = detail::llt_with_escalation(B);
  fit.chol_B = llt.matrixL();

  double loglik = 0.0;
  for (Index i = 0; i < m; ++i)
    loglik += y[i] > 0.5 ? std::log(std::max(fit.pi[i], 1e-300))
                         : std::log(std::max(1.0 - fit.pi[i], 1e-300));
  double logdet = 0.0;
  for (Index i = 0; i < m; ++i) logdet += std::log(fit.chol_B(i, i));
  fit.evidence = -0.5 * a.dot(f) + loglik - logdet;
  return fit;
}

/// Gauss-Hermite nodes/weights for weight exp(-x^2), by Golub-Welsch on the
/// Jacobi matrix. Deterministic; no tabulated constants.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  explicit GaussHermite(Index order = 64) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
    for (Index i = 1; i < order; ++i) {
      const double b = std::sqrt(static_cast<double>(i) / 2.0);
      J(i, i - 1) = b;
      J(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    nodes = es.eigenvalues();
    weights.resize(order);
    const double sqrt_pi = std::sqrt(3.1415926535897932384626433832795);
    for (Index i = 0; i < order; ++i) {
      const double w0 = es.eigenvectors()(0, i);
      weights[i] = sqrt_pi * w0 * w0;
    }
  }

  /// E[logistic(Z)] for Z ~ N(mean, var).
  double expected_logistic(double mean, double var) const {
    const double sd = std::sqrt(std::max(var, 0.0));
    if (sd == 0.0) return logistic(mean);
    double acc = 0.0;
    const double sqrt2 = 1.4142135623730950488016887242097;
    for (Index i = 0; i < nodes.size(); ++i)
      acc += weights[i] * logistic(mean + sqrt2 * sd * nodes[i]);
    return acc / std::sqrt(3.1415926535897932384626433832795);
  }
};

/// Laplace predictive distribution: latent mean/variance by the standard
/// formulas, class probability by Gauss-Hermite quadrature of the logistic
/// link against the latent Gaussian. 64 nodes keep the quadrature within
/// 1e-6 of a dense oracle over |mean| <= 5, var <= 10.
inline PosteriorSummary laplace_predict_prob(const LaplaceFit& fit, const Eigen::MatrixXd& Kxm,
                                             const Eigen::VectorXd& kxx_diag) {
  if (!fit.converged) throw std::runtime_error("laplace_predict_prob: fit did not converge");
  if (Kxm.cols() != fit.mode.size() || kxx_diag.size() != Kxm.rows())
    throw std::invalid_argument("laplace_predict_prob: shape mismatch");

  PosteriorSummary out;
  out.mean = Kxm * fit.grad_data;
  const Eigen::VectorXd sqW = fit.W.cwiseSqrt();
  const Eigen::MatrixXd half = fit.chol_B.triangularView<Eigen::Lower>().solve(
      sqW.asDiagonal() * Kxm.transpose());  // m x ntest
  out.variance = (kxx_diag - half.colwise().squaredNorm().transpose()).cwiseMax(0.0);

  static const GaussHermite gh(64);
  out.class_prob.resize(out.mean.size());
  for (Index i = 0; i < out.mean.size(); ++i)
    out.class_prob[i] = gh.expected_logistic(out.mean[i], out.variance[i]);
  out.mean = out.class_prob;  // the mean function phi is the class probability
  return out;
}

// ---- Evaluation metrics ------------------------------------------------

/// Mean 0-1 loss at threshold 1/2; a probability of exactly 1/2 counts as
/// class 1.
inline double metric_error_rate(const Eigen::VectorXd& prob, const Eigen::VectorXd& truth) {
  if (prob.size() != truth.size() || prob.size() == 0)
    throw std::invalid_argument("metric_error_rate: need equal nonzero lengths");
  Index wrong = 0;
  for (Index i = 0; i < prob.size(); ++i) {
    const double pred = prob[i] >= 0.5 ? 1.0 : 0.0;
    if (pred != truth[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(prob.size());
}

inline double metric_rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size() || pred.size() == 0)
    throw std::invalid_argument("metric_rmse: need equal nonzero lengths");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

/// Mean per-point negative predictive log-likelihood, Bernoulli form.
inline double metric_nll_bernoulli(const Eigen::VectorXd& prob, const Eigen::VectorXd& truth) {
  if (prob.size() != truth.size() || prob.size() == 0)
    throw std::invalid_argument("metric_nll_bernoulli: need equal nonzero lengths");
  double acc = 0.0;
  for (Index i = 0; i < prob.size(); ++i) {
    const double p = std::min(std::max(prob[i], 1e-15), 1.0 - 1e-15);
    acc -= truth[i] > 0.5 ? std::log(p) : std::log(1.0 - p);
  }
  return acc / static_cast<double>(prob.size());
}

/// Gaussian predictive NLL including the observation noise sigma_eta^2.
inline double metric_nll_gaussian(const Eigen::VectorXd& mean, const Eigen::VectorXd& var,
                                  double noise_sd, const Eigen::VectorXd& truth) {
  if (mean.size() != truth.size() || var.size() != truth.size() || mean.size() == 0)
    throw std::invalid_argument("metric_nll_gaussian: need equal nonzero lengths");
  double acc = 0.0;
  for (Index i = 0; i < mean.size(); ++i) {
    const double s2 = var[i] + noise_sd * noise_sd;
    acc += 0.5 * (kLog2Pi + std::log(s2) + (truth[i] - mean[i]) * (truth[i] - mean[i]) / s2);
  }
  return acc / static_cast<double>(mean.size());
}

}  // namespace heatflow
