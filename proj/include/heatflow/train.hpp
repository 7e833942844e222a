#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "heatflow/basekernel.hpp"
#include "heatflow/dataset.hpp"
#include "heatflow/gp.hpp"
#include "heatflow/graph.hpp"
#include "heatflow/heatkernel.hpp"
#include "heatflow/spectral.hpp"
#include "heatflow/subsample.hpp"

namespace heatflow {

struct FLGPConfig {
  Index s = 600;
  Index r = 3;
  Index M = 100;
  SubsampleMethod subsampling = SubsampleMethod::kmeans;
  KernelKind kernel = KernelKind::squared_exponential;

  /// epsilon grid: explicit values win; otherwise factors times eps0, the
  /// median distance from points to their r-th nearest landmark.
  std::vector<double> eps_grid;
  std::vector<double> eps_factors = {0.25, 0.5, 1.0, 2.0, 4.0};

  /// t in [t_lo_factor, t_hi_factor] * diam^2; sigma_eta in
  /// [sigma_lo_factor, sigma_hi_factor] * std(y) (regression only).
  double t_lo_factor = 1e-3;
  double t_hi_factor = 10.0;
  double sigma_lo_factor = 1e-3;
  double sigma_hi_factor = 1.0;

  std::uint64_t seed = 0;

  Index kmeans_max_iter = 100;
  double kmeans_tol_factor = 1e-6;  // times cloud diameter
  Index minibatch_batch = 1024;
  Index minibatch_iters = 100;
  Index lae_max_iter = 200;
  double lae_tol = 1e-8;
  double tsvd_tol = 1e-10;
  double jitter = 1e-10;

  void validate() const {
    if (s < 1 || r < 1 || r > s || M < 1 || M > s)
      throw std::invalid_argument("FLGPConfig: need 1 <= r <= s and 1 <= M <= s");
    if (eps_grid.empty() && eps_factors.empty())
      throw std::invalid_argument("FLGPConfig: epsilon grid must be non-empty");
    if (!(t_lo_factor > 0) || t_hi_factor < t_lo_factor)
      throw std::invalid_argument("FLGPConfig: t bounds must be positive and ordered");
    if (!(sigma_lo_factor > 0) || sigma_hi_factor < sigma_lo_factor)
      throw std::invalid_argument("FLGPConfig: sigma bounds must be positive and ordered");
  }
};

struct StageTimes {
  double subsample = 0, kernel = 0, graph = 0, tsvd = 0, optimize = 0, predict = 0;
  double total() const { return subsample + kernel + graph + tsvd + optimize + predict; }
};

struct FitReport {
  double epsilon = std::numeric_limits<double>::quiet_NaN();   // NaN when no bandwidth
  double t = std::numeric_limits<double>::quiet_NaN();
  double noise_sd = std::numeric_limits<double>::quiet_NaN();  // NaN for classification
  double best_loglik = -std::numeric_limits<double>::infinity();
  StageTimes stages;
  Index spectral_count = 0;  // spectral-stage invocations over the grid
  PosteriorSummary posterior;
  bool has_metrics = false;
  double error_rate = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double nll = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  double& sink_;
  std::chrono::steady_clock::time_point start_;
};

/// Golden-section maximization on [lo, hi] to interval width tol. The best
/// evaluated point is tracked directly, so the result never falls below an
/// endpoint value.
template <class F>
std::pair<double, double> golden_max(F&& f, double lo, double hi, double tol) {
  double best_x = lo, best_f = f(lo);
  if (hi <= lo) return {best_x, best_f};
  const double fhi = f(hi);
  if (fhi > best_f) {
    best_f = fhi;
    best_x = hi;
  }
  const double gr = 0.61803398874989484820458683436564;
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  const auto track = [&](double x, double v) {
    if (v > best_f) {
      best_f = v;
      best_x = x;
    }
  };
  track(c, fc);
  track(d, fd);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
      track(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
      track(d, fd);
    }
  }
  return {best_x, best_f};
}

inline double sample_sd(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 0.0;
  const double mean = y.mean();
  return std::sqrt((y.array() - mean).square().sum() / static_cast<double>(y.size() - 1));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
  }
  return hi;
}

}  // namespace detail

struct OptimizeResult {
  double t = 0;
  double sigma = 0;
  double loglik = -std::numeric_limits<double>::infinity();
};

/// Coordinate search: golden section on log t and log sigma alternately,
/// `sweeps` rounds, tolerance `tol` in log space, maximizing the objective.
/// Pass has_sigma = false for likelihoods without a noise parameter.
template <class Obj>
OptimizeResult optimize_t_sigma(Obj&& objective, std::pair<double, double> t_bounds,
                                std::pair<double, double> sigma_bounds, bool has_sigma,
                                int sweeps = 3, double tol = 1e-3) {
  if (!(t_bounds.first > 0) || t_bounds.second < t_bounds.first)
    throw std::invalid_argument("optimize_t_sigma: t bounds must be positive and ordered");
  if (has_sigma && (!(sigma_bounds.first > 0) || sigma_bounds.second < sigma_bounds.first))
    throw std::invalid_argument("optimize_t_sigma: sigma bounds must be positive and ordered");

  const double lt_lo = std::log(t_bounds.first), lt_hi = std::log(t_bounds.second);
  const double ls_lo = has_sigma ? std::log(sigma_bounds.first) : 0.0;
  const double ls_hi = has_sigma ? std::log(sigma_bounds.second) : 0.0;

  OptimizeResult best;
  best.t = std::exp(0.5 * (lt_lo + lt_hi));
  best.sigma = has_sigma ? std::exp(0.5 * (ls_lo + ls_hi)) : 0.0;
  best.loglik = objective(best.t, best.sigma);

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    {
      const double sigma = best.sigma;
      auto [lx, fx] = detail::golden_max(
          [&](double lt) { return objective(std::exp(lt), sigma); }, lt_lo, lt_hi, tol);
      if (fx > best.loglik) {
        best.loglik = fx;
        best.t = std::exp(lx);
      }
    }
    if (has_sigma) {
      const double t = best.t;
      auto [lx, fx] = detail::golden_max(
          [&](double ls) { return objective(t, std::exp(ls)); }, ls_lo, ls_hi, tol);
      if (fx > best.loglik) {
        best.loglik = fx;
        best.sigma = std::exp(lx);
      }
    }
  }
  return best;
}

namespace detail {

struct Candidate {
  double loglik = -std::numeric_limits<double>::infinity();
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  double t = 0;
  double sigma = 0;
  double divisor = 1.0;
  LaplacianSpectrum spectrum;
};

/// Ties in log-likelihood break toward smaller epsilon, then smaller t.
inline bool candidate_better(const Candidate& a, const Candidate& b) {
  if (a.loglik != b.loglik) return a.loglik > b.loglik;
  const double ae = std::isnan(a.epsilon) ? 0.0 : a.epsilon;
  const double be = std::isnan(b.epsilon) ? 0.0 : b.epsilon;
  if (ae != be) return ae < be;
  return a.t < b.t;
}

/// Optimizes (t, sigma_eta) for a fixed spectrum by empirical Bayes on the
/// m x m training block; classification uses the Laplace evidence.
inline OptimizeResult optimize_for_spectrum(const LaplacianSpectrum& spec, double divisor, Index n,
                                            const Dataset& ds,
                                            std::pair<double, double> t_bounds,
                                            std::pair<double, double> sigma_bounds, double jitter) {
  const Index m = ds.m();
  std::vector<Index> train(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) train[static_cast<std::size_t>(i)] = i;

  const auto block_at = [&](double t) {
    const HeatKernelCovariance cov(spec, t, divisor, n);
    return add_jitter(covariance_block(cov, train, train), jitter);
  };

  if (ds.task == Task::regression) {
    return optimize_t_sigma(
        [&](double t, double sigma) { return gaussian_marginal_loglik(block_at(t), ds.labels, sigma); },
        t_bounds, sigma_bounds, true);
  }
  return optimize_t_sigma(
      [&](double t, double) {
        try {
          return laplace_fit(block_at(t), ds.labels).evidence;
        } catch (const std::runtime_error&) {
          return -std::numeric_limits<double>::infinity();
        }
      },
      t_bounds, sigma_bounds, false);
}

/// Posterior on the unlabeled suffix plus held-out metrics when the dataset
/// carries evaluation truth.
inline void predict_and_score(const Candidate& best, const Dataset& ds, double jitter,
                              FitReport& report) {
  const Index n = ds.n(), m = ds.m();
  report.epsilon = best.epsilon;
  report.t = best.t;
  report.noise_sd = ds.task == Task::regression ? best.sigma
                                                : std::numeric_limits<double>::quiet_NaN();
  report.best_loglik = best.loglik;
  if (m == n) return;

  const HeatKernelCovariance cov(best.spectrum, best.t, best.divisor, n);
  std::vector<Index> train(static_cast<std::size_t>(m)), test(static_cast<std::size_t>(n - m));
  for (Index i = 0; i < m; ++i) train[static_cast<std::size_t>(i)] = i;
  for (Index i = m; i < n; ++i) test[static_cast<std::size_t>(i - m)] = i;

  if (ds.task == Task::regression) {
    report.posterior = gp_regression_predict(cov, ds.labels, best.sigma, test, jitter);
  } else {
    const Eigen::MatrixXd Kmm = add_jitter(covariance_block(cov, train, train), jitter);
    const auto fit = laplace_fit(Kmm, ds.labels);
    const Eigen::MatrixXd Kxm = covariance_block(cov, test, train);
    const Eigen::VectorXd kxx = covariance_diagonal(cov, test);
    report.posterior = laplace_predict_prob(fit, Kxm, kxx);
  }

  if (ds.truth.size() == n) {
    const Eigen::VectorXd truth = ds.truth.tail(n - m);
    report.has_metrics = true;
    if (ds.task == Task::regression) {
      report.rmse = metric_rmse(report.posterior.mean, truth);
      report.nll = metric_nll_gaussian(report.posterior.mean, report.posterior.variance,
                                       best.sigma, truth);
    } else {
      report.error_rate = metric_error_rate(report.posterior.class_prob, truth);
      report.nll = metric_nll_bernoulli(report.posterior.class_prob, truth);
    }
  }
}

inline std::pair<double, double> resolve_t_bounds(const FLGPConfig& cfg, double diam) {
  const double d2 = std::max(diam * diam, 1e-12);
  return {cfg.t_lo_factor * d2, cfg.t_hi_factor * d2};
}

inline std::pair<double, double> resolve_sigma_bounds(double lo_factor, double hi_factor,
                                                      const Eigen::VectorXd& y) {
  const double sd = std::max(sample_sd(y), 1e-8);
  return {lo_factor * sd, hi_factor * sd};
}

}  // namespace detail

/// Algorithm: subsample induced points, build the sparse base kernel, the
/// cross similarity/transition pair and the Laplacian spectrum, then optimize
/// (epsilon by grid search, t and sigma_eta by marginal likelihood) and
/// predict on the unlabeled suffix. The spectral stage runs once per epsilon
/// candidate for the squared-exponential kernel and exactly once for LAE.
inline FitReport fit_flgp(const Dataset& ds, const FLGPConfig& cfg) {
  ds.validate();
  cfg.validate();
  if (cfg.s > ds.n()) throw std::invalid_argument("fit_flgp: s must not exceed n");

  FitReport report;
  const Index n = ds.n();
  const double diam = ds.cloud.diameter();

  InducedPointSet ips;
  {
    detail::StageTimer timer(report.stages.subsample);
    const std::uint64_t seed_sub = splitmix64(cfg.seed ^ 0x5u);
    switch (cfg.subsampling) {
      case SubsampleMethod::random:
        ips = random_subsample(ds.cloud, cfg.s, seed_sub);
        break;
      case SubsampleMethod::kmeans:
        ips = kmeans_lloyd(ds.cloud, cfg.s, cfg.kmeans_max_iter, cfg.kmeans_tol_factor * diam,
                           seed_sub);
        break;
      case SubsampleMethod::minibatch_kmeans:
        ips = minibatch_kmeans(ds.cloud, cfg.s, cfg.minibatch_batch, cfg.minibatch_iters, seed_sub);
        break;
    }
  }
  const Index r = std::min(cfg.r, ips.s());
  const Index M = std::min(cfg.M, ips.s());

  LandmarkNeighborTable table;
  {
    detail::StageTimer timer(report.stages.kernel);
    table = nearest_landmarks(ds.cloud, ips.centers, r);
  }

  std::vector<double> grid;
  if (cfg.kernel == KernelKind::squared_exponential) {
    if (!cfg.eps_grid.empty()) {
      grid = cfg.eps_grid;
    } else {
      std::vector<double> dists(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i)
        dists[static_cast<std::size_t>(i)] = std::sqrt(table.d2(i, r - 1));
      const double eps0 = std::max(detail::median(std::move(dists)), 1e-12);
      for (double f : cfg.eps_factors) grid.push_back(f * eps0);
    }
  } else {
    grid.push_back(std::numeric_limits<double>::quiet_NaN());  // single LAE pass
  }

  const auto t_bounds = detail::resolve_t_bounds(cfg, diam);
  const auto sigma_bounds =
      detail::resolve_sigma_bounds(cfg.sigma_lo_factor, cfg.sigma_hi_factor, ds.labels);
  const std::uint64_t seed_tsvd = splitmix64(cfg.seed ^ 0x9u);

  detail::Candidate best;
  bool have_best = false;
  for (const double eps : grid) {
    detail::Candidate cand;
    cand.epsilon = eps;
    cand.divisor = cfg.kernel == KernelKind::squared_exponential ? eps * eps : 1.0;

    SparseCrossMatrix K;
    {
      detail::StageTimer timer(report.stages.kernel);
      K = cfg.kernel == KernelKind::squared_exponential
              ? se_kernel_from_table(table, ips.s(), eps)
              : lae_kernel_from_table(ds.cloud, ips.centers, table, cfg.lae_max_iter, cfg.lae_tol);
    }
    TransitionPair tp;
    {
      detail::StageTimer timer(report.stages.graph);
      tp = row_normalize(cross_similarity(K, ips.counts));
    }
    {
      detail::StageTimer timer(report.stages.tsvd);
      cand.spectrum = truncated_svd(tp, std::min(M, tp.Z.cols), cfg.tsvd_tol, -1, seed_tsvd);
      ++report.spectral_count;
    }
    {
      detail::StageTimer timer(report.stages.optimize);
      const auto opt = detail::optimize_for_spectrum(cand.spectrum, cand.divisor, n, ds, t_bounds,
                                                     sigma_bounds, cfg.jitter);
      cand.loglik = opt.loglik;
      cand.t = opt.t;
      cand.sigma = opt.sigma;
    }
    if (!have_best || detail::candidate_better(cand, best)) {
      best = std::move(cand);
      have_best = true;
    }
  }
  if (!have_best || !std::isfinite(best.loglik))
    throw std::runtime_error("fit_flgp: every grid candidate failed");

  {
    detail::StageTimer timer(report.stages.predict);
    detail::predict_and_score(best, ds, cfg.jitter, report);
  }
  return report;
}

// ---- Baselines ----------------------------------------------------------

struct BaselineConfig {
  std::vector<double> eps_grid;
  std::vector<double> eps_factors = {0.25, 0.5, 1.0, 2.0, 4.0};
  /// GLGP wants very small bandwidths on its dense graph; its grid sits one
  /// octave lower relative to the local-scale estimate.
  std::vector<double> glgp_eps_factors = {0.125, 0.25, 0.5, 1.0, 2.0};
  double t_lo_factor = 1e-3;
  double t_hi_factor = 10.0;
  double sigma_lo_factor = 1e-3;
  double sigma_hi_factor = 1.0;
  Index M = 100;               // graph baselines
  Index r = 3;                 // Nystrom eps0 scale (r-th nearest landmark)
  std::uint64_t seed = 0;
  double jitter = 1e-10;
  Index dense_guard = 20000;
  double tsvd_tol = 1e-10;
};

namespace detail {

/// Dense covariance over {labeled points} x {all points}; the "virtual
/// covariance" interface used by the shared prediction path.
struct DenseKernelCovariance {
  Eigen::MatrixXd cross;  // n x m: k(x_i, x_j) for labeled j
  Index n = 0;

  Eigen::MatrixXd block(const std::vector<Index>& rows, const std::vector<Index>& cols) const {
    Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b)
        out(static_cast<Index>(a), static_cast<Index>(b)) = cross(rows[a], cols[b]);
    return out;
  }
};

inline Eigen::MatrixXd covariance_block(const DenseKernelCovariance& cov,
                                        const std::vector<Index>& rows,
                                        const std::vector<Index>& cols) {
  return cov.block(rows, cols);
}

inline Eigen::VectorXd covariance_diagonal(const DenseKernelCovariance& cov,
                                           const std::vector<Index>& idx) {
  // Squared-exponential kernel: unit diagonal.
  (void)cov;
  return Eigen::VectorXd::Ones(static_cast<Index>(idx.size()));
}

}  // namespace detail

/// Euclidean GP baseline: k(x, x') = exp(-||x-x'||^2/4 eps^2) with epsilon on
/// a grid (eps0 = median pairwise distance among labeled points) and
/// sigma_eta by the same bounded search.
inline FitReport fit_egp_baseline(const Dataset& ds, const BaselineConfig& cfg) {
  ds.validate();
  FitReport report;
  const Index n = ds.n(), m = ds.m();

  std::vector<double> grid = cfg.eps_grid;
  if (grid.empty()) {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Index i = 0; i < m; ++i)
      for (Index j = i + 1; j < m; ++j)
        dists.push_back((ds.cloud.points.row(i) - ds.cloud.points.row(j)).norm());
    const double eps0 = std::max(detail::median(std::move(dists)), 1e-12);
    for (double f : cfg.eps_factors) grid.push_back(f * eps0);
  }
  const auto sigma_bounds =
      detail::resolve_sigma_bounds(cfg.sigma_lo_factor, cfg.sigma_hi_factor, ds.labels);

  struct EgpCandidate {
    double loglik = -std::numeric_limits<double>::infinity();
    double epsilon = 0, sigma = 0;
    Eigen::MatrixXd cross;  // n x m
  } best;
  bool have_best = false;

  for (const double eps : grid) {
    EgpCandidate cand;
    cand.epsilon = eps;
    {
      detail::StageTimer timer(report.stages.kernel);
      cand.cross.resize(n, m);
      const double inv = 1.0 / (4.0 * eps * eps);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < m; ++j)
          cand.cross(i, j) =
              std::exp(-(ds.cloud.points.row(i) - ds.cloud.points.row(j)).squaredNorm() * inv);
    }
    {
      detail::StageTimer timer(report.stages.optimize);
      const Eigen::MatrixXd Kmm = add_jitter(cand.cross.topRows(m), cfg.jitter);
      if (ds.task == Task::regression) {
        auto [ls, fs] = detail::golden_max(
            [&](double lsig) {
              return gaussian_marginal_loglik(Kmm, ds.labels, std::exp(lsig));
            },
            std::log(sigma_bounds.first), std::log(sigma_bounds.second), 1e-3);
        cand.sigma = std::exp(ls);
        cand.loglik = fs;
      } else {
        try {
          cand.loglik = laplace_fit(Kmm, ds.labels).evidence;
        } catch (const std::runtime_error&) {
          cand.loglik = -std::numeric_limits<double>::infinity();
        }
      }
    }
    const bool better = !have_best || cand.loglik > best.loglik ||
                        (cand.loglik == best.loglik && cand.epsilon < best.epsilon);
    if (better) {
      best = std::move(cand);
      have_best = true;
    }
  }
  if (!have_best || !std::isfinite(best.loglik))
    throw std::runtime_error("fit_egp_baseline: every grid candidate failed");

  report.epsilon = best.epsilon;
  report.noise_sd =
      ds.task == Task::regression ? best.sigma : std::numeric_limits<double>::quiet_NaN();
  report.best_loglik = best.loglik;

  if (m < n) {
    detail::StageTimer timer(report.stages.predict);
    detail::DenseKernelCovariance cov{std::move(best.cross), n};
    std::vector<Index> train(static_cast<std::size_t>(m)), test(static_cast<std::size_t>(n - m));
    for (Index i = 0; i < m; ++i) train[static_cast<std::size_t>(i)] = i;
    for (Index i = m; i < n; ++i) test[static_cast<std::size_t>(i - m)] = i;
    const Eigen::MatrixXd Kmm = add_jitter(cov.block(train, train), cfg.jitter);
    const Eigen::MatrixXd Kxm = cov.block(test, train);
    const Eigen::VectorXd kxx = Eigen::VectorXd::Ones(n - m);
    if (ds.task == Task::regression) {
      report.posterior = gp_regression_predict_blocks(Kmm, Kxm, kxx, ds.labels, best.sigma);
    } else {
      const auto fit = laplace_fit(Kmm, ds.labels);
      report.posterior = laplace_predict_prob(fit, Kxm, kxx);
    }
    if (ds.truth.size() == n) {
      const Eigen::VectorXd truth = ds.truth.tail(n - m);
      report.has_metrics = true;
      if (ds.task == Task::regression) {
        report.rmse = metric_rmse(report.posterior.mean, truth);
        report.nll =
            metric_nll_gaussian(report.posterior.mean, report.posterior.variance, best.sigma, truth);
      } else {
        report.error_rate = metric_error_rate(report.posterior.class_prob, truth);
        report.nll = metric_nll_bernoulli(report.posterior.class_prob, truth);
      }
    }
  }
  return report;
}

namespace detail {

/// Top-M eigenpairs of the symmetrized one-step operator
/// W = D^{-1/2} Abar D^{-1/2}; eigenvectors are mapped back by D^{-1/2},
/// l2-normalized and sign-fixed; lambda = 1 - mu clamped to [0, 1].
inline LaplacianSpectrum glgp_spectrum_from_W(const Eigen::MatrixXd& W, const Eigen::VectorXd& degree,
                                              Index M, double tol, std::uint64_t seed) {
  const Index n = W.rows();
  Eigen::VectorXd mu(M);
  Eigen::MatrixXd Y(n, M);
  Index matvecs = 0;
  if (n <= 512) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W);
    for (Index i = 0; i < M; ++i) {
      mu[i] = es.eigenvalues()[n - 1 - i];
      Y.col(i) = es.eigenvectors().col(n - 1 - i);
    }
  } else {
    const auto op = [&W](const Eigen::VectorXd& x) -> Eigen::VectorXd { return W * x; };
    const auto res = top_eigs_symmetric(op, n, M, tol, 1000 * M, seed);
    if (!res.converged)
      throw std::runtime_error("glgp_spectrum_from_W: eigensolver did not converge");
    mu = res.values;
    Y = res.vectors;
    matvecs = res.matvecs;
  }

  LaplacianSpectrum spec;
  spec.matvecs = matvecs;
  spec.eigenvalues.resize(M);
  spec.eigenvectors.resize(n, M);
  const Eigen::VectorXd dinv_sqrt = degree.cwiseSqrt().cwiseInverse();
  for (Index i = 0; i < M; ++i) {
    Eigen::VectorXd v = dinv_sqrt.cwiseProduct(Y.col(i));
    v /= v.norm();
    fix_sign(v);
    spec.eigenvectors.col(i) = v;
    spec.eigenvalues[i] = std::min(std::max(1.0 - mu[i], 0.0), 1.0);
  }
  return spec;
}

}  // namespace detail

/// Graph Laplacian GP baseline: full one-step random-walk operator per the
/// dense construction, eigenvalues scaled by eps^2 inside the heat-kernel
/// exponential. Guarded to n <= dense_guard.
inline FitReport fit_glgp_baseline(const Dataset& ds, const BaselineConfig& cfg) {
  ds.validate();
  const Index n = ds.n();
  if (n > cfg.dense_guard)
    throw std::invalid_argument("fit_glgp_baseline: n exceeds the dense guard");
  FitReport report;
  const double diam = ds.cloud.diameter();
  const Index M = std::min(cfg.M, n);

  Eigen::MatrixXd D2(n, n);
  {
    detail::StageTimer timer(report.stages.kernel);
    for (Index i = 0; i < n; ++i) {
      D2(i, i) = 0.0;
      for (Index j = i + 1; j < n; ++j) {
        const double d = (ds.cloud.points.row(i) - ds.cloud.points.row(j)).squaredNorm();
        D2(i, j) = d;
        D2(j, i) = d;
      }
    }
  }

  std::vector<double> grid = cfg.eps_grid;
  if (grid.empty()) {
    // Local scale: median distance to the 7th nearest neighbour.
    const Index k = std::min<Index>(7, n - 1);
    std::vector<double> kth(static_cast<std::size_t>(n));
    std::vector<double> row(static_cast<std::size_t>(n - 1));
    for (Index i = 0; i < n; ++i) {
      Index w = 0;
      for (Index j = 0; j < n; ++j)
        if (j != i) row[static_cast<std::size_t>(w++)] = D2(i, j);
      std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
      kth[static_cast<std::size_t>(i)] = std::sqrt(row[static_cast<std::size_t>(k - 1)]);
    }
    const double eps0 = std::max(detail::median(std::move(kth)), 1e-12);
    for (double f : cfg.glgp_eps_factors) grid.push_back(f * eps0);
  }

  const auto t_bounds = std::make_pair(cfg.t_lo_factor * diam * diam, cfg.t_hi_factor * diam * diam);
  const auto sigma_bounds =
      detail::resolve_sigma_bounds(cfg.sigma_lo_factor, cfg.sigma_hi_factor, ds.labels);
  const std::uint64_t seed_eig = splitmix64(cfg.seed ^ 0x11u);

  detail::Candidate best;
  bool have_best = false;
  Eigen::MatrixXd W;
  for (const double eps : grid) {
    detail::Candidate cand;
    cand.epsilon = eps;
    cand.divisor = eps * eps;
    Eigen::VectorXd degree;
    {
      detail::StageTimer timer(report.stages.graph);
      W = (-D2 / (4.0 * eps * eps)).array().exp();
      const Eigen::VectorXd ksum = W.rowwise().sum();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) W(i, j) /= ksum[i] * ksum[j];
      degree = W.rowwise().sum();
      const Eigen::VectorXd dinv_sqrt = degree.cwiseSqrt().cwiseInverse();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) W(i, j) *= dinv_sqrt[i] * dinv_sqrt[j];
    }
    {
      detail::StageTimer timer(report.stages.tsvd);
      cand.spectrum = detail::glgp_spectrum_from_W(W, degree, M, cfg.tsvd_tol, seed_eig);
      ++report.spectral_count;
    }
    {
      detail::StageTimer timer(report.stages.optimize);
      const auto opt = detail::optimize_for_spectrum(cand.spectrum, cand.divisor, n, ds, t_bounds,
                                                     sigma_bounds, cfg.jitter);
      cand.loglik = opt.loglik;
      cand.t = opt.t;
      cand.sigma = opt.sigma;
    }
    if (!have_best || detail::candidate_better(cand, best)) {
      best = std::move(cand);
      have_best = true;
    }
  }
  if (!have_best || !std::isfinite(best.loglik))
    throw std::runtime_error("fit_glgp_baseline: every grid candidate failed");

  {
    detail::StageTimer timer(report.stages.predict);
    detail::predict_and_score(best, ds, cfg.jitter, report);
  }
  return report;
}

/// Raw Nystrom extension of landmark eigenvectors to the full cloud:
/// v_ext = Zxu v_u / mu. Exact at landmark rows by construction.
inline Eigen::MatrixXd nystrom_extend_eigenvectors(const Eigen::MatrixXd& Zxu,
                                                   const Eigen::MatrixXd& Vu,
                                                   const Eigen::VectorXd& mu) {
  Eigen::MatrixXd ext = Zxu * Vu;
  for (Index i = 0; i < mu.size(); ++i) {
    if (std::abs(mu[i]) < 1e-12)
      throw std::runtime_error("nystrom_extend_eigenvectors: eigenvalue too small to extend");
    ext.col(i) /= mu[i];
  }
  return ext;
}

/// Nystrom approximation of GLGP: the one-step operator is built on s
/// uniformly sampled landmarks only; eigenvectors are extended to the cloud
/// by the cross transition and rescaled, then renormalized.
inline FitReport fit_nystrom_baseline(const Dataset& ds, Index s, const BaselineConfig& cfg) {
  ds.validate();
  const Index n = ds.n();
  if (s < 2 || s > n) throw std::invalid_argument("fit_nystrom_baseline: need 2 <= s <= n");
  FitReport report;
  const double diam = ds.cloud.diameter();
  const Index M = std::min(cfg.M, s);

  RowMatrixXd U;
  {
    detail::StageTimer timer(report.stages.subsample);
    U = random_subsample(ds.cloud, s, splitmix64(cfg.seed ^ 0x21u)).centers;
  }

  Eigen::MatrixXd D2_uu(s, s), D2_xu(n, s);
  {
    detail::StageTimer timer(report.stages.kernel);
    for (Index i = 0; i < s; ++i) {
      D2_uu(i, i) = 0.0;
      for (Index j = i + 1; j < s; ++j) {
        const double d = (U.row(i) - U.row(j)).squaredNorm();
        D2_uu(i, j) = d;
        D2_uu(j, i) = d;
      }
    }
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < s; ++j)
        D2_xu(i, j) = (ds.cloud.points.row(i) - U.row(j)).squaredNorm();
  }

  std::vector<double> grid = cfg.eps_grid;
  if (grid.empty()) {
    const Index r = std::min(cfg.r, s);
    std::vector<double> dists(static_cast<std::size_t>(n));
    std::vector<double> row(static_cast<std::size_t>(s));
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < s; ++j) row[static_cast<std::size_t>(j)] = D2_xu(i, j);
      std::nth_element(row.begin(), row.begin() + (r - 1), row.end());
      dists[static_cast<std::size_t>(i)] = std::sqrt(row[static_cast<std::size_t>(r - 1)]);
    }
    const double eps0 = std::max(detail::median(std::move(dists)), 1e-12);
    for (double f : cfg.eps_factors) grid.push_back(f * eps0);
  }

  const auto t_bounds = std::make_pair(cfg.t_lo_factor * diam * diam, cfg.t_hi_factor * diam * diam);
  const auto sigma_bounds =
      detail::resolve_sigma_bounds(cfg.sigma_lo_factor, cfg.sigma_hi_factor, ds.labels);

  detail::Candidate best;
  bool have_best = false;
  for (const double eps : grid) {
    detail::Candidate cand;
    cand.epsilon = eps;
    cand.divisor = eps * eps;
    {
      detail::StageTimer timer(report.stages.graph);
      const double inv = 1.0 / (4.0 * eps * eps);
      Eigen::MatrixXd Kuu = (-D2_uu * inv).array().exp();
      const Eigen::VectorXd usum = Kuu.rowwise().sum();  // = column sums by symmetry
      Eigen::MatrixXd Auu = Kuu;
      for (Index i = 0; i < s; ++i)
        for (Index j = 0; j < s; ++j) Auu(i, j) /= usum[i] * usum[j];
      const Eigen::VectorXd du = Auu.rowwise().sum();
      const Eigen::VectorXd du_inv_sqrt = du.cwiseSqrt().cwiseInverse();
      Eigen::MatrixXd Wuu = Auu;
      for (Index i = 0; i < s; ++i)
        for (Index j = 0; j < s; ++j) Wuu(i, j) *= du_inv_sqrt[i] * du_inv_sqrt[j];

      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Wuu);
      Eigen::VectorXd mu(M);
      Eigen::MatrixXd Vu(s, M);
      for (Index i = 0; i < M; ++i) {
        mu[i] = es.eigenvalues()[s - 1 - i];
        Eigen::VectorXd v = du_inv_sqrt.cwiseProduct(es.eigenvectors().col(s - 1 - i));
        Vu.col(i) = v / v.norm();
      }

      // Cross transition rows over the landmark columns.
      Eigen::MatrixXd Zxu = (-D2_xu * inv).array().exp();
      const Eigen::VectorXd xsum = Zxu.rowwise().sum();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < s; ++j) Zxu(i, j) /= xsum[i] * usum[j];
      const Eigen::VectorXd arow = Zxu.rowwise().sum();
      for (Index i = 0; i < n; ++i) Zxu.row(i) /= arow[i];

      Index keep = M;
      for (Index i = 0; i < M; ++i)
        if (std::abs(mu[i]) < 1e-9) {
          keep = i;
          break;
        }
      Eigen::MatrixXd ext = nystrom_extend_eigenvectors(Zxu, Vu.leftCols(keep), mu.head(keep));
      cand.spectrum.eigenvalues.resize(keep);
      cand.spectrum.eigenvectors.resize(n, keep);
      cand.spectrum.truncated = keep < M;
      for (Index i = 0; i < keep; ++i) {
        Eigen::VectorXd v = ext.col(i);
        v /= v.norm();
        detail::fix_sign(v);
        cand.spectrum.eigenvectors.col(i) = v;
        cand.spectrum.eigenvalues[i] = std::min(std::max(1.0 - mu[i], 0.0), 1.0);
      }
      ++report.spectral_count;
    }
    {
      detail::StageTimer timer(report.stages.optimize);
      const auto opt = detail::optimize_for_spectrum(cand.spectrum, cand.divisor, n, ds, t_bounds,
                                                     sigma_bounds, cfg.jitter);
      cand.loglik = opt.loglik;
      cand.t = opt.t;
      cand.sigma = opt.sigma;
    }
    if (!have_best || detail::candidate_better(cand, best)) {
      best = std::move(cand);
      have_best = true;
    }
  }
  if (!have_best || !std::isfinite(best.loglik))
    throw std::runtime_error("fit_nystrom_baseline: every grid candidate failed");

  {
    detail::StageTimer timer(report.stages.predict);
    detail::predict_and_score(best, ds, cfg.jitter, report);
  }
  return report;
}

}  // namespace heatflow
