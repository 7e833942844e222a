#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "heatflow/dataset.hpp"
#include "heatflow/sparse.hpp"
#include "heatflow/subsample.hpp"

namespace heatflow {

enum class KernelKind { squared_exponential, lae };

struct KernelConfig {
  KernelKind kind = KernelKind::squared_exponential;
  double epsilon = 1.0;  // bandwidth, squared-exponential only
  Index r = 1;           // local landmark count

  void validate(Index s) const {
    if (kind == KernelKind::squared_exponential && !(epsilon > 0))
      throw std::invalid_argument("KernelConfig: epsilon must be > 0");
    if (r < 1 || r > s) throw std::invalid_argument("KernelConfig: need 1 <= r <= s");
  }
};

/// k(x, u) = exp(-||x - u||^2 / 4 eps^2), in (0, 1].
inline double se_value(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& u, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("se_value: epsilon must be > 0");
  return std::exp(-(x - u).squaredNorm() / (4.0 * epsilon * epsilon));
}

/// r nearest landmarks per point with squared distances, sorted by column
/// index within a row. The structure is bandwidth-independent, so it is built
/// once and re-used across the epsilon grid.
struct LandmarkNeighborTable {
  Index n = 0;
  Index r = 0;
  std::vector<Index> idx;       // n * r, column-sorted per row
  std::vector<double> sqdist;   // aligned with idx

  Index at(Index i, Index k) const { return idx[static_cast<std::size_t>(i * r + k)]; }
  double d2(Index i, Index k) const { return sqdist[static_cast<std::size_t>(i * r + k)]; }
};

/// Brute-force r-nearest-landmark search; ties broken by smaller landmark
/// index. O(nsp), the dominant term the complexity contract allows.
inline LandmarkNeighborTable nearest_landmarks(const PointCloud& cloud, const RowMatrixXd& centers,
                                               Index r) {
  const Index n = cloud.n(), s = centers.rows();
  if (r < 1 || r > s) throw std::invalid_argument("nearest_landmarks: need 1 <= r <= s");
  LandmarkNeighborTable t;
  t.n = n;
  t.r = r;
  t.idx.resize(static_cast<std::size_t>(n * r));
  t.sqdist.resize(static_cast<std::size_t>(n * r));

  std::vector<std::pair<double, Index>> cand(static_cast<std::size_t>(s));
  std::vector<std::pair<Index, double>> chosen(static_cast<std::size_t>(r));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < s; ++j)
      cand[static_cast<std::size_t>(j)] = {(cloud.points.row(i) - centers.row(j)).squaredNorm(), j};
    std::partial_sort(cand.begin(), cand.begin() + r, cand.end());
    for (Index k = 0; k < r; ++k)
      chosen[static_cast<std::size_t>(k)] = {cand[static_cast<std::size_t>(k)].second,
                                             cand[static_cast<std::size_t>(k)].first};
    std::sort(chosen.begin(), chosen.end());
    for (Index k = 0; k < r; ++k) {
      t.idx[static_cast<std::size_t>(i * r + k)] = chosen[static_cast<std::size_t>(k)].first;
      t.sqdist[static_cast<std::size_t>(i * r + k)] = chosen[static_cast<std::size_t>(k)].second;
    }
  }
  return t;
}

/// Sparse squared-exponential cross kernel on a prebuilt neighbor structure.
inline SparseCrossMatrix se_kernel_from_table(const LandmarkNeighborTable& t, Index s, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("se_kernel_from_table: epsilon must be > 0");
  SparseCrossMatrix m;
  m.rows = t.n;
  m.cols = s;
  m.row_ptr.resize(static_cast<std::size_t>(t.n) + 1);
  m.col_idx.resize(static_cast<std::size_t>(t.n * t.r));
  m.values.resize(static_cast<std::size_t>(t.n * t.r));
  const double denom = 4.0 * epsilon * epsilon;  // same expression as se_value, bit-exact
  for (Index i = 0; i <= t.n; ++i) m.row_ptr[static_cast<std::size_t>(i)] = i * t.r;
  for (Index i = 0; i < t.n; ++i)
    for (Index k = 0; k < t.r; ++k) {
      m.col_idx[static_cast<std::size_t>(i * t.r + k)] = t.at(i, k);
      m.values[static_cast<std::size_t>(i * t.r + k)] = std::exp(-t.d2(i, k) / denom);
    }
  return m;
}

/// Row i holds k(x_i, u_j) for the r nearest landmarks, zero elsewhere.
inline SparseCrossMatrix sparse_se_cross_kernel(const PointCloud& cloud,
                                                const InducedPointSet& induced,
                                                const KernelConfig& config) {
  if (config.kind != KernelKind::squared_exponential)
    throw std::invalid_argument("sparse_se_cross_kernel: kernel kind must be squared-exponential");
  config.validate(induced.s());
  const auto table = nearest_landmarks(cloud, induced.centers, config.r);
  return se_kernel_from_table(table, induced.s(), config.epsilon);
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
inline Eigen::VectorXd simplex_project(const Eigen::VectorXd& v) {
  const Index r = v.size();
  if (r < 1) throw std::invalid_argument("simplex_project: empty vector");
  std::vector<double> u(v.data(), v.data() + r);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  Index rho = 0;
  for (Index k = 0; k < r; ++k) {
    cum += u[static_cast<std::size_t>(k)];
    const double cand = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - cand > 0) {
      rho = k + 1;
      tau = cand;
    }
  }
  (void)rho;
  Eigen::VectorXd w(r);
  for (Index k = 0; k < r; ++k) w[k] = std::max(v[k] - tau, 0.0);
  return w;
}

namespace detail {

/// Accelerated projected gradient for one LAE row:
///   min ||x - U^T w||^2  s.t.  w on the simplex.
/// Step 1/L with L the largest eigenvalue of the local Gram matrix; momentum
/// restarts whenever the objective would increase, so the recorded objective
/// trace is non-increasing.
inline Eigen::VectorXd lae_solve_row(const Eigen::MatrixXd& gram, const Eigen::VectorXd& lin,
                                     Index max_iter, double tol,
                                     std::vector<double>* objective_trace = nullptr) {
  const Index r = gram.rows();
  if (r == 1) return Eigen::VectorXd::Ones(1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  const double lip = std::max(es.eigenvalues().maxCoeff(), 1e-12);

  const auto objective = [&](const Eigen::VectorXd& w) {
    return 0.5 * w.dot(gram * w) - lin.dot(w);
  };

  Eigen::VectorXd w = Eigen::VectorXd::Constant(r, 1.0 / static_cast<double>(r));
  Eigen::VectorXd y = w;
  double theta = 1.0;
  double f_w = objective(w);
  if (objective_trace) objective_trace->push_back(f_w);

  for (Index iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd grad_w = gram * w - lin;
    const Eigen::VectorXd pg = lip * (w - simplex_project(w - grad_w / lip));
    if (pg.norm() < tol) break;

    const Eigen::VectorXd grad_y = gram * y - lin;
    Eigen::VectorXd w_next = simplex_project(y - grad_y / lip);
    double f_next = objective(w_next);
    if (f_next > f_w) {
      // restart: plain projected-gradient step from w never increases
      w_next = simplex_project(w - grad_w / lip);
      f_next = objective(w_next);
      y = w_next;
      theta = 1.0;
    } else {
      const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      y = w_next + ((theta - 1.0) / theta_next) * (w_next - w);
      theta = theta_next;
    }
    w = w_next;
    f_w = f_next;
    if (objective_trace) objective_trace->push_back(f_w);
  }
  return w;
}

}  // namespace detail

/// LAE kernel on a prebuilt neighbor structure. Each row reconstructs its
/// point as a convex combination of its r nearest landmarks; exact-zero
/// weights are dropped from the sparse row.
inline SparseCrossMatrix lae_kernel_from_table(const PointCloud& cloud, const RowMatrixXd& centers,
                                               const LandmarkNeighborTable& table,
                                               Index max_iter = 200, double tol = 1e-8) {
  const Index r = table.r;
  std::vector<std::vector<std::pair<Index, double>>> rows(static_cast<std::size_t>(cloud.n()));
  Eigen::MatrixXd local(r, cloud.p());
  for (Index i = 0; i < cloud.n(); ++i) {
    for (Index k = 0; k < r; ++k) local.row(k) = centers.row(table.at(i, k));
    Eigen::MatrixXd gram = local * local.transpose();
    gram.diagonal().array() += 1e-10;  // degenerate (collinear) landmark guard
    const Eigen::VectorXd lin = local * cloud.points.row(i).transpose();
    const Eigen::VectorXd w = detail::lae_solve_row(gram, lin, max_iter, tol);
    auto& row = rows[static_cast<std::size_t>(i)];
    for (Index k = 0; k < r; ++k) {
      const double v = std::max(w[k], 0.0);
      if (v > 0.0) row.emplace_back(table.at(i, k), v);
    }
    if (row.empty()) row.emplace_back(table.at(i, 0), 1.0);  // cannot happen: weights sum to 1
  }
  return SparseCrossMatrix::from_rows(centers.rows(), rows);
}

inline SparseCrossMatrix lae_cross_kernel(const PointCloud& cloud, const InducedPointSet& induced,
                                          Index r, Index max_iter = 200, double tol = 1e-8) {
  if (r < 1 || r > induced.s())
    throw std::invalid_argument("lae_cross_kernel: need 1 <= r <= s");
  const auto table = nearest_landmarks(cloud, induced.centers, r);
  return lae_kernel_from_table(cloud, induced.centers, table, max_iter, tol);
}

}  // namespace heatflow
