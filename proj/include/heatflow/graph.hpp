#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "heatflow/basekernel.hpp"
#include "heatflow/sparse.hpp"

namespace heatflow {

/// Row-stochastic cross transition Z with column masses lambda
/// (Lambda_jj = Z_.j). Landmarks whose column mass vanished are dropped;
/// `dropped` records their original indices.
struct TransitionPair {
  SparseCrossMatrix Z;
  Eigen::VectorXd lambda;
  std::vector<Index> dropped;
};

/// Cross similarity A_ij = n_j K_ij / (K_.j * sum_q n_q K_iq) on the sparsity
/// pattern of K. Column sums run over all n rows of the sparse column.
inline SparseCrossMatrix cross_similarity(const SparseCrossMatrix& K, const std::vector<Index>& counts) {
  if (static_cast<Index>(counts.size()) != K.cols)
    throw std::invalid_argument("cross_similarity: counts size must match K columns");
  const Eigen::VectorXd colsum = K.col_sums();

  SparseCrossMatrix A = K;
  for (Index i = 0; i < K.rows; ++i) {
    double denom = 0.0;
    for (Index k = K.row_ptr[static_cast<std::size_t>(i)]; k < K.row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
      denom += static_cast<double>(counts[static_cast<std::size_t>(K.col_idx[static_cast<std::size_t>(k)])]) *
               K.values[static_cast<std::size_t>(k)];
    if (!(denom > 0))
      throw std::runtime_error("cross_similarity: row " + std::to_string(i) + " has zero kernel mass");
    for (Index k = K.row_ptr[static_cast<std::size_t>(i)]; k < K.row_ptr[static_cast<std::size_t>(i + 1)]; ++k) {
      const Index j = K.col_idx[static_cast<std::size_t>(k)];
      const double kij = K.values[static_cast<std::size_t>(k)];
      A.values[static_cast<std::size_t>(k)] =
          (kij > 0 && colsum[j] > 0)
              ? static_cast<double>(counts[static_cast<std::size_t>(j)]) * kij / (colsum[j] * denom)
              : 0.0;
    }
  }
  return A;
}

/// Z_ij = A_ij / A_i. and lambda = column sums of Z. Columns with
/// lambda <= 1e-14 are dropped (they carry no probability mass).
inline TransitionPair row_normalize(const SparseCrossMatrix& A) {
  SparseCrossMatrix Z;
  Z.rows = A.rows;
  Z.cols = A.cols;
  Z.row_ptr.assign(1, 0);
  Z.col_idx.reserve(A.col_idx.size());
  Z.values.reserve(A.values.size());

  for (Index i = 0; i < A.rows; ++i) {
    double rowsum = 0.0;
    for (Index k = A.row_ptr[static_cast<std::size_t>(i)]; k < A.row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
      rowsum += A.values[static_cast<std::size_t>(k)];
    if (!(rowsum > 0))
      throw std::runtime_error("row_normalize: point " + std::to_string(i) +
                               " has no similarity mass; cannot normalize");
    for (Index k = A.row_ptr[static_cast<std::size_t>(i)]; k < A.row_ptr[static_cast<std::size_t>(i + 1)]; ++k) {
      const double v = A.values[static_cast<std::size_t>(k)] / rowsum;
      if (v > 0) {
        Z.col_idx.push_back(A.col_idx[static_cast<std::size_t>(k)]);
        Z.values.push_back(v);
      }
    }
    Z.row_ptr.push_back(static_cast<Index>(Z.values.size()));
  }

  Eigen::VectorXd lambda = Z.col_sums();

  // Drop zero-mass landmarks and remap columns.
  std::vector<Index> remap(static_cast<std::size_t>(Z.cols), -1);
  std::vector<Index> dropped;
  Index kept = 0;
  for (Index j = 0; j < Z.cols; ++j) {
    if (lambda[j] > 1e-14)
      remap[static_cast<std::size_t>(j)] = kept++;
    else
      dropped.push_back(j);
  }
  if (!dropped.empty()) {
    for (auto& c : Z.col_idx) c = remap[static_cast<std::size_t>(c)];
    for (Index i = 0; i < Z.rows; ++i)
      if (Z.row_ptr[static_cast<std::size_t>(i + 1)] <= Z.row_ptr[static_cast<std::size_t>(i)])
        throw std::runtime_error("row_normalize: point " + std::to_string(i) +
                                 " lost all landmarks after dropping");
    Eigen::VectorXd packed(kept);
    for (Index j = 0, t = 0; j < Z.cols; ++j)
      if (remap[static_cast<std::size_t>(j)] >= 0) packed[t++] = lambda[j];
    Z.cols = kept;
    lambda.swap(packed);
  }

  TransitionPair out;
  out.Z = std::move(Z);
  out.lambda = std::move(lambda);
  out.dropped = std::move(dropped);
  return out;
}

/// One-step random-walk operators on the full cloud (the GLGP construction):
/// Kbar_ij = k(x_i, x_j) with the diagonal self-similarity included,
/// Abar_ij = Kbar_ij / (Kbar_i. * Kbar_.j), Zbar = row-normalized Abar.
struct OneStepOperators {
  Eigen::MatrixXd Zbar;     // n x n, row-stochastic
  Eigen::VectorXd degree;   // row sums of the symmetric Abar
  Eigen::MatrixXd Abar;     // symmetric similarity
};

inline OneStepOperators one_step_operators(const PointCloud& cloud, double epsilon,
                                           Index dense_guard = 20000) {
  cloud.validate();
  if (!(epsilon > 0)) throw std::invalid_argument("one_step_operators: epsilon must be > 0");
  const Index n = cloud.n();
  if (n > dense_guard)
    throw std::invalid_argument("one_step_operators: n exceeds the dense guard (" +
                                std::to_string(dense_guard) + ")");

  Eigen::MatrixXd A(n, n);
  const double inv = 1.0 / (4.0 * epsilon * epsilon);
  for (Index i = 0; i < n; ++i) {
    A(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v = std::exp(-(cloud.points.row(i) - cloud.points.row(j)).squaredNorm() * inv);
      A(i, j) = v;
      A(j, i) = v;
    }
  }
  const Eigen::VectorXd ksum = A.rowwise().sum();  // = column sums by symmetry
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) A(i, j) /= ksum[i] * ksum[j];

  OneStepOperators out;
  out.degree = A.rowwise().sum();
  out.Zbar = out.degree.cwiseInverse().asDiagonal() * A;
  out.Abar = std::move(A);
  return out;
}

}  // namespace heatflow
