#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "heatflow/spectral.hpp"

namespace heatflow {

/// Virtual heat-kernel covariance C = n sum_i exp(-t lambda_i / divisor)
/// v_i v_i^T. Only requested blocks are ever materialized; the n x n matrix
/// never exists. divisor is eps^2 for squared-exponential base kernels and 1
/// for LAE (which has no bandwidth; t absorbs the scale).
struct HeatKernelCovariance {
  LaplacianSpectrum spectrum;
  double t = 1.0;
  double scale_divisor = 1.0;
  Index n = 0;

  HeatKernelCovariance() = default;
  HeatKernelCovariance(LaplacianSpectrum spec, double t_, double divisor, Index n_)
      : spectrum(std::move(spec)), t(t_), scale_divisor(divisor), n(n_) {
    if (!(t > 0)) throw std::invalid_argument("HeatKernelCovariance: t must be > 0");
    if (!(scale_divisor > 0))
      throw std::invalid_argument("HeatKernelCovariance: scale divisor must be > 0");
  }

  Eigen::VectorXd mode_weights() const {
    return (-(t / scale_divisor) * spectrum.eigenvalues.array()).exp();
  }
};

/// Dense block C[rows, cols], cost O(|rows| * |cols| * M). The accumulation
/// order is fixed so that block(rows, cols) is the exact elementwise
/// transpose of block(cols, rows).
inline Eigen::MatrixXd covariance_block(const HeatKernelCovariance& cov,
                                        const std::vector<Index>& rows,
                                        const std::vector<Index>& cols) {
  for (Index i : rows)
    if (i < 0 || i >= cov.n) throw std::invalid_argument("covariance_block: row index out of range");
  for (Index j : cols)
    if (j < 0 || j >= cov.n) throw std::invalid_argument("covariance_block: column index out of range");

  const Eigen::MatrixXd& V = cov.spectrum.eigenvectors;
  const Eigen::VectorXd w = cov.mode_weights();
  const Index M = cov.spectrum.count();
  const auto nr = static_cast<Index>(rows.size());
  const auto nc = static_cast<Index>(cols.size());
  const double scale = static_cast<double>(cov.n);

  Eigen::MatrixXd out(nr, nc);
  for (Index a = 0; a < nr; ++a) {
    for (Index b = 0; b < nc; ++b) {
      double acc = 0.0;
      for (Index k = 0; k < M; ++k) acc += w[k] * (V(rows[static_cast<std::size_t>(a)], k) *
                                                   V(cols[static_cast<std::size_t>(b)], k));
      out(a, b) = scale * acc;
    }
  }
  return out;
}

/// Contiguous-range convenience overload.
inline Eigen::MatrixXd covariance_block(const HeatKernelCovariance& cov, Index row_begin,
                                        Index row_end, Index col_begin, Index col_end) {
  std::vector<Index> rows, cols;
  rows.reserve(static_cast<std::size_t>(row_end - row_begin));
  cols.reserve(static_cast<std::size_t>(col_end - col_begin));
  for (Index i = row_begin; i < row_end; ++i) rows.push_back(i);
  for (Index j = col_begin; j < col_end; ++j) cols.push_back(j);
  return covariance_block(cov, rows, cols);
}

/// Diagonal entries C_ii for an index set; nonnegative by construction.
inline Eigen::VectorXd covariance_diagonal(const HeatKernelCovariance& cov,
                                           const std::vector<Index>& idx) {
  const Eigen::MatrixXd& V = cov.spectrum.eigenvectors;
  const Eigen::VectorXd w = cov.mode_weights();
  const Index M = cov.spectrum.count();
  Eigen::VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] < 0 || idx[a] >= cov.n)
      throw std::invalid_argument("covariance_diagonal: index out of range");
    double acc = 0.0;
    for (Index k = 0; k < M; ++k) acc += w[k] * V(idx[a], k) * V(idx[a], k);
    out[static_cast<Index>(a)] = static_cast<double>(cov.n) * acc;
  }
  return out;
}

/// block + level * (trace/m) * I; the relative jitter used on training blocks.
inline Eigen::MatrixXd add_jitter(const Eigen::MatrixXd& block, double level) {
  if (block.rows() != block.cols()) throw std::invalid_argument("add_jitter: block must be square");
  if (level < 0) throw std::invalid_argument("add_jitter: level must be >= 0");
  Eigen::MatrixXd out = block;
  if (level > 0 && block.rows() > 0)
    out.diagonal().array() += level * block.trace() / static_cast<double>(block.rows());
  return out;
}

/// Debug dump: row index, column index, value per line.
inline void dump_block_csv(const Eigen::MatrixXd& block, const std::vector<Index>& rows,
                           const std::vector<Index>& cols, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dump_block_csv: cannot open " + path);
  out << "row,col,value\n";
  for (Index a = 0; a < block.rows(); ++a)
    for (Index b = 0; b < block.cols(); ++b)
      out << rows[static_cast<std::size_t>(a)] << "," << cols[static_cast<std::size_t>(b)] << ","
          << detail::format_g17(block(a, b)) << "\n";
}

}  // namespace heatflow
