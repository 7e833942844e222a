#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <utility>
#include <vector>

#include "heatflow/dataset.hpp"

namespace heatflow {

/// Row-sparse nonnegative n x s matrix in CSR layout. Column indices are
/// strictly increasing within a row and every row holds at least one entry.
struct SparseCrossMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<Index> row_ptr;  // length rows + 1
  std::vector<Index> col_idx;
  std::vector<double> values;

  Index nnz() const { return static_cast<Index>(values.size()); }

  static SparseCrossMatrix from_rows(Index cols,
                                     const std::vector<std::vector<std::pair<Index, double>>>& rows_in) {
    SparseCrossMatrix m;
    m.rows = static_cast<Index>(rows_in.size());
    m.cols = cols;
    m.row_ptr.resize(rows_in.size() + 1, 0);
    for (std::size_t i = 0; i < rows_in.size(); ++i)
      m.row_ptr[i + 1] = m.row_ptr[i] + static_cast<Index>(rows_in[i].size());
    m.col_idx.reserve(static_cast<std::size_t>(m.row_ptr.back()));
    m.values.reserve(static_cast<std::size_t>(m.row_ptr.back()));
    for (const auto& row : rows_in) {
      Index prev = -1;
      for (const auto& [c, v] : row) {
        if (c <= prev) throw std::invalid_argument("SparseCrossMatrix: columns must be strictly increasing");
        if (c < 0 || c >= cols) throw std::invalid_argument("SparseCrossMatrix: column out of range");
        prev = c;
        m.col_idx.push_back(c);
        m.values.push_back(v);
      }
    }
    return m;
  }

  void validate() const {
    if (static_cast<Index>(row_ptr.size()) != rows + 1)
      throw std::logic_error("SparseCrossMatrix: bad row_ptr");
    for (Index i = 0; i < rows; ++i) {
      if (row_ptr[static_cast<std::size_t>(i + 1)] <= row_ptr[static_cast<std::size_t>(i)])
        throw std::logic_error("SparseCrossMatrix: empty row");
    }
    for (double v : values)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::logic_error("SparseCrossMatrix: values must be finite and nonnegative");
  }

  /// y = M x (length rows). Entries are accumulated in storage order, so the
  /// reduction is deterministic.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(rows);
    for (Index i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        acc += values[static_cast<std::size_t>(k)] * x[col_idx[static_cast<std::size_t>(k)]];
      y[i] = acc;
    }
    return y;
  }

  /// y = M^T x (length cols), deterministic row-major accumulation.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(cols);
    for (Index i = 0; i < rows; ++i) {
      const double xi = x[i];
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        y[col_idx[static_cast<std::size_t>(k)]] += values[static_cast<std::size_t>(k)] * xi;
    }
    return y;
  }

  Eigen::VectorXd col_sums() const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(cols);
    for (Index i = 0; i < rows; ++i)
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        y[col_idx[static_cast<std::size_t>(k)]] += values[static_cast<std::size_t>(k)];
    return y;
  }

  Eigen::VectorXd row_sums() const {
    Eigen::VectorXd y(rows);
    for (Index i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        acc += values[static_cast<std::size_t>(k)];
      y[i] = acc;
    }
    return y;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        d(i, col_idx[static_cast<std::size_t>(k)]) = values[static_cast<std::size_t>(k)];
    return d;
  }
};

}  // namespace heatflow
