#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "heatflow/graph.hpp"
#include "heatflow/rng.hpp"

namespace heatflow {

/// M smallest eigenvalues of the graph Laplacian L with unit-norm
/// eigenvectors over the point cloud. lambda_i = 1 - sigma_i where sigma are
/// the top singular values of Z Lambda^{-1/2}.
struct LaplacianSpectrum {
  Eigen::VectorXd eigenvalues;   // ascending, clamped to [0, 1]
  Eigen::MatrixXd eigenvectors;  // n x M, unit l2-norm columns, sign-fixed
  bool truncated = false;        // requested M exceeded the numerical rank
  Index matvecs = 0;

  Index count() const { return eigenvalues.size(); }
};

namespace detail {

/// Sign convention: largest-magnitude entry positive, ties to the first index.
inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Index best = 0;
  double mag = std::abs(v[0]);
  for (Index i = 1; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > mag) {
      mag = a;
      best = i;
    }
  }
  if (v[best] < 0) v = -v;
}

/// Two-pass classical Gram-Schmidt against the leading `cols` columns of V.
inline void orthogonalize(const Eigen::MatrixXd& V, Index cols, Eigen::VectorXd& w) {
  for (int pass = 0; pass < 2; ++pass) {
    if (cols > 0) w.noalias() -= V.leftCols(cols) * (V.leftCols(cols).transpose() * w);
  }
}

struct SymEigResult {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // orthonormal columns
  bool converged = true;
  Index matvecs = 0;
};

/// Thick-restart Krylov eigensolver for the largest eigenvalues of a
/// symmetric operator. The projected matrix is formed densely as V^T (S V),
/// so restarts (Krylov-Schur style) need no tridiagonal bookkeeping, and
/// residuals ||S u - theta u|| are evaluated explicitly.
template <class SymOp>
SymEigResult top_eigs_symmetric(const SymOp& op, Index dim, Index want, double tol,
                                Index max_matvec, std::uint64_t seed) {
  if (want < 1 || want > dim)
    throw std::invalid_argument("top_eigs_symmetric: need 1 <= want <= dim");
  const Index ncv = std::min(dim, std::max(2 * want + 10, Index{32}));

  Eigen::MatrixXd V(dim, ncv), SV(dim, ncv);
  Rng rng(seed);
  const auto random_unit = [&] {
    Eigen::VectorXd v(dim);
    for (Index i = 0; i < dim; ++i) v[i] = rng.normal();
    return v;
  };

  Eigen::VectorXd v0 = random_unit();
  V.col(0) = v0 / v0.norm();
  Index k = 0;  // kept Ritz block size
  SymEigResult res;
  res.matvecs = 0;

  while (true) {
    for (Index j = k; j < ncv; ++j) {
      Eigen::VectorXd w = op(V.col(j));
      ++res.matvecs;
      SV.col(j) = w;
      if (j + 1 < ncv) {
        orthogonalize(V, j + 1, w);
        double beta = w.norm();
        if (beta < 1e-12) {  // invariant subspace hit; continue in a fresh direction
          w = random_unit();
          orthogonalize(V, j + 1, w);
          beta = w.norm();
        }
        V.col(j + 1) = w / beta;
      }
    }

    Eigen::MatrixXd H = V.transpose() * SV;
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    // SelfAdjointEigenSolver sorts ascending; reverse to descending.
    Eigen::MatrixXd Y(ncv, ncv);
    Eigen::VectorXd theta(ncv);
    for (Index i = 0; i < ncv; ++i) {
      theta[i] = es.eigenvalues()[ncv - 1 - i];
      Y.col(i) = es.eigenvectors().col(ncv - 1 - i);
    }
    const Eigen::MatrixXd U = V * Y;
    const Eigen::MatrixXd SU = SV * Y;

    bool all_converged = true;
    Index first_bad = -1;
    for (Index i = 0; i < want; ++i) {
      const double resid = (SU.col(i) - theta[i] * U.col(i)).norm();
      if (resid > tol * std::max(1.0, std::abs(theta[i]))) {
        all_converged = false;
        if (first_bad < 0) first_bad = i;
        break;
      }
    }

    if (all_converged || res.matvecs >= max_matvec || ncv == dim) {
      res.values = theta.head(want);
      res.vectors = U.leftCols(want);
      res.converged = all_converged || ncv == dim;
      return res;
    }

    // Thick restart: keep a buffered block of Ritz vectors plus the residual
    // direction of the first unconverged pair.
    const Index kk = std::min(want + 15, ncv - 2);
    V.leftCols(kk) = U.leftCols(kk);
    SV.leftCols(kk) = SU.leftCols(kk);
    Eigen::VectorXd w = SU.col(first_bad) - theta[first_bad] * U.col(first_bad);
    orthogonalize(V, kk, w);
    double beta = w.norm();
    if (beta < 1e-12) {
      w = random_unit();
      orthogonalize(V, kk, w);
      beta = w.norm();
    }
    V.col(kk) = w / beta;
    k = kk;
  }
}

/// B = Z Lambda^{-1/2}; the single code path through which B is applied.
struct CrossOperator {
  const SparseCrossMatrix& Z;
  Eigen::VectorXd inv_sqrt_lambda;

  explicit CrossOperator(const TransitionPair& tp)
      : Z(tp.Z), inv_sqrt_lambda(tp.lambda.cwiseSqrt().cwiseInverse()) {}

  Eigen::VectorXd apply(const Eigen::VectorXd& w) const {
    return Z.apply(inv_sqrt_lambda.cwiseProduct(w));
  }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& u) const {
    return inv_sqrt_lambda.cwiseProduct(Z.apply_transpose(u));
  }
};

/// Shared conversion: eigenpairs (mu, w) of B^T B -> singular triplets of B
/// -> Laplacian eigenpairs. Truncates at the numerical rank (sigma <= 1e-8).
inline LaplacianSpectrum spectrum_from_gram_pairs(const CrossOperator& B, Index M,
                                                  const Eigen::VectorXd& mu_desc,
                                                  const Eigen::MatrixXd& W, Index matvecs) {
  const Index n = B.Z.rows;
  LaplacianSpectrum out;
  out.matvecs = matvecs;
  Eigen::MatrixXd vecs(n, M);
  Eigen::VectorXd vals(M);
  Index kept = 0;
  for (Index i = 0; i < M; ++i) {
    const double sigma = std::sqrt(std::max(mu_desc[i], 0.0));
    if (sigma <= 1e-8) {
      out.truncated = true;
      break;
    }
    Eigen::VectorXd v = B.apply(W.col(i));
    const double norm = v.norm();
    if (norm <= 1e-12) {
      out.truncated = true;
      break;
    }
    v /= norm;
    fix_sign(v);
    vecs.col(kept) = v;
    vals[kept] = std::min(std::max(1.0 - sigma, 0.0), 1.0);
    ++kept;
  }
  out.eigenvalues = vals.head(kept);
  out.eigenvectors = vecs.leftCols(kept);
  return out;
}

}  // namespace detail

/// Top-M singular triplets of B = Z Lambda^{-1/2}, converted to eigenpairs of
/// the graph Laplacian (lambda = 1 - sigma, eigenvectors = left singular
/// vectors). Small problems (s <= 512) take the dense Gram fallback; larger
/// ones run the thick-restart Krylov solver on B^T B.
inline LaplacianSpectrum truncated_svd(const TransitionPair& tp, Index M, double tol = 1e-10,
                                       Index max_iter = -1, std::uint64_t seed = 1729) {
  const Index s = tp.Z.cols;
  if (M < 1 || M > s) throw std::invalid_argument("truncated_svd: need 1 <= M <= s");
  if (max_iter < 0) max_iter = 1000 * M;
  const detail::CrossOperator B(tp);

  Eigen::VectorXd mu(M);
  Eigen::MatrixXd W;
  Index matvecs = 0;

  if (s <= 512) {
    // G = Lambda^{-1/2} (Z^T Z) Lambda^{-1/2}, accumulated row by row: O(n r^2 + s^3).
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(s, s);
    const auto& Z = tp.Z;
    for (Index i = 0; i < Z.rows; ++i) {
      for (Index a = Z.row_ptr[static_cast<std::size_t>(i)]; a < Z.row_ptr[static_cast<std::size_t>(i + 1)]; ++a)
        for (Index b = Z.row_ptr[static_cast<std::size_t>(i)]; b < Z.row_ptr[static_cast<std::size_t>(i + 1)]; ++b)
          G(Z.col_idx[static_cast<std::size_t>(a)], Z.col_idx[static_cast<std::size_t>(b)]) +=
              Z.values[static_cast<std::size_t>(a)] * Z.values[static_cast<std::size_t>(b)];
    }
    G = B.inv_sqrt_lambda.asDiagonal() * G * B.inv_sqrt_lambda.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    W.resize(s, M);
    for (Index i = 0; i < M; ++i) {
      mu[i] = es.eigenvalues()[s - 1 - i];
      W.col(i) = es.eigenvectors().col(s - 1 - i);
    }
  } else {
    const auto op = [&B](const Eigen::VectorXd& w) { return B.apply_transpose(B.apply(w)); };
    const auto res = detail::top_eigs_symmetric(op, s, M, tol, max_iter, seed);
    if (!res.converged)
      throw std::runtime_error("truncated_svd: Krylov solver did not converge within " +
                               std::to_string(max_iter) + " matvecs");
    mu = res.values;
    W = res.vectors;
    matvecs = res.matvecs;
  }

  return detail::spectrum_from_gram_pairs(B, M, mu, W, matvecs);
}

/// Test oracle: materializes Z Lambda^{-1} Z^T densely (n <= 2000), runs a
/// full symmetric eigendecomposition and converts lambda_i = 1 - sqrt(mu_i).
/// Agrees with truncated_svd because left singular vectors of B are
/// eigenvectors of B B^T.
inline LaplacianSpectrum dense_eig_oracle(const TransitionPair& tp, Index M) {
  const Index n = tp.Z.rows;
  if (n > 2000) throw std::invalid_argument("dense_eig_oracle: n exceeds the 2000-point guard");
  if (M < 1 || M > tp.Z.cols) throw std::invalid_argument("dense_eig_oracle: need 1 <= M <= s");

  const Eigen::MatrixXd Bd =
      tp.Z.to_dense() * tp.lambda.cwiseSqrt().cwiseInverse().asDiagonal();
  const Eigen::MatrixXd P = Bd * Bd.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);

  LaplacianSpectrum out;
  Eigen::MatrixXd vecs(n, M);
  Eigen::VectorXd vals(M);
  Index kept = 0;
  for (Index i = 0; i < M; ++i) {
    const double mu = es.eigenvalues()[n - 1 - i];
    const double sigma = std::sqrt(std::max(mu, 0.0));
    if (sigma <= 1e-8) {
      out.truncated = true;
      break;
    }
    Eigen::VectorXd v = es.eigenvectors().col(n - 1 - i);
    detail::fix_sign(v);
    vecs.col(kept) = v;
    vals[kept] = std::min(std::max(1.0 - sigma, 0.0), 1.0);
    ++kept;
  }
  out.eigenvalues = vals.head(kept);
  out.eigenvectors = vecs.leftCols(kept);
  return out;
}

}  // namespace heatflow
