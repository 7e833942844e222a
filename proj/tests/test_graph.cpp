#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heatflow/graph.hpp"

using namespace heatflow;

namespace {

SparseCrossMatrix symmetric_2x2(double a) {
  return SparseCrossMatrix::from_rows(2, {{{0, 1.0}, {1, a}}, {{0, a}, {1, 1.0}}});
}

SparseCrossMatrix random_sparse(Index n, Index s, Index r, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::pair<Index, double>>> rows(static_cast<std::size_t>(n));
  for (auto& row : rows) {
    auto cols = rng.sample_without_replacement(s, r);
    std::sort(cols.begin(), cols.end());
    for (auto c : cols) row.emplace_back(static_cast<Index>(c), rng.uniform(0.05, 1.0));
  }
  return SparseCrossMatrix::from_rows(s, rows);
}

}  // namespace

TEST_CASE("cross similarity follows the normalization formula") {
  SECTION("2x2 hand evaluation") {
    const double a = 0.5;
    const auto K = symmetric_2x2(a);
    const auto A = cross_similarity(K, {1, 1});
    const double denom = (1 + a) * (1 + a);
    REQUIRE(A.to_dense()(0, 0) == Catch::Approx(1.0 / denom).epsilon(1e-15));
    REQUIRE(A.to_dense()(0, 1) == Catch::Approx(a / denom).epsilon(1e-15));
    REQUIRE(A.to_dense()(1, 0) == Catch::Approx(a / denom).epsilon(1e-15));
  }
  SECTION("single landmark column") {
    const auto K = SparseCrossMatrix::from_rows(1, {{{0, 0.3}}, {{0, 0.9}}, {{0, 0.1}}});
    const auto A = cross_similarity(K, {3});
    const Eigen::MatrixXd Ad = A.to_dense();
    for (Index i = 0; i < 3; ++i) REQUIRE(Ad(i, 0) > 0);
    // A_ij = n_1 K_ij / (K_.1 * n_1 K_ij) = 1 / K_.1 for every row
    REQUIRE(Ad(0, 0) == Catch::Approx(1.0 / 1.3).epsilon(1e-14));
    REQUIRE(Ad(1, 0) == Catch::Approx(1.0 / 1.3).epsilon(1e-14));
  }
}

TEST_CASE("row normalization and column masses") {
  const double a = 0.5;
  const auto A = cross_similarity(symmetric_2x2(a), {1, 1});
  const auto tp = row_normalize(A);
  const Eigen::MatrixXd Z = tp.Z.to_dense();
  REQUIRE(Z(0, 0) == Catch::Approx(1 / (1 + a)).epsilon(1e-14));
  REQUIRE(Z(0, 1) == Catch::Approx(a / (1 + a)).epsilon(1e-14));
  REQUIRE(tp.lambda[0] == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(tp.lambda[1] == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(tp.dropped.empty());

  SECTION("already row-stochastic input is a fixed point") {
    const auto S = SparseCrossMatrix::from_rows(2, {{{0, 0.5}, {1, 0.5}}, {{0, 0.25}, {1, 0.75}}});
    const auto tp2 = row_normalize(S);
    REQUIRE(tp2.Z.to_dense() == S.to_dense());
  }
}

TEST_CASE("transition rows always sum to one") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto K = random_sparse(40, 12, 4, seed);
    std::vector<Index> counts(12, 1);
    counts[3] = 5;
    const auto tp = row_normalize(cross_similarity(K, counts));
    const Eigen::VectorXd rowsum = tp.Z.row_sums();
    for (Index i = 0; i < rowsum.size(); ++i)
      REQUIRE(std::abs(rowsum[i] - 1.0) < 1e-12);
    // total column mass equals n
    REQUIRE(tp.lambda.sum() == Catch::Approx(static_cast<double>(tp.Z.rows)).margin(1e-9));
  }
}

TEST_CASE("Z is invariant under positive rescaling of the base kernel") {
  const auto K = random_sparse(60, 15, 5, 3);
  SparseCrossMatrix K3 = K;
  for (auto& v : K3.values) v *= 3.0;
  std::vector<Index> counts(15, 2);
  const auto tp1 = row_normalize(cross_similarity(K, counts));
  const auto tp3 = row_normalize(cross_similarity(K3, counts));
  const Eigen::MatrixXd d = (tp1.Z.to_dense() - tp3.Z.to_dense()).cwiseAbs();
  REQUIRE(d.maxCoeff() < 1e-14);
}

TEST_CASE("two-step operator is symmetric PSD and row-stochastic") {
  const auto K = random_sparse(50, 10, 3, 9);
  std::vector<Index> counts(10, 5);
  const auto tp = row_normalize(cross_similarity(K, counts));
  const Eigen::MatrixXd Z = tp.Z.to_dense();
  const Eigen::MatrixXd P = Z * tp.lambda.cwiseInverse().asDiagonal() * Z.transpose();
  REQUIRE((P - P.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::VectorXd rowsum = P.rowwise().sum();
  for (Index i = 0; i < 50; ++i) REQUIRE(std::abs(rowsum[i] - 1.0) < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  REQUIRE(es.eigenvalues().minCoeff() > -1e-12);
  REQUIRE(es.eigenvalues().maxCoeff() < 1.0 + 1e-12);
}

TEST_CASE("dropping a zero-mass landmark changes nothing") {
  // Column 2 of 4 never referenced: it carries no probability mass.
  const auto K = SparseCrossMatrix::from_rows(
      4, {{{0, 0.5}, {1, 0.2}}, {{0, 0.1}, {3, 0.9}}, {{1, 0.7}, {3, 0.3}}});
  std::vector<Index> counts = {1, 1, 1, 1};
  const auto tp = row_normalize(cross_similarity(K, counts));
  REQUIRE(tp.dropped == std::vector<Index>{2});
  REQUIRE(tp.Z.cols == 3);

  // Same construction with the empty column removed up front.
  const auto K2 = SparseCrossMatrix::from_rows(
      3, {{{0, 0.5}, {1, 0.2}}, {{0, 0.1}, {2, 0.9}}, {{1, 0.7}, {2, 0.3}}});
  const auto tp2 = row_normalize(cross_similarity(K2, {1, 1, 1}));
  const Eigen::MatrixXd P1 =
      tp.Z.to_dense() * tp.lambda.cwiseInverse().asDiagonal() * tp.Z.to_dense().transpose();
  const Eigen::MatrixXd P2 =
      tp2.Z.to_dense() * tp2.lambda.cwiseInverse().asDiagonal() * tp2.Z.to_dense().transpose();
  REQUIRE((P1 - P2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sparse construction at r = s matches a dense hand build") {
  Rng rng(30);
  PointCloud cloud;
  cloud.points.resize(25, 2);
  for (Index i = 0; i < 25; ++i)
    for (Index j = 0; j < 2; ++j) cloud.points(i, j) = rng.uniform(-2, 2);
  const auto ips = random_subsample(cloud, 25, 4);  // s = n
  KernelConfig cfg;
  cfg.epsilon = 0.8;
  cfg.r = ips.s();
  const auto tp = row_normalize(cross_similarity(sparse_se_cross_kernel(cloud, ips, cfg),
                                                 ips.counts));

  // Dense reference: K_ij over all pairs, Eq.4, then row normalization.
  const Index n = 25, s = ips.s();
  Eigen::MatrixXd K(n, s);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < s; ++j) {
      const Eigen::RowVectorXd xi = cloud.points.row(i), uj = ips.centers.row(j);
      K(i, j) = se_value(xi, uj, cfg.epsilon);
    }
  const Eigen::VectorXd colsum = K.colwise().sum();
  Eigen::VectorXd weighted(n);
  Eigen::MatrixXd A(n, s);
  for (Index i = 0; i < n; ++i) {
    double denom = 0;
    for (Index q = 0; q < s; ++q) denom += ips.counts[static_cast<std::size_t>(q)] * K(i, q);
    for (Index j = 0; j < s; ++j)
      A(i, j) = ips.counts[static_cast<std::size_t>(j)] * K(i, j) / (colsum[j] * denom);
  }
  for (Index i = 0; i < n; ++i) A.row(i) /= A.row(i).sum();
  REQUIRE((tp.Z.to_dense() - A).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("one-step operators") {
  SECTION("two points, any bandwidth") {
    PointCloud cloud;
    cloud.points.resize(2, 1);
    cloud.points << 0, 1.3;
    const double eps = 0.6;
    const auto ops = one_step_operators(cloud, eps);
    const double a = std::exp(-1.3 * 1.3 / (4 * eps * eps));
    REQUIRE(ops.Zbar(0, 0) == Catch::Approx(1 / (1 + a)).epsilon(1e-14));
    REQUIRE(ops.Zbar(0, 1) == Catch::Approx(a / (1 + a)).epsilon(1e-14));
    REQUIRE(ops.Zbar(1, 0) == Catch::Approx(a / (1 + a)).epsilon(1e-14));
  }
  SECTION("rows sum to one and the similarity is exactly symmetric") {
    Rng rng(2);
    PointCloud cloud;
    cloud.points.resize(30, 3);
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < 3; ++j) cloud.points(i, j) = rng.uniform(-1, 1);
    const auto ops = one_step_operators(cloud, 0.5);
    REQUIRE((ops.Abar - ops.Abar.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd rowsum = ops.Zbar.rowwise().sum();
    for (Index i = 0; i < 30; ++i) REQUIRE(std::abs(rowsum[i] - 1.0) < 1e-12);
  }
  SECTION("dense guard") {
    PointCloud cloud;
    cloud.points.resize(5, 1);
    cloud.points << 0, 1, 2, 3, 4;
    REQUIRE_THROWS_AS(one_step_operators(cloud, 1.0, 4), std::invalid_argument);
  }
}
