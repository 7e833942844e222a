#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heatflow/basekernel.hpp"

using namespace heatflow;

namespace {

PointCloud line_cloud(std::initializer_list<double> xs) {
  PointCloud c;
  c.points.resize(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) c.points(i++, 0) = x;
  return c;
}

}  // namespace

TEST_CASE("squared-exponential kernel value") {
  Eigen::RowVectorXd x(2), u(2);
  x << 1, 2;
  u << 1, 2;
  REQUIRE(se_value(x, u, 0.7) == 1.0);

  u << 1 + 2 * 0.7, 2;  // ||x - u|| = 2 eps
  REQUIRE(se_value(x, u, 0.7) == Catch::Approx(std::exp(-1.0)).epsilon(1e-14));
  REQUIRE(se_value(x, u, 0.7) == se_value(u, x, 0.7));
  REQUIRE_THROWS_AS(se_value(x, u, 0.0), std::invalid_argument);
}

TEST_CASE("sparse SE cross kernel") {
  SECTION("r = s matches the dense cross kernel entrywise") {
    Rng rng(4);
    PointCloud cloud;
    cloud.points.resize(30, 2);
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < 2; ++j) cloud.points(i, j) = rng.uniform(-1, 1);
    const auto ips = random_subsample(cloud, 7, 5);
    KernelConfig cfg;
    cfg.epsilon = 0.4;
    cfg.r = ips.s();
    const Eigen::MatrixXd K = sparse_se_cross_kernel(cloud, ips, cfg).to_dense();
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < ips.s(); ++j) {
        const Eigen::RowVectorXd xi = cloud.points.row(i), uj = ips.centers.row(j);
        REQUIRE(K(i, j) == se_value(xi, uj, cfg.epsilon));
      }
  }
  SECTION("r = 1 leaves a single entry at the nearest landmark") {
    const PointCloud cloud = line_cloud({0, 1, 4, 10});
    const auto ips = random_subsample(cloud, 4, 1);
    KernelConfig cfg;
    cfg.epsilon = 1.0;
    cfg.r = 1;
    const auto K = sparse_se_cross_kernel(cloud, ips, cfg);
    for (Index i = 0; i < K.rows; ++i) {
      REQUIRE(K.row_ptr[i + 1] - K.row_ptr[i] == 1);
      REQUIRE(K.col_idx[static_cast<std::size_t>(K.row_ptr[i])] ==
              ips.assignment[static_cast<std::size_t>(i)]);
    }
  }
  SECTION("hand-evaluated line instance") {
    const PointCloud cloud = line_cloud({0, 1, 10});
    RowMatrixXd centers(2, 1);
    centers << 0, 10;
    const auto ips = build_induced_from_centers(cloud, centers, SubsampleMethod::random);
    KernelConfig cfg;
    cfg.epsilon = 1.0;
    cfg.r = 1;
    const auto K = sparse_se_cross_kernel(cloud, ips, cfg);
    REQUIRE(K.values[0] == 1.0);                                           // row 0 -> landmark 0
    REQUIRE(K.values[1] == Catch::Approx(std::exp(-0.25)).epsilon(1e-15)); // row 1 -> landmark 0
    REQUIRE(K.values[2] == 1.0);                                           // row 2 -> landmark 1
    REQUIRE(K.col_idx[0] == 0);
    REQUIRE(K.col_idx[1] == 0);
    REQUIRE(K.col_idx[2] == 1);
  }
}

TEST_CASE("simplex projection") {
  SECTION("points already on the simplex are fixed") {
    Eigen::VectorXd v(3);
    v << 0.2, 0.5, 0.3;
    REQUIRE((simplex_project(v) - v).lpNorm<Eigen::Infinity>() < 1e-15);
  }
  SECTION("hand values") {
    Eigen::VectorXd v(2);
    v << 2, 0;
    Eigen::VectorXd w = simplex_project(v);
    REQUIRE(w[0] == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(w[1] == 0.0);
    v << 0.6, 0.6;
    w = simplex_project(v);
    REQUIRE(w[0] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(w[1] == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("output is always feasible") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd v(1 + static_cast<Index>(rng.uniform_int(6)));
      for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-4, 4);
      const Eigen::VectorXd w = simplex_project(v);
      REQUIRE(w.minCoeff() >= 0.0);
      REQUIRE(w.sum() == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

namespace {

InducedPointSet fixed_landmarks(const RowMatrixXd& centers) {
  InducedPointSet ips;
  ips.centers = centers;
  ips.counts.assign(static_cast<std::size_t>(centers.rows()), 1);
  ips.assignment = {};
  return ips;
}

}  // namespace

TEST_CASE("LAE weights") {
  SECTION("interior point interpolates its bracketing landmarks") {
    const PointCloud cloud = line_cloud({0.3});
    RowMatrixXd centers(2, 1);
    centers << 0, 1;
    const auto K = lae_cross_kernel(cloud, fixed_landmarks(centers), 2);
    REQUIRE(K.row_ptr[1] - K.row_ptr[0] == 2);
    REQUIRE(K.values[0] == Catch::Approx(0.7).margin(1e-6));
    REQUIRE(K.values[1] == Catch::Approx(0.3).margin(1e-6));
  }
  SECTION("exterior point projects onto the hull boundary") {
    const PointCloud cloud = line_cloud({-1.0});
    RowMatrixXd centers(2, 1);
    centers << 0, 1;
    const auto K = lae_cross_kernel(cloud, fixed_landmarks(centers), 2);
    // weight on the far landmark is exactly zero and dropped
    REQUIRE(K.row_ptr[1] - K.row_ptr[0] == 1);
    REQUIRE(K.col_idx[0] == 0);
    REQUIRE(K.values[0] == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("a point sitting on a landmark gets the vertex weight") {
    // (0,0) is not in the convex hull of the other local landmarks, so the
    // zero-loss reconstruction is the unique vertex solution.
    PointCloud cloud;
    cloud.points.resize(1, 2);
    cloud.points << 0, 0;
    RowMatrixXd centers(3, 2);
    centers << 0, 0, 2, 0, 0, 2;
    const auto K = lae_cross_kernel(cloud, fixed_landmarks(centers), 3);
    double w0 = 0;
    for (Index k = K.row_ptr[0]; k < K.row_ptr[1]; ++k)
      if (K.col_idx[static_cast<std::size_t>(k)] == 0) w0 = K.values[static_cast<std::size_t>(k)];
    REQUIRE(w0 == Catch::Approx(1.0).margin(1e-6));
  }
  SECTION("rows are feasible and the solver objective never increases") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      const Index r = 2 + static_cast<Index>(rng.uniform_int(4));
      Eigen::MatrixXd pts(r, 2);
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < 2; ++j) pts(i, j) = rng.uniform(-1, 1);
      Eigen::VectorXd x(2);
      x << rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5);
      Eigen::MatrixXd gram = pts * pts.transpose();
      gram.diagonal().array() += 1e-10;
      const Eigen::VectorXd lin = pts * x;
      std::vector<double> trace;
      const Eigen::VectorXd w = detail::lae_solve_row(gram, lin, 200, 1e-8, &trace);
      REQUIRE(w.minCoeff() >= -1e-12);
      REQUIRE(w.sum() == Catch::Approx(1.0).margin(1e-9));
      for (std::size_t i = 1; i < trace.size(); ++i) REQUIRE(trace[i] <= trace[i - 1] + 1e-12);
    }
  }
}
