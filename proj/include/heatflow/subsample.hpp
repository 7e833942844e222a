#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include "heatflow/dataset.hpp"
#include "heatflow/rng.hpp"

namespace heatflow {

enum class SubsampleMethod { random, kmeans, minibatch_kmeans };

/// s landmark points with nearest-assignment map tau and occupancy counts.
/// Landmarks that attract no point are dropped, shrinking s.
struct InducedPointSet {
  RowMatrixXd centers;              // s x p
  std::vector<Index> counts;        // n_j, length s
  std::vector<Index> assignment;    // tau(i) in [0, s), length n
  SubsampleMethod method = SubsampleMethod::random;

  Index s() const { return centers.rows(); }
};

namespace detail {

inline Index nearest_center(const RowMatrixXd& centers, const Eigen::RowVectorXd& x) {
  Index best = 0;
  double best_d = (centers.row(0) - x).squaredNorm();
  for (Index j = 1; j < centers.rows(); ++j) {
    const double d = (centers.row(j) - x).squaredNorm();
    if (d < best_d) {  // ties keep the smallest index
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

/// Computes assignment/counts for given centers and drops empty landmarks.
/// Shared finalization step for all subsampling methods.
inline InducedPointSet build_induced_from_centers(const PointCloud& cloud, RowMatrixXd centers,
                                                  SubsampleMethod method) {
  const Index n = cloud.n();
  if (centers.rows() < 1) throw std::invalid_argument("build_induced_from_centers: no centers");

  std::vector<Index> assign(static_cast<std::size_t>(n));
  std::vector<Index> counts(static_cast<std::size_t>(centers.rows()), 0);
  for (Index i = 0; i < n; ++i) {
    const Index j = detail::nearest_center(centers, cloud.points.row(i));
    assign[static_cast<std::size_t>(i)] = j;
    ++counts[static_cast<std::size_t>(j)];
  }

  // Drop empty landmarks and remap.
  Index kept = 0;
  std::vector<Index> remap(static_cast<std::size_t>(centers.rows()), -1);
  for (Index j = 0; j < centers.rows(); ++j)
    if (counts[static_cast<std::size_t>(j)] > 0) remap[static_cast<std::size_t>(j)] = kept++;
  if (kept < centers.rows()) {
    RowMatrixXd packed(kept, centers.cols());
    std::vector<Index> packed_counts(static_cast<std::size_t>(kept));
    for (Index j = 0; j < centers.rows(); ++j) {
      const Index t = remap[static_cast<std::size_t>(j)];
      if (t >= 0) {
        packed.row(t) = centers.row(j);
        packed_counts[static_cast<std::size_t>(t)] = counts[static_cast<std::size_t>(j)];
      }
    }
    for (auto& a : assign) a = remap[static_cast<std::size_t>(a)];
    centers.swap(packed);
    counts.swap(packed_counts);
  }

  InducedPointSet out;
  out.centers = std::move(centers);
  out.counts = std::move(counts);
  out.assignment = std::move(assign);
  out.method = method;
  return out;
}

/// s distinct cloud points chosen uniformly without replacement.
inline InducedPointSet random_subsample(const PointCloud& cloud, Index s, std::uint64_t seed) {
  cloud.validate();
  if (s < 1 || s > cloud.n())
    throw std::invalid_argument("random_subsample: need 1 <= s <= n");
  Rng rng(seed);
  const auto idx = rng.sample_without_replacement(cloud.n(), s);
  RowMatrixXd centers(s, cloud.p());
  for (Index j = 0; j < s; ++j) centers.row(j) = cloud.points.row(idx[static_cast<std::size_t>(j)]);
  return build_induced_from_centers(cloud, std::move(centers), SubsampleMethod::random);
}

namespace detail {

/// k-means++ seeding: first center uniform, later centers with probability
/// proportional to the squared distance to the nearest chosen center.
inline RowMatrixXd kmeanspp_init(const PointCloud& cloud, Index s, Rng& rng) {
  const Index n = cloud.n();
  RowMatrixXd centers(s, cloud.p());
  Eigen::VectorXd mind(n);

  const Index first = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
  centers.row(0) = cloud.points.row(first);
  for (Index i = 0; i < n; ++i) mind[i] = (cloud.points.row(i) - centers.row(0)).squaredNorm();

  for (Index j = 1; j < s; ++j) {
    const double total = mind.sum();
    Index pick;
    if (total <= 0) {
      pick = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    } else {
      double target = rng.uniform01() * total;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        target -= mind[i];
        if (target <= 0) {
          pick = i;
          break;
        }
      }
    }
    centers.row(j) = cloud.points.row(pick);
    for (Index i = 0; i < n; ++i)
      mind[i] = std::min(mind[i], (cloud.points.row(i) - centers.row(j)).squaredNorm());
  }
  return centers;
}

/// Re-seeds an empty cluster at the point farthest from its assigned center.
inline void reseed_empty(const PointCloud& cloud, RowMatrixXd& centers,
                         const std::vector<Index>& assign, Index empty_j) {
  Index far = 0;
  double far_d = -1.0;
  for (Index i = 0; i < cloud.n(); ++i) {
    const double d = (cloud.points.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  centers.row(empty_j) = cloud.points.row(far);
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding. Stops when the largest center
/// shift drops below tol or after max_iter rounds. Empty clusters are
/// re-seeded at the farthest point, never an error.
/// Optional wcss_trace records the within-cluster sum of squares after each
/// assignment pass (non-increasing).
inline InducedPointSet kmeans_lloyd(const PointCloud& cloud, Index s, Index max_iter, double tol,
                                    std::uint64_t seed, std::vector<double>* wcss_trace = nullptr) {
  cloud.validate();
  if (s < 1 || s > cloud.n()) throw std::invalid_argument("kmeans_lloyd: need 1 <= s <= n");
  const Index n = cloud.n(), p = cloud.p();
  Rng rng(seed);
  RowMatrixXd centers = detail::kmeanspp_init(cloud, s, rng);

  std::vector<Index> assign(static_cast<std::size_t>(n), 0);
  std::vector<Index> counts(static_cast<std::size_t>(s), 0);
  RowMatrixXd sums(s, p);

  for (Index iter = 0; iter < max_iter; ++iter) {
    double wcss = 0.0;
    std::fill(counts.begin(), counts.end(), Index{0});
    sums.setZero();
    for (Index i = 0; i < n; ++i) {
      const Index j = detail::nearest_center(centers, cloud.points.row(i));
      assign[static_cast<std::size_t>(i)] = j;
      ++counts[static_cast<std::size_t>(j)];
      sums.row(j) += cloud.points.row(i);
      wcss += (cloud.points.row(i) - centers.row(j)).squaredNorm();
    }
    if (wcss_trace) wcss_trace->push_back(wcss);

    double shift = 0.0;
    for (Index j = 0; j < s; ++j) {
      if (counts[static_cast<std::size_t>(j)] == 0) {
        detail::reseed_empty(cloud, centers, assign, j);
        shift = std::numeric_limits<double>::infinity();
      } else {
        const Eigen::RowVectorXd mean =
            sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        shift = std::max(shift, (mean - centers.row(j)).norm());
        centers.row(j) = mean;
      }
    }
    if (shift < tol) break;
  }
  return build_induced_from_centers(cloud, std::move(centers), SubsampleMethod::kmeans);
}

/// Mini-batch k-means with per-center learning rate 1/(times seen); the final
/// counts and assignment come from a full nearest-center pass.
inline InducedPointSet minibatch_kmeans(const PointCloud& cloud, Index s, Index batch, Index iters,
                                        std::uint64_t seed) {
  cloud.validate();
  if (s < 1 || s > cloud.n()) throw std::invalid_argument("minibatch_kmeans: need 1 <= s <= n");
  if (batch < 1) throw std::invalid_argument("minibatch_kmeans: need batch >= 1");
  const Index n = cloud.n();
  Rng rng(seed);
  RowMatrixXd centers = detail::kmeanspp_init(cloud, s, rng);

  std::vector<double> seen(static_cast<std::size_t>(s), 0.0);
  std::vector<Index> members(static_cast<std::size_t>(batch));
  for (Index it = 0; it < iters; ++it) {
    for (Index b = 0; b < batch; ++b)
      members[static_cast<std::size_t>(b)] =
          static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    for (Index b = 0; b < batch; ++b) {
      const Index i = members[static_cast<std::size_t>(b)];
      const Index j = detail::nearest_center(centers, cloud.points.row(i));
      seen[static_cast<std::size_t>(j)] += 1.0;
      const double eta = 1.0 / seen[static_cast<std::size_t>(j)];
      centers.row(j) += eta * (cloud.points.row(i) - centers.row(j));
    }
  }
  return build_induced_from_centers(cloud, std::move(centers), SubsampleMethod::minibatch_kmeans);
}

/// Within-cluster sum of squares of an assignment (brute-force, test oracle).
inline double wcss_objective(const PointCloud& cloud, const InducedPointSet& ips) {
  double obj = 0.0;
  for (Index i = 0; i < cloud.n(); ++i)
    obj += (cloud.points.row(i) - ips.centers.row(ips.assignment[static_cast<std::size_t>(i)]))
               .squaredNorm();
  return obj;
}

}  // namespace heatflow
