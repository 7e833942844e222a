#pragma once

#include <Eigen/Core>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "heatflow/rng.hpp"

namespace heatflow {

using Index = Eigen::Index;
/// Points are stored one per row; row-major keeps a point contiguous.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Task { regression, binary_classification };

/// The full set of observed inputs (labeled + unlabeled), one point per row.
struct PointCloud {
  RowMatrixXd points;  // n x p

  Index n() const { return points.rows(); }
  Index p() const { return points.cols(); }

  void validate() const {
    if (points.rows() < 1 || points.cols() < 1)
      throw std::invalid_argument("PointCloud: need n >= 1 and p >= 1");
    if (!points.allFinite())
      throw std::invalid_argument("PointCloud: coordinates must be finite");
  }

  /// Bounding-box diagonal, the library's O(np) diameter surrogate.
  double diameter() const {
    const Eigen::RowVectorXd lo = points.colwise().minCoeff();
    const Eigen::RowVectorXd hi = points.colwise().maxCoeff();
    return (hi - lo).norm();
  }
};

/// Point cloud with a labeled prefix. Labels cover indices [0, m); when the
/// generating process knows the response for every point, `truth` holds all
/// n values (used for held-out evaluation) and is empty otherwise.
struct Dataset {
  PointCloud cloud;
  Eigen::VectorXd labels;  // length m
  Task task = Task::regression;
  Eigen::VectorXd truth;   // length n or 0

  Index n() const { return cloud.n(); }
  Index m() const { return labels.size(); }

  void validate() const {
    cloud.validate();
    if (m() < 1 || m() > n())
      throw std::invalid_argument("Dataset: need 1 <= m <= n");
    if (truth.size() != 0 && truth.size() != n())
      throw std::invalid_argument("Dataset: truth must be empty or length n");
    if (task == Task::binary_classification) {
      for (Index i = 0; i < m(); ++i)
        if (labels[i] != 0.0 && labels[i] != 1.0)
          throw std::invalid_argument("Dataset: classification labels must be 0 or 1");
    }
  }
};

struct IndexRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
};

/// Labeled prefix [0, m) and unlabeled suffix [m, n); no copies.
inline std::pair<IndexRange, IndexRange> split_labeled(const Dataset& ds) {
  ds.validate();
  return {IndexRange{0, ds.m()}, IndexRange{ds.m(), ds.n()}};
}

namespace detail {

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline bool parse_double(const std::string& field, double& out) {
  const char* begin = field.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end != '\0') {
    if (!std::isspace(static_cast<unsigned char>(*end))) return false;
    ++end;
  }
  return true;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline bool is_blank(const std::string& s) {
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

/// Moves a chosen subset of m rows to the front of (points, values), keeping
/// the chosen rows in selection order and the rest in original order.
inline void promote_to_prefix(RowMatrixXd& points, Eigen::VectorXd& values,
                              const std::vector<Index>& chosen) {
  const Index n = points.rows();
  std::vector<char> picked(static_cast<std::size_t>(n), 0);
  for (Index i : chosen) picked[static_cast<std::size_t>(i)] = 1;

  RowMatrixXd pts(n, points.cols());
  Eigen::VectorXd vals(n);
  Index out = 0;
  for (Index i : chosen) {
    pts.row(out) = points.row(i);
    vals[out] = values[i];
    ++out;
  }
  for (Index i = 0; i < n; ++i) {
    if (!picked[static_cast<std::size_t>(i)]) {
      pts.row(out) = points.row(i);
      vals[out] = values[i];
      ++out;
    }
  }
  points.swap(pts);
  values.swap(vals);
}

}  // namespace detail

/// CSV format: header `x1,...,xp,label`, one row per point, empty label field
/// marks an unlabeled point. Labeled rows must precede unlabeled rows.
inline Dataset load_csv_dataset(const std::string& path, Task task) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv_dataset: cannot open " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_csv_dataset: empty file " + path);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2)
    throw std::runtime_error("load_csv_dataset: header must contain coordinates and a label column");
  const std::size_t p = header.size() - 1;

  std::vector<double> coords;
  std::vector<double> labels;
  bool seen_unlabeled = false;
  Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != p + 1)
      throw std::runtime_error("load_csv_dataset: row " + std::to_string(row) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(p + 1));
    for (std::size_t j = 0; j < p; ++j) {
      double v;
      if (!detail::parse_double(fields[j], v))
        throw std::runtime_error("load_csv_dataset: non-numeric coordinate at row " +
                                 std::to_string(row));
      coords.push_back(v);
    }
    const std::string& lab = fields[p];
    if (detail::is_blank(lab)) {
      seen_unlabeled = true;
    } else {
      if (seen_unlabeled)
        throw std::runtime_error("load_csv_dataset: labeled row " + std::to_string(row) +
                                 " appears after an unlabeled row");
      double v;
      if (!detail::parse_double(lab, v))
        throw std::runtime_error("load_csv_dataset: non-numeric label at row " +
                                 std::to_string(row));
      labels.push_back(v);
    }
  }
  const Index n = row;
  if (n == 0) throw std::runtime_error("load_csv_dataset: no data rows in " + path);
  if (labels.empty()) throw std::runtime_error("load_csv_dataset: no labeled rows in " + path);

  Dataset ds;
  ds.cloud.points = Eigen::Map<const RowMatrixXd>(coords.data(), n, static_cast<Index>(p));
  ds.labels = Eigen::Map<const Eigen::VectorXd>(labels.data(), static_cast<Index>(labels.size()));
  ds.task = task;
  ds.validate();
  return ds;
}

/// Writes with 17 significant digits so a round-trip is bit-exact.
/// `all_labels` additionally writes `truth` for the unlabeled suffix.
inline void write_csv_dataset(const Dataset& ds, const std::string& path, bool all_labels = false) {
  std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
  if (!out) throw std::runtime_error("write_csv_dataset: cannot open " + path);
  const Index n = ds.n(), p = ds.cloud.p(), m = ds.m();
  for (Index j = 0; j < p; ++j) out << "x" << (j + 1) << ",";
  out << "label\n";
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) out << detail::format_g17(ds.cloud.points(i, j)) << ",";
    if (i < m)
      out << detail::format_g17(ds.labels[i]);
    else if (all_labels && ds.truth.size() == n)
      out << detail::format_g17(ds.truth[i]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_csv_dataset: write failed for " + path);
}

/// Six concentric circles of radii 1..6, n/6 points uniform in angle on each;
/// odd circles (S1, S3, S5) are class 1, even circles class 0. m labeled
/// points are drawn uniformly without replacement and moved to the prefix.
inline Dataset generate_concentric_circles(Index n, Index m, std::uint64_t seed) {
  if (n < 6 || n % 6 != 0)
    throw std::invalid_argument("generate_concentric_circles: n must be positive and divisible by 6");
  if (m < 1 || m > n)
    throw std::invalid_argument("generate_concentric_circles: need 1 <= m <= n");

  Rng rng(seed);
  const Index per = n / 6;
  RowMatrixXd pts(n, 2);
  Eigen::VectorXd cls(n);
  Index k = 0;
  for (int c = 0; c < 6; ++c) {
    const double radius = c + 1.0;
    const double label = (c % 2 == 0) ? 1.0 : 0.0;  // S1, S3, S5 -> class 1
    for (Index i = 0; i < per; ++i, ++k) {
      const double theta = rng.uniform(0.0, 6.283185307179586476925286766559);
      pts(k, 0) = radius * std::cos(theta);
      pts(k, 1) = radius * std::sin(theta);
      cls[k] = label;
    }
  }

  if (m < n) {
    const auto chosen = rng.sample_without_replacement(n, m);
    detail::promote_to_prefix(pts, cls, chosen);
  }

  Dataset ds;
  ds.cloud.points = std::move(pts);
  ds.labels = cls.head(m);
  ds.task = Task::binary_classification;
  ds.truth = std::move(cls);
  ds.validate();
  return ds;
}

/// Archimedean spiral x(theta) = (theta/6pi)(cos theta, sin theta) with theta
/// uniform in [pi, 6pi]; response y = theta + N(0, noise_sd^2).
inline Dataset generate_spiral(Index n, Index m, double noise_sd, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_spiral: need n >= 2");
  if (m < 1 || m > n) throw std::invalid_argument("generate_spiral: need 1 <= m <= n");
  if (noise_sd < 0) throw std::invalid_argument("generate_spiral: noise_sd must be >= 0");

  constexpr double kPi = 3.1415926535897932384626433832795;
  const double theta_max = 6.0 * kPi;
  Rng rng(seed);
  RowMatrixXd pts(n, 2);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    const double theta = rng.uniform(kPi, theta_max);
    const double radius = theta / theta_max;
    pts(i, 0) = radius * std::cos(theta);
    pts(i, 1) = radius * std::sin(theta);
    y[i] = theta + (noise_sd > 0 ? noise_sd * rng.normal() : 0.0);
  }

  if (m < n) {
    const auto chosen = rng.sample_without_replacement(n, m);
    detail::promote_to_prefix(pts, y, chosen);
  }

  Dataset ds;
  ds.cloud.points = std::move(pts);
  ds.labels = y.head(m);
  ds.task = Task::regression;
  ds.truth = std::move(y);
  ds.validate();
  return ds;
}

/// Re-labels a fully-labeled dataset so that only a fresh uniform subset of
/// size m is visible; the remaining responses move to `truth` for evaluation.
inline Dataset mask_labels(const Dataset& full, Index m, std::uint64_t seed) {
  if (full.m() != full.n())
    throw std::invalid_argument("mask_labels: input must be fully labeled");
  if (m < 1 || m > full.n())
    throw std::invalid_argument("mask_labels: need 1 <= m <= n");

  RowMatrixXd pts = full.cloud.points;
  Eigen::VectorXd vals = full.labels;
  if (m < full.n()) {
    Rng rng(seed);
    const auto chosen = rng.sample_without_replacement(full.n(), m);
    detail::promote_to_prefix(pts, vals, chosen);
  }
  Dataset ds;
  ds.cloud.points = std::move(pts);
  ds.labels = vals.head(m);
  ds.task = full.task;
  ds.truth = std::move(vals);
  ds.validate();
  return ds;
}

}  // namespace heatflow
