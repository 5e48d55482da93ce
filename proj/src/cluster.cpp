#include "scan/cluster.hpp"

#include <cmath>

#include <algorithm>
#include <map>
#include <string>

#include "scan/error.hpp"

namespace scan {

namespace {

void check_labels(std::span<const int> labels, Eigen::Index n, Eigen::Index k, const char* what) {
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DimensionError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " samples");
  for (int l : labels)
    if (l < 0 || l >= k)
      throw DimensionError(std::string(what) + ": label " + std::to_string(l) + " outside [0, " +
                           std::to_string(k) + ")");
}

Eigen::Index sample_by_weight(const Eigen::VectorXd& d2, double total, SeededRng& rng) {
  const Eigen::Index n = d2.size();
  if (!(total > 0)) return static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
  const double target = rng.uniform() * total;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += d2(i);
    if (acc > target && d2(i) > 0) return i;
  }
  for (Eigen::Index i = n - 1; i > 0; --i)
    if (d2(i) > 0) return i;
  return 0;
}

// Greedy k-means++: each new seed is the best of 2 + floor(ln k) D^2-weighted
// candidates, judged by the resulting potential.
MatrixXd kmeanspp_seeds(const MatrixXd& x, int k, SeededRng& rng) {
  const Eigen::Index n = x.rows();
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  MatrixXd centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index best = -1;
    double best_potential = 0.0;
    Eigen::VectorXd best_d2;
    for (int t = 0; t < trials; ++t) {
      const Eigen::Index cand = sample_by_weight(d2, total, rng);
      Eigen::VectorXd next = d2.cwiseMin((x.rowwise() - x.row(cand)).rowwise().squaredNorm());
      const double potential = next.sum();
      if (best < 0 || potential < best_potential) {
        best = cand;
        best_potential = potential;
        best_d2 = std::move(next);
      }
    }
    centers.row(c) = x.row(best);
    d2 = std::move(best_d2);
  }
  return centers;
}

}  // namespace

int nearest_centroid(const Eigen::Ref<const RowVector<double>>& x, const MatrixXd& centroids) {
  int best = 0;
  double best_d = (centroids.row(0) - x).squaredNorm();
  for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<int> assign_nearest(const MatrixXd& features, const MatrixXd& centroids) {
  if (centroids.rows() == 0) throw DimensionError("assign_nearest: empty centroid set");
  if (features.cols() != centroids.cols())
    throw DimensionError("assign_nearest: features " + shape_string(features) + " vs centroids " +
                         shape_string(centroids));
  std::vector<int> labels(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    labels[static_cast<std::size_t>(i)] = nearest_centroid(features.row(i), centroids);
  return labels;
}

CentroidUpdate recompute_centroids(const MatrixXd& features, std::span<const int> labels,
                                   const MatrixXd& previous) {
  if (features.cols() != previous.cols())
    throw DimensionError("recompute_centroids: features " + shape_string(features) +
                         " vs centroids " + shape_string(previous));
  check_labels(labels, features.rows(), previous.rows(), "recompute_centroids");
  MatrixXd sums = MatrixXd::Zero(previous.rows(), previous.cols());
  std::vector<int> counts(static_cast<std::size_t>(previous.rows()), 0);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    sums.row(l) += features.row(i);
    ++counts[static_cast<std::size_t>(l)];
  }
  CentroidUpdate out{previous, {}};
  for (Eigen::Index c = 0; c < previous.rows(); ++c) {
    const int n = counts[static_cast<std::size_t>(c)];
    if (n == 0) {
      out.empty.push_back(static_cast<int>(c));
    } else {
      out.centroids.row(c) = sums.row(c) / static_cast<double>(n);
    }
  }
  return out;
}

double inertia(const MatrixXd& features, const MatrixXd& centroids, std::span<const int> labels) {
  check_labels(labels, features.rows(), centroids.rows(), "inertia");
  double total = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    total += (features.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

namespace {
Clustering lloyd_run(const MatrixXd& features, const KMeansConfig& cfg, SeededRng& rng);
}  // namespace

Clustering kmeans_fit(const MatrixXd& features, const KMeansConfig& cfg, SeededRng& rng) {
  if (cfg.k <= 0) throw ConfigError("kmeans: k must be positive, got " + std::to_string(cfg.k));
  if (cfg.k > features.rows())
    throw ConfigError("kmeans: k = " + std::to_string(cfg.k) + " exceeds sample count " +
                      std::to_string(features.rows()));
  if (!features.allFinite()) throw NumericError("kmeans: features contain non-finite values");
  if (cfg.n_init < 1) throw ConfigError("kmeans: n_init must be >= 1");

  Clustering best = lloyd_run(features, cfg, rng);
  for (int r = 1; r < cfg.n_init; ++r) {
    Clustering next = lloyd_run(features, cfg, rng);
    if (next.inertia < best.inertia) best = std::move(next);
  }
  return best;
}

namespace {

Clustering lloyd_run(const MatrixXd& features, const KMeansConfig& cfg, SeededRng& rng) {
  Clustering result;
  result.centroids = kmeanspp_seeds(features, cfg.k, rng);
  result.assignments = assign_nearest(features, result.centroids);
  result.inertia = inertia(features, result.centroids, result.assignments);
  result.inertia_history.push_back(result.inertia);

  for (int it = 0; it < cfg.max_iters; ++it) {
    auto update = recompute_centroids(features, result.assignments, result.centroids);
    result.centroids = std::move(update.centroids);
    result.empty_clusters = std::move(update.empty);
    result.assignments = assign_nearest(features, result.centroids);
    const double next = inertia(features, result.centroids, result.assignments);
    result.inertia_history.push_back(next);
    result.iterations = it + 1;
    const double prev = result.inertia;
    result.inertia = next;
    if (prev <= 0.0 || (prev - next) / prev < cfg.tol) break;
  }
  return result;
}

}  // namespace

double cluster_error_rate(std::span<const int> cluster_labels, std::span<const int> class_labels) {
  if (cluster_labels.empty()) throw DataError("cluster_error_rate: empty input");
  if (cluster_labels.size() != class_labels.size())
    throw DimensionError("cluster_error_rate: " + std::to_string(cluster_labels.size()) +
                         " cluster labels vs " + std::to_string(class_labels.size()) + " class labels");
  std::map<int, std::map<int, int>> counts;  // cluster -> class -> members
  for (std::size_t i = 0; i < cluster_labels.size(); ++i) ++counts[cluster_labels[i]][class_labels[i]];
  long wrong = 0;
  for (const auto& [cluster, by_class] : counts) {
    int total = 0;
    int majority = 0;
    for (const auto& [cls, n] : by_class) {  // ascending class ids, so ties keep the lowest
      total += n;
      majority = std::max(majority, n);
    }
    wrong += total - majority;
  }
  return static_cast<double>(wrong) / static_cast<double>(cluster_labels.size());
}

std::vector<int> cluster_occupancy(std::span<const int> labels, int k) {
  std::vector<int> occ(static_cast<std::size_t>(k), 0);
  for (int l : labels) {
    if (l < 0 || l >= k) throw DimensionError("cluster_occupancy: label out of range");
    ++occ[static_cast<std::size_t>(l)];
  }
  return occ;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DimensionError("adjusted_rand_index: partitions differ in length");
  const auto n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, long> joint;
  std::map<int, long> rows;
  std::map<int, long> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [key, m] : joint) index += choose2(static_cast<double>(m));
  double sum_a = 0.0;
  for (const auto& [key, m] : rows) sum_a += choose2(static_cast<double>(m));
  double sum_b = 0.0;
  for (const auto& [key, m] : cols) sum_b += choose2(static_cast<double>(m));
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace scan
