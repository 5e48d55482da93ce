#pragma once

#include <span>
#include <vector>

#include "scan/rng.hpp"
#include "scan/tensor.hpp"

namespace scan {

struct KMeansConfig {
  int k = 2;
  int max_iters = 100;
  /// Stop once (previous - current) / previous inertia drops below this.
  double tol = 1e-6;
  /// Independent k-means++ restarts; the lowest final inertia wins
  /// (ties keep the earliest run).
  int n_init = 10;
};

struct Clustering {
  MatrixXd centroids;             // k x d
  std::vector<int> assignments;   // nearest centroid per sample
  double inertia = 0.0;
  /// Inertia after the seeding assignment and after every Lloyd round.
  std::vector<double> inertia_history;
  /// Clusters that were empty at the last centroid update.
  std::vector<int> empty_clusters;
  int iterations = 0;
};

/// Seeded k-means++ followed by Lloyd iterations, repeated n_init times with
/// draws taken from `rng` in sequence. Empty clusters keep their previous
/// centroid. The returned history belongs to the winning run.
Clustering kmeans_fit(const MatrixXd& features, const KMeansConfig& cfg, SeededRng& rng);

/// Index of the nearest centroid by squared Euclidean distance; ties go to
/// the lowest index.
std::vector<int> assign_nearest(const MatrixXd& features, const MatrixXd& centroids);
int nearest_centroid(const Eigen::Ref<const RowVector<double>>& x, const MatrixXd& centroids);

struct CentroidUpdate {
  MatrixXd centroids;
  std::vector<int> empty;  // ids whose previous centroid was kept
};

/// Means of the features carrying each label. Labels without members keep
/// the row from `previous` and are reported.
CentroidUpdate recompute_centroids(const MatrixXd& features, std::span<const int> labels,
                                   const MatrixXd& previous);

/// Sum of squared distances from each sample to its assigned centroid.
double inertia(const MatrixXd& features, const MatrixXd& centroids, std::span<const int> labels);

/// Fraction of samples whose class differs from the majority class of
/// their cluster (majority ties go to the lowest class index).
double cluster_error_rate(std::span<const int> cluster_labels, std::span<const int> class_labels);

/// Members per cluster id in [0, k).
std::vector<int> cluster_occupancy(std::span<const int> labels, int k);

/// Hubert-Arabie adjusted Rand index between two partitions.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace scan
