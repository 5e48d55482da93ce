#pragma once

#include <span>
#include <vector>

#include "scan/cluster.hpp"
#include "scan/tensor.hpp"

namespace scan {

struct MemoryConfig {
  /// Momentum decay rate in (0, 1].
  double beta = 0.5;
};

/// Feature memory (one row per base sample, with class and cluster labels)
/// plus the class-centroid and cluster-centroid banks derived from it.
///
/// Class labels are fixed at construction; there is no way to change them.
/// Rows are updated by momentum mixing and are not re-normalized, so every
/// row stays a convex combination of unit vectors.
class MemoryBank {
 public:
  /// Rows become the L2-normalized embeddings, cluster labels come from the
  /// k-means assignments, and both centroid banks are computed by averaging.
  MemoryBank(const MatrixXd& embeddings, std::vector<int> class_labels, int n_classes,
             const Clustering& kmeans);

  /// Rebuilds a bank from saved state (checkpoint resume).
  static MemoryBank restore(MatrixXd features, std::vector<int> class_labels,
                            std::vector<int> cluster_labels, MatrixXd class_centroids,
                            MatrixXd cluster_centroids, std::vector<int> stale_clusters);

  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }
  int n_classes() const { return static_cast<int>(class_centroids_.rows()); }
  int n_clusters() const { return static_cast<int>(cluster_centroids_.rows()); }

  const MatrixXd& features() const { return features_; }
  auto row(Eigen::Index i) const { return features_.row(i); }
  std::span<const int> class_labels() const { return class_labels_; }
  std::span<const int> cluster_labels() const { return cluster_labels_; }
  int class_label(Eigen::Index i) const { return class_labels_[static_cast<std::size_t>(i)]; }
  int cluster_label(Eigen::Index i) const { return cluster_labels_[static_cast<std::size_t>(i)]; }
  const MatrixXd& class_centroids() const { return class_centroids_; }
  const MatrixXd& cluster_centroids() const { return cluster_centroids_; }
  /// Cluster ids with no members at the last refresh; their rows are stale.
  std::span<const int> stale_clusters() const { return stale_clusters_; }

  /// f_m,i <- beta * f / |f| + (1 - beta) * f_m,i
  void momentum_update(Eigen::Index i, const Eigen::Ref<const RowVector<double>>& f, double beta);

  /// Moves sample i to its nearest cluster centroid; returns the new label.
  int reassign_cluster_label(Eigen::Index i);
  void reassign_all();

  /// Recomputes both centroid banks from the current rows and labels.
  /// Returns the cluster ids that had no members.
  std::span<const int> refresh_centroids();

  std::vector<int> occupancy() const { return cluster_occupancy(cluster_labels_, n_clusters()); }

 private:
  MemoryBank() = default;

  MatrixXd features_;
  std::vector<int> class_labels_;
  std::vector<int> cluster_labels_;
  MatrixXd class_centroids_;
  MatrixXd cluster_centroids_;
  std::vector<int> stale_clusters_;
};

}  // namespace scan
