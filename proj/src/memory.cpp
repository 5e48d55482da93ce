#include "scan/memory.hpp"

#include <cmath>
#include <string>

#include "scan/error.hpp"

namespace scan {

MemoryBank::MemoryBank(const MatrixXd& embeddings, std::vector<int> class_labels, int n_classes,
                       const Clustering& kmeans) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (class_labels.size() != n || kmeans.assignments.size() != n)
    throw DimensionError("init_memory: " + std::to_string(n) + " embeddings, " +
                         std::to_string(class_labels.size()) + " class labels, " +
                         std::to_string(kmeans.assignments.size()) + " cluster assignments");
  if (kmeans.centroids.cols() != embeddings.cols())
    throw DimensionError("init_memory: centroid width " + std::to_string(kmeans.centroids.cols()) +
                         " vs embedding width " + std::to_string(embeddings.cols()));
  for (int c : class_labels)
    if (c < 0 || c >= n_classes) throw DimensionError("init_memory: class label out of range");

  features_ = normalize_rows(embeddings);
  class_labels_ = std::move(class_labels);
  cluster_labels_ = kmeans.assignments;
  class_centroids_ = MatrixXd::Zero(n_classes, embeddings.cols());
  cluster_centroids_ = kmeans.centroids;
  refresh_centroids();
}

MemoryBank MemoryBank::restore(MatrixXd features, std::vector<int> class_labels,
                               std::vector<int> cluster_labels, MatrixXd class_centroids,
                               MatrixXd cluster_centroids, std::vector<int> stale_clusters) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (class_labels.size() != n || cluster_labels.size() != n)
    throw DimensionError("memory restore: label counts do not match feature rows");
  if (class_centroids.cols() != features.cols() || cluster_centroids.cols() != features.cols())
    throw DimensionError("memory restore: centroid width does not match feature width");
  MemoryBank bank;
  bank.features_ = std::move(features);
  bank.class_labels_ = std::move(class_labels);
  bank.cluster_labels_ = std::move(cluster_labels);
  bank.class_centroids_ = std::move(class_centroids);
  bank.cluster_centroids_ = std::move(cluster_centroids);
  bank.stale_clusters_ = std::move(stale_clusters);
  return bank;
}

void MemoryBank::momentum_update(Eigen::Index i, const Eigen::Ref<const RowVector<double>>& f,
                                 double beta) {
  if (i < 0 || i >= size()) throw DimensionError("momentum_update: sample id " + std::to_string(i) + " out of range");
  if (f.size() != dim())
    throw DimensionError("momentum_update: feature width " + std::to_string(f.size()) +
                         " vs memory width " + std::to_string(dim()));
  if (!(beta > 0.0 && beta <= 1.0))
    throw ConfigError("momentum_update: beta must be in (0,1], got " + std::to_string(beta));
  const double norm = f.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw NumericError("momentum_update: feature for sample " + std::to_string(i) +
                       " has zero or non-finite norm");
  features_.row(i) = beta * (f / norm) + (1.0 - beta) * features_.row(i);
}

int MemoryBank::reassign_cluster_label(Eigen::Index i) {
  const int label = nearest_centroid(features_.row(i), cluster_centroids_);
  cluster_labels_[static_cast<std::size_t>(i)] = label;
  return label;
}

void MemoryBank::reassign_all() { cluster_labels_ = assign_nearest(features_, cluster_centroids_); }

std::span<const int> MemoryBank::refresh_centroids() {
  class_centroids_ = recompute_centroids(features_, class_labels_, class_centroids_).centroids;
  auto update = recompute_centroids(features_, cluster_labels_, cluster_centroids_);
  cluster_centroids_ = std::move(update.centroids);
  stale_clusters_ = std::move(update.empty);
  return stale_clusters_;
}

}  // namespace scan
