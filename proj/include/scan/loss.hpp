#pragma once

#include <optional>
#include <span>
#include <vector>

#include "scan/memory.hpp"
#include "scan/tensor.hpp"

namespace scan {

struct LossConfig {
  double alpha = 0.3;   // triplet margin
  double lambda = 1.0;  // purity weight
  double beta = 0.5;    // memory momentum
  int n_clusters = 0;   // 0 selects ceil(2.5 * C_b)
  int warmup_epochs = 5;
};

/// Cluster count rule used when none is configured.
int default_cluster_count(int n_classes);

struct LossBreakdown {
  double class_loss = 0.0;
  double cluster_loss = 0.0;
  double purity_loss = 0.0;
  double total = 0.0;
  int active_triplets = 0;
  int skipped_triplets = 0;
};

inline constexpr double kProbabilityClamp = 1e-12;

struct CrossEntropy {
  double loss = 0.0;
  /// Gradient w.r.t. the logits feeding the softmax: (p - onehot(y)) / B.
  MatrixXd grad_logits;
  /// Rows whose target probability was clamped at kProbabilityClamp.
  int clamped = 0;
};

/// Batch mean of -log p[i, y_i]. Shared by the class and cluster losses.
CrossEntropy softmax_cross_entropy(const MatrixXd& probs, std::span<const int> targets);

inline CrossEntropy class_ce(const MatrixXd& p, std::span<const int> y) {
  return softmax_cross_entropy(p, y);
}
inline CrossEntropy cluster_ce(const MatrixXd& p_cluster, std::span<const int> y_cluster) {
  return softmax_cross_entropy(p_cluster, y_cluster);
}

struct Triplet {
  RowVector<double> positive;   // class centroid of the anchor's class
  RowVector<double> negative;   // nearest different-class row in the anchor's cluster
  Eigen::Index negative_id = -1;
};

/// Mines the purity triplet for memory row `anchor`. Returns nullopt when
/// the anchor's cluster holds no member of another class.
std::optional<Triplet> mine_triplet(const MemoryBank& memory, Eigen::Index anchor);

struct PurityLoss {
  double loss = 0.0;
  /// Gradient w.r.t. the (normalized) anchors; positives and negatives are
  /// memory snapshots and receive none.
  MatrixXd grad_anchors;
  int active = 0;
  int skipped = 0;
};

/// Sum over mined anchors of max(|f - f_p|^2 - |f - f_n|^2 + alpha, 0).
PurityLoss purity_loss(const MatrixXd& anchors, std::span<const std::optional<Triplet>> triplets,
                       double alpha);

/// total = class + cluster + lambda * purity; rejects non-finite parts.
LossBreakdown total_loss(double class_loss, double cluster_loss, double purity, double lambda);

/// Backpropagates d(f / |f|) to d(f) row by row. Zero rows get zero gradient.
MatrixXd normalize_rows_backward(const MatrixXd& f, const MatrixXd& grad_normalized);

}  // namespace scan
