#include "scan/loss.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "scan/error.hpp"

namespace scan {

int default_cluster_count(int n_classes) {
  return static_cast<int>(std::ceil(2.5 * static_cast<double>(n_classes)));
}

CrossEntropy softmax_cross_entropy(const MatrixXd& probs, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != probs.rows())
    throw DimensionError("cross entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(probs.rows()) + " rows");
  if (probs.rows() == 0) throw DimensionError("cross entropy: empty batch");
  CrossEntropy out;
  out.grad_logits = probs;
  const auto batch = static_cast<double>(probs.rows());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols())
      throw DimensionError("cross entropy: target " + std::to_string(y) + " outside [0, " +
                           std::to_string(probs.cols()) + ")");
    double p = probs(i, y);
    if (p < kProbabilityClamp) {
      p = kProbabilityClamp;
      ++out.clamped;
    }
    sum -= std::log(p);
    out.grad_logits(i, y) -= 1.0;
  }
  out.loss = sum / batch;
  out.grad_logits /= batch;
  return out;
}

std::optional<Triplet> mine_triplet(const MemoryBank& memory, Eigen::Index anchor) {
  const int cls = memory.class_label(anchor);
  const int cluster = memory.cluster_label(anchor);
  const auto f = memory.row(anchor);
  Eigen::Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  const auto clusters = memory.cluster_labels();
  const auto classes = memory.class_labels();
  for (Eigen::Index j = 0; j < memory.size(); ++j) {
    const auto js = static_cast<std::size_t>(j);
    if (clusters[js] != cluster || classes[js] == cls) continue;
    const double d = (memory.row(j) - f).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (best < 0) return std::nullopt;
  return Triplet{memory.class_centroids().row(cls), memory.row(best), best};
}

PurityLoss purity_loss(const MatrixXd& anchors, std::span<const std::optional<Triplet>> triplets,
                       double alpha) {
  if (static_cast<Eigen::Index>(triplets.size()) != anchors.rows())
    throw DimensionError("purity_loss: " + std::to_string(triplets.size()) + " triplets for " +
                         std::to_string(anchors.rows()) + " anchors");
  PurityLoss out;
  out.grad_anchors = MatrixXd::Zero(anchors.rows(), anchors.cols());
  for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
    const auto& t = triplets[static_cast<std::size_t>(i)];
    if (!t) {
      ++out.skipped;
      continue;
    }
    ++out.active;
    const auto f = anchors.row(i);
    const double hinge = (f - t->positive).squaredNorm() - (f - t->negative).squaredNorm() + alpha;
    if (hinge > 0.0) {
      out.loss += hinge;
      out.grad_anchors.row(i) = 2.0 * (t->negative - t->positive);
    }
  }
  return out;
}

LossBreakdown total_loss(double class_loss, double cluster_loss, double purity, double lambda) {
  const std::pair<const char*, double> parts[] = {
      {"class", class_loss}, {"cluster", cluster_loss}, {"purity", purity}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + name + " loss");
  LossBreakdown b;
  b.class_loss = class_loss;
  b.cluster_loss = cluster_loss;
  b.purity_loss = purity;
  b.total = class_loss + cluster_loss + lambda * purity;
  return b;
}

MatrixXd normalize_rows_backward(const MatrixXd& f, const MatrixXd& grad_normalized) {
  MatrixXd out = MatrixXd::Zero(f.rows(), f.cols());
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const double n = f.row(i).norm();
    if (n <= 0.0) continue;
    const RowVector<double> u = f.row(i) / n;
    const auto g = grad_normalized.row(i);
    out.row(i) = (g - u * g.dot(u)) / n;
  }
  return out;
}

}  // namespace scan
