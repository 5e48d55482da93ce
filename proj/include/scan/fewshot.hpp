#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scan/tensor.hpp"

namespace scan {

struct ClassifierBudget {
  int steps = 100;
  double lr = 0.01;
  double l2 = 1e-3;
};

struct EvalConfig {
  int n_way = 2;
  int k_shot = 1;
  int q_per_class = 5;
  int episodes = 600;
  std::uint64_t seed = 0;
  ClassifierBudget budget;
};

void validate(const EvalConfig& cfg);

/// One N-way K-shot task. Sample ids index rows of the split's feature
/// matrix; labels are episode-local in [0, N).
struct Episode {
  std::vector<std::size_t> support_ids;
  std::vector<int> support_labels;
  std::vector<std::size_t> query_ids;
  std::vector<int> query_labels;
  std::vector<int> class_map;  // episode label -> split class id
};

/// Uniform class choice without replacement among classes holding at least
/// K + q samples, then uniform sample choice without replacement within each
/// class. Fully determined by (cfg.seed, index).
Episode sample_episode(std::span<const int> labels, const EvalConfig& cfg, std::uint64_t index);

/// Multinomial logistic regression (weights dim x N plus bias).
struct LinearClassifier {
  MatrixXd weight;
  RowVector<double> bias;
  /// Set when every support feature was identical; the classifier is then
  /// the uniform one.
  bool degenerate = false;
  double final_loss = 0.0;

  MatrixXd predict_proba(const MatrixXd& features) const;
  /// Arg-max class per row; ties go to the lowest index.
  std::vector<int> predict(const MatrixXd& features) const;
};

/// Full-batch gradient descent from zero initialization on the mean
/// cross-entropy plus (l2 / 2) * |W|^2.
LinearClassifier fit_episodic_classifier(const MatrixXd& features, std::span<const int> labels,
                                         int n_classes, const ClassifierBudget& budget);

struct EpisodeResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double sensitivity = 0.0;  // class-averaged recall
  double specificity = 0.0;  // class-averaged true-negative rate
  Eigen::MatrixXi confusion;  // rows: truth, cols: prediction
};

/// Metrics from predictions. Classes with no positives and no predictions
/// score F1 = 0.
EpisodeResult score_predictions(std::span<const int> truth, std::span<const int> predicted, int n_classes);

/// Fits the classifier on the L2-normalized support features and scores the
/// query set. `features` holds one frozen-encoder row per split sample.
EpisodeResult evaluate_episode(const Episode& episode, const MatrixXd& features, const EvalConfig& cfg);

struct Summary {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * sample stddev / sqrt(E)
};

Summary aggregate(std::span<const double> values);

struct EvalReport {
  std::vector<EpisodeResult> episodes;
  Summary accuracy;
  Summary macro_f1;
};

EvalReport run_episodes(const MatrixXd& features, std::span<const int> labels, const EvalConfig& cfg);

struct DiscriminabilityReport {
  double d_inter = 0.0;
  double d_intra = 0.0;
  std::optional<double> phi;  // empty when d_intra == 0
};

/// Mean over ordered class pairs of |mu_m - mu_n|^2, mu being the mean of
/// a class's L2-normalized features.
double d_inter(const MatrixXd& features, std::span<const int> labels);

/// Class-averaged mean squared distance of normalized features to mu.
double d_intra(const MatrixXd& features, std::span<const int> labels);

/// d_inter / d_intra, or nullopt when d_intra is zero.
std::optional<double> phi(double d_inter_value, double d_intra_value);

DiscriminabilityReport discriminability(const MatrixXd& features, std::span<const int> labels);

}  // namespace scan
