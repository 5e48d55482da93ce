#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "scan/data_io.hpp"
#include "scan/loss.hpp"
#include "scan/memory.hpp"
#include "scan/model.hpp"
#include "scan/optim.hpp"

namespace scan {

struct TrainConfig {
  SgdOptions sgd;
  int epochs = 60;
  int batch_size = 32;
  LossConfig loss;
  /// false trains the class branch only (the baseline); banks are still
  /// maintained so the cluster error rate stays observable.
  bool cluster_branch = true;
  /// Reassign the batch's cluster labels right after each batch; otherwise
  /// labels only move at the epoch-end reassignment.
  bool reassign_per_batch = true;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  int kmeans_restarts = 10;
  bool augment = false;
  AugmentConfig augment_cfg;
};

void validate(const TrainConfig& cfg);

struct TrainingData {
  MatrixXd samples;  // one flattened sample per row
  std::vector<int> labels;
  int n_classes = 0;
  /// Set for image samples; enables augmentation.
  std::optional<Shape> image_shape;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  /// Component means over the epoch's steps; triplet counts are sums.
  LossBreakdown loss;
  std::optional<double> cluster_error_rate;
  int nonempty_clusters = 0;
  std::vector<int> occupancy;
};

/// Pre-training on the base split: warm-up epochs with the class loss,
/// k-means initialization of the memory banks, then epochs minimizing
/// class + cluster + lambda * purity with per-batch memory updates and
/// epoch-end centroid refresh.
///
/// Each epoch draws from its own substream of the seed, so a trainer
/// restored at epoch e continues exactly as an uninterrupted run would.
class Trainer {
 public:
  Trainer(TrainConfig cfg, TrainingData data, ScanNet<double> net, std::uint64_t seed);

  void run_epoch();
  void run(const std::function<void(const Trainer&)>& on_epoch_end = {});

  int epochs_done() const { return epochs_done_; }
  bool finished() const { return epochs_done_ >= cfg_.epochs; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<EpochRecord>& log() const { return log_; }
  /// Every optimizer step's loss breakdown, in order.
  const std::vector<LossBreakdown>& steps() const { return steps_; }
  ScanNet<double>& net() { return net_; }
  const ScanNet<double>& net() const { return net_; }
  const std::optional<MemoryBank>& memory() const { return memory_; }
  const TrainingData& data() const { return data_; }

  /// Continues from saved state; `net` must already hold the saved tensors.
  void restore(int epochs_done, std::optional<MemoryBank> memory, std::vector<EpochRecord> log);

  /// Embeddings (projected, eval mode) of every training sample.
  MatrixXd embed_all();

 private:
  void init_memory();
  LossBreakdown train_batch(const std::vector<std::size_t>& ids, bool main_phase, SeededRng& rng);

  TrainConfig cfg_;
  TrainingData data_;
  ScanNet<double> net_;
  SeededRng root_;
  int epochs_done_ = 0;
  std::optional<MemoryBank> memory_;
  std::vector<EpochRecord> log_;
  std::vector<LossBreakdown> steps_;
};

/// Runs backbone (or projected) features for a batch of samples in eval
/// mode, in chunks, preserving row order.
MatrixXd embed_backbone(ScanNet<double>& net, const MatrixXd& samples);
MatrixXd embed_projected(ScanNet<double>& net, const MatrixXd& samples);

}  // namespace scan
