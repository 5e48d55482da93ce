#include "scan/pretrain.hpp"

#include <numeric>
#include <string>

#include "scan/error.hpp"

namespace scan {

namespace {

constexpr Eigen::Index kEmbedChunk = 256;

template <typename Fn>
MatrixXd embed_chunks(const MatrixXd& samples, Eigen::Index width, Fn&& fn) {
  MatrixXd out(samples.rows(), width);
  for (Eigen::Index start = 0; start < samples.rows(); start += kEmbedChunk) {
    const Eigen::Index n = std::min(kEmbedChunk, samples.rows() - start);
    out.middleRows(start, n) = fn(MatrixXd(samples.middleRows(start, n)));
  }
  return out;
}

}  // namespace

MatrixXd embed_backbone(ScanNet<double>& net, const MatrixXd& samples) {
  SeededRng unused;
  return embed_chunks(samples, net.backbone_dim(),
                      [&](const MatrixXd& x) { return net.encode(x, Mode::Eval, unused); });
}

MatrixXd embed_projected(ScanNet<double>& net, const MatrixXd& samples) {
  SeededRng unused;
  return embed_chunks(samples, net.embed_dim(), [&](const MatrixXd& x) {
    return net.project(net.encode(x, Mode::Eval, unused), Mode::Eval, unused);
  });
}

void validate(const TrainConfig& cfg) {
  validate(cfg.sgd);
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (batchnorm)");
  if (cfg.loss.alpha < 0) throw ConfigError("train: alpha must be >= 0");
  if (cfg.loss.lambda < 0) throw ConfigError("train: lambda must be >= 0");
  if (!(cfg.loss.beta > 0 && cfg.loss.beta <= 1)) throw ConfigError("train: beta must be in (0,1]");
  if (cfg.loss.warmup_epochs < 0) throw ConfigError("train: warmup_epochs must be >= 0");
  if (cfg.kmeans_max_iters < 1) throw ConfigError("train: kmeans_max_iters must be >= 1");
  if (cfg.kmeans_restarts < 1) throw ConfigError("train: kmeans_restarts must be >= 1");
  if (cfg.augment) validate(cfg.augment_cfg);
}

Trainer::Trainer(TrainConfig cfg, TrainingData data, ScanNet<double> net, std::uint64_t seed)
    : cfg_(std::move(cfg)), data_(std::move(data)), net_(std::move(net)), root_(seed) {
  validate(cfg_);
  if (data_.samples.rows() == 0) throw DataError("pretrain: base split is empty");
  if (static_cast<Eigen::Index>(data_.labels.size()) != data_.samples.rows())
    throw DimensionError("pretrain: label count does not match sample count");
  if (data_.n_classes != net_.n_classes())
    throw ConfigError("pretrain: data has " + std::to_string(data_.n_classes) + " classes, model head has " +
                      std::to_string(net_.n_classes()));
  if (net_.n_clusters() > data_.samples.rows())
    throw ConfigError("pretrain: cluster count " + std::to_string(net_.n_clusters()) +
                      " exceeds base sample count " + std::to_string(data_.samples.rows()));
}

void Trainer::restore(int epochs_done, std::optional<MemoryBank> memory, std::vector<EpochRecord> log) {
  if (epochs_done < 0 || epochs_done > cfg_.epochs) throw ConfigError("restore: epoch out of range");
  if (memory && memory->size() != data_.samples.rows())
    throw DimensionError("restore: memory rows do not match the base split");
  epochs_done_ = epochs_done;
  memory_ = std::move(memory);
  log_ = std::move(log);
  steps_.clear();
}

MatrixXd Trainer::embed_all() { return embed_projected(net_, data_.samples); }

void Trainer::init_memory() {
  const MatrixXd normalized = normalize_rows(embed_all());
  SeededRng rng = root_.substream("kmeans");
  const KMeansConfig kcfg{static_cast<int>(net_.n_clusters()), cfg_.kmeans_max_iters, cfg_.kmeans_tol,
                          cfg_.kmeans_restarts};
  const Clustering clustering = kmeans_fit(normalized, kcfg, rng);
  memory_.emplace(normalized, data_.labels, data_.n_classes, clustering);
}

LossBreakdown Trainer::train_batch(const std::vector<std::size_t>& ids, bool main_phase, SeededRng& rng) {
  const auto batch = static_cast<Eigen::Index>(ids.size());
  MatrixXd x(batch, data_.samples.cols());
  std::vector<int> y(ids.size());
  for (Eigen::Index k = 0; k < batch; ++k) {
    const auto id = ids[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(k)] = data_.labels[id];
    if (cfg_.augment && data_.image_shape) {
      std::vector<float> raw(static_cast<std::size_t>(data_.samples.cols()));
      for (Eigen::Index j = 0; j < data_.samples.cols(); ++j)
        raw[static_cast<std::size_t>(j)] = static_cast<float>(data_.samples(static_cast<Eigen::Index>(id), j));
      const Tensor<float> img = augment(Tensor<float>(*data_.image_shape, std::move(raw)), cfg_.augment_cfg, rng);
      x.row(k) = img.as_row().cast<double>();
    } else {
      x.row(k) = data_.samples.row(static_cast<Eigen::Index>(id));
    }
  }

  const bool use_cluster = main_phase && cfg_.cluster_branch;
  const bool use_purity = use_cluster && cfg_.loss.lambda > 0;
  auto acts = net_.forward(x, Mode::Train, rng, use_cluster);
  const CrossEntropy class_part = class_ce(acts.class_prob, y);

  CrossEntropy cluster_part;
  if (use_cluster) {
    std::vector<int> pseudo(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) pseudo[k] = memory_->cluster_label(static_cast<Eigen::Index>(ids[k]));
    cluster_part = cluster_ce(acts.cluster_prob, pseudo);
  }

  PurityLoss purity;
  MatrixXd d_embedding;
  if (use_purity) {
    const MatrixXd anchors = normalize_rows(acts.embedding);
    std::vector<std::optional<Triplet>> triplets(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (acts.embedding.row(static_cast<Eigen::Index>(k)).norm() > 0)
        triplets[k] = mine_triplet(*memory_, static_cast<Eigen::Index>(ids[k]));
    }
    purity = purity_loss(anchors, triplets, cfg_.loss.alpha);
    d_embedding = cfg_.loss.lambda * normalize_rows_backward(acts.embedding, purity.grad_anchors);
  }

  LossBreakdown b = total_loss(class_part.loss, cluster_part.loss, purity.loss, cfg_.loss.lambda);
  b.active_triplets = purity.active;
  b.skipped_triplets = purity.skipped;

  net_.backward(class_part.grad_logits, use_cluster ? &cluster_part.grad_logits : nullptr,
                use_purity ? &d_embedding : nullptr);
  auto params = net_.params(use_cluster);
  sgd_step<double>(params, cfg_.sgd);

  if (memory_) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto row = acts.embedding.row(static_cast<Eigen::Index>(k));
      if (row.norm() > 0) memory_->momentum_update(static_cast<Eigen::Index>(ids[k]), row, cfg_.loss.beta);
    }
    if (cfg_.reassign_per_batch)
      for (auto id : ids) memory_->reassign_cluster_label(static_cast<Eigen::Index>(id));
  }
  return b;
}

void Trainer::run_epoch() {
  if (finished()) return;
  const int e = epochs_done_;
  const bool main_phase = e >= cfg_.loss.warmup_epochs;
  if (main_phase && !memory_) init_memory();

  SeededRng rng = root_.substream("epoch", static_cast<std::uint64_t>(e));
  std::vector<std::size_t> order(static_cast<std::size_t>(data_.samples.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  // A trailing batch of one sample cannot be batch-normalized; it joins
  // the previous batch.
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t start = 0; start < order.size(); start += bs)
    ranges.emplace_back(start, std::min(order.size(), start + bs));
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first < 2) {
    ranges[ranges.size() - 2].second = ranges.back().second;
    ranges.pop_back();
  }

  EpochRecord rec;
  rec.epoch = e + 1;
  for (const auto& [lo, hi] : ranges) {
    std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                 order.begin() + static_cast<std::ptrdiff_t>(hi));
    const LossBreakdown b = train_batch(ids, main_phase, rng);
    steps_.push_back(b);
    rec.loss.class_loss += b.class_loss;
    rec.loss.cluster_loss += b.cluster_loss;
    rec.loss.purity_loss += b.purity_loss;
    rec.loss.total += b.total;
    rec.loss.active_triplets += b.active_triplets;
    rec.loss.skipped_triplets += b.skipped_triplets;
  }
  const auto n_steps = static_cast<double>(ranges.size());
  rec.loss.class_loss /= n_steps;
  rec.loss.cluster_loss /= n_steps;
  rec.loss.purity_loss /= n_steps;
  rec.loss.total /= n_steps;

  if (memory_) {
    memory_->refresh_centroids();
    memory_->reassign_all();
    rec.cluster_error_rate = cluster_error_rate(memory_->cluster_labels(), memory_->class_labels());
    rec.occupancy = memory_->occupancy();
    for (int n : rec.occupancy) rec.nonempty_clusters += n > 0 ? 1 : 0;
  }
  log_.push_back(std::move(rec));
  ++epochs_done_;
}

void Trainer::run(const std::function<void(const Trainer&)>& on_epoch_end) {
  while (!finished()) {
    run_epoch();
    if (on_epoch_end) on_epoch_end(*this);
  }
}

}  // namespace scan
