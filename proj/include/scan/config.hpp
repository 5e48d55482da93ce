#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scan/data_io.hpp"
#include "scan/fewshot.hpp"
#include "scan/model.hpp"
#include "scan/pretrain.hpp"

namespace scan {

/// Every tunable of a run. Serialized as flat `key = value` lines with `#`
/// comments; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;

  // synthetic data
  int n_base_classes = 4;
  int n_novel_classes = 4;
  std::vector<int> base_subclusters{1, 2, 3, 2};
  std::vector<int> novel_subclusters{1, 2, 3, 2};
  int samples_per_class = 200;
  std::string sample_kind = "vector";  // vector | image
  int vector_dim = 16;
  int image_size = 16;
  double inter_class_separation = 10.0;
  double intra_subcluster_std = 1.0;
  double subcluster_spread = 6.0;

  // model
  std::string encoder = "mlp";  // mlp | conv4lite
  std::vector<int> encoder_hidden{64};
  int backbone_dim = 32;
  int embed_dim = 32;
  int projection_hidden = 0;
  double dropout = 0.5;

  // pre-training
  double lr = 0.0075;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int epochs = 60;
  int batch_size = 32;
  double alpha = 0.3;
  double beta = 0.5;
  double lambda = 1.0;
  int cluster_count = 0;  // 0: ceil(2.5 * base classes)
  int warmup_epochs = 5;
  bool cluster_branch = true;
  bool reassign_per_batch = true;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  int kmeans_restarts = 10;
  bool augment = true;  // image samples only
  double hflip_prob = 0.5;
  int crop_pad = 2;
  double rotation_degrees = 30.0;
  double brightness_lo = 0.9;
  double brightness_hi = 1.1;
  int checkpoint_every = 10;

  // evaluation
  int n_way = 2;
  int k_shot = 1;
  int query_per_class = 5;
  int episodes = 600;
  int classifier_steps = 100;
  double classifier_lr = 0.01;
  double classifier_l2 = 1e-3;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Applies one `key = value` assignment.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

SynthConfig synth_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
EvalConfig eval_config(const RunConfig& cfg);
ProjectionConfig projection_config(const RunConfig& cfg);
/// Encoder for samples of the given shape ({d} vectors or {c,h,w} images).
EncoderConfig encoder_config(const RunConfig& cfg, const Shape& sample_shape);
int resolved_cluster_count(const RunConfig& cfg, int n_classes);

}  // namespace scan
