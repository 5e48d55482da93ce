#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scan/error.hpp"
#include "scan/layers.hpp"

namespace scan {

enum class EncoderVariant { Mlp, Conv4Lite };

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::Mlp;
  /// For mlp only input.size() matters; conv4lite reads channels x height x width.
  ImageShape input{1, 1, 16};
  /// mlp: hidden widths (dense-bn-relu each); conv4lite: four channel counts.
  std::vector<Eigen::Index> hidden{64};
  /// mlp output width. conv4lite derives it from the last block.
  Eigen::Index backbone_dim = 32;
};

struct ProjectionConfig {
  Eigen::Index out_dim = 256;
  /// Width of the inner fc layer; 0 means out_dim.
  Eigen::Index hidden_dim = 0;
  double dropout_rate = 0.5;
};

inline Eigen::Index encoder_output_dim(const EncoderConfig& cfg) {
  if (cfg.variant == EncoderVariant::Mlp) return cfg.backbone_dim;
  return cfg.hidden.back() * (cfg.input.height / 16) * (cfg.input.width / 16);
}

inline void validate(const EncoderConfig& cfg) {
  if (cfg.input.size() <= 0) throw ConfigError("encoder: input shape must be non-empty");
  if (cfg.variant == EncoderVariant::Mlp) {
    if (cfg.backbone_dim <= 0) throw ConfigError("encoder: backbone_dim must be > 0");
    for (auto h : cfg.hidden)
      if (h <= 0) throw ConfigError("encoder: hidden widths must be > 0");
  } else {
    if (cfg.input.height < 16 || cfg.input.width < 16)
      throw ConfigError("encoder: conv4lite needs height and width >= 16");
    if (cfg.hidden.size() != 4) throw ConfigError("encoder: conv4lite needs exactly four channel counts");
    for (auto h : cfg.hidden)
      if (h <= 0) throw ConfigError("encoder: channel counts must be > 0");
  }
}

/// f_theta: either an MLP (dense-bn-relu per hidden width, then dense-relu)
/// or conv4lite (four conv3x3-bn-relu-maxpool blocks, then flatten).
template <typename Scalar>
Sequential<Scalar> make_encoder(const EncoderConfig& cfg, SeededRng& rng) {
  validate(cfg);
  Sequential<Scalar> net;
  if (cfg.variant == EncoderVariant::Mlp) {
    Eigen::Index width = cfg.input.size();
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
      const std::string name = "encoder.fc" + std::to_string(i);
      net.template add<Dense<Scalar>>(width, cfg.hidden[i], rng, name);
      net.template add<BatchNorm<Scalar>>(cfg.hidden[i], 1, "encoder.bn" + std::to_string(i));
      net.template add<Relu<Scalar>>();
      width = cfg.hidden[i];
    }
    net.template add<Dense<Scalar>>(width, cfg.backbone_dim, rng, "encoder.out");
    net.template add<Relu<Scalar>>();
    return net;
  }
  ImageShape shape = cfg.input;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string tag = std::to_string(i);
    auto& conv = net.template add<Conv2d<Scalar>>(shape, cfg.hidden[i], 3, 1, 1, rng, "encoder.conv" + tag);
    shape = conv.output_shape();
    net.template add<BatchNorm<Scalar>>(shape.channels, shape.height * shape.width, "encoder.bn" + tag);
    net.template add<Relu<Scalar>>();
    auto& pool = net.template add<MaxPool2d<Scalar>>(shape);
    shape = pool.output_shape();
  }
  net.template add<Flatten<Scalar>>(shape.size());
  return net;
}

/// z_theta: fc-bn-relu-dropout-fc-relu.
template <typename Scalar>
Sequential<Scalar> make_projection(Eigen::Index in_dim, const ProjectionConfig& cfg, SeededRng& rng) {
  if (cfg.out_dim <= 0) throw ConfigError("projection: out_dim must be > 0");
  const Eigen::Index hidden = cfg.hidden_dim > 0 ? cfg.hidden_dim : cfg.out_dim;
  Sequential<Scalar> net;
  net.template add<Dense<Scalar>>(in_dim, hidden, rng, "projection.fc0");
  net.template add<BatchNorm<Scalar>>(hidden, 1, "projection.bn0");
  net.template add<Relu<Scalar>>();
  net.template add<Dropout<Scalar>>(cfg.dropout_rate);
  net.template add<Dense<Scalar>>(hidden, cfg.out_dim, rng, "projection.fc1");
  net.template add<Relu<Scalar>>();
  return net;
}

/// The dual-branch network: encoder, projection head, class head (C_b) and
/// cluster head (C_k). Caches from the latest forward call are kept so that
/// backward() can run once per forward.
template <typename Scalar>
class ScanNet {
 public:
  struct Activations {
    Matrix<Scalar> backbone;       // f_theta(x)
    Matrix<Scalar> embedding;      // f = z_theta(f_theta(x))
    Matrix<Scalar> class_prob;     // p
    Matrix<Scalar> cluster_prob;   // p' (empty if the cluster head was skipped)
  };

  ScanNet(const EncoderConfig& enc, const ProjectionConfig& proj, Eigen::Index n_classes,
          Eigen::Index n_clusters, SeededRng& rng)
      : encoder_cfg_(enc),
        projection_cfg_(proj),
        encoder_(make_encoder<Scalar>(enc, rng)),
        projection_(make_projection<Scalar>(encoder_output_dim(enc), proj, rng)),
        class_head_(proj.out_dim, n_classes, rng, "head.class"),
        cluster_head_(proj.out_dim, n_clusters, rng, "head.cluster") {
    if (n_classes <= 0) throw ConfigError("model: need at least one class");
    if (n_clusters <= n_classes)
      throw ConfigError("model: cluster count (" + std::to_string(n_clusters) +
                        ") must exceed class count (" + std::to_string(n_classes) + ")");
  }

  const EncoderConfig& encoder_config() const { return encoder_cfg_; }
  const ProjectionConfig& projection_config() const { return projection_cfg_; }
  Eigen::Index input_dim() const { return encoder_cfg_.input.size(); }
  Eigen::Index backbone_dim() const { return encoder_output_dim(encoder_cfg_); }
  Eigen::Index embed_dim() const { return projection_cfg_.out_dim; }
  Eigen::Index n_classes() const { return class_head_.out_features(); }
  Eigen::Index n_clusters() const { return cluster_head_.out_features(); }

  Sequential<Scalar>& encoder() { return encoder_; }
  Sequential<Scalar>& projection() { return projection_; }
  Dense<Scalar>& class_head() { return class_head_; }
  Dense<Scalar>& cluster_head() { return cluster_head_; }

  Matrix<Scalar> encode(const Matrix<Scalar>& x, Mode mode, SeededRng& rng) {
    if (x.cols() != input_dim()) {
      throw DimensionError("encode: input " + shape_string(x) + " does not match input width " +
                           std::to_string(input_dim()));
    }
    return encoder_.forward(x, mode, rng);
  }

  Matrix<Scalar> project(const Matrix<Scalar>& backbone, Mode mode, SeededRng& rng) {
    if (backbone.cols() != backbone_dim()) {
      throw DimensionError("project: feature " + shape_string(backbone) + " does not match backbone_dim " +
                           std::to_string(backbone_dim()));
    }
    return projection_.forward(backbone, mode, rng);
  }

  Matrix<Scalar> predict_class(const Matrix<Scalar>& f) {
    SeededRng unused;
    auto out = class_head_.forward(f, Mode::Eval, unused);
    class_cache_ = std::move(out.cache);
    return softmax_rows(out.output);
  }

  Matrix<Scalar> predict_cluster(const Matrix<Scalar>& f) {
    SeededRng unused;
    auto out = cluster_head_.forward(f, Mode::Eval, unused);
    cluster_cache_ = std::move(out.cache);
    return softmax_rows(out.output);
  }

  Activations forward(const Matrix<Scalar>& x, Mode mode, SeededRng& rng, bool with_cluster = true) {
    Activations a;
    a.backbone = encode(x, mode, rng);
    a.embedding = project(a.backbone, mode, rng);
    a.class_prob = predict_class(a.embedding);
    if (with_cluster) {
      a.cluster_prob = predict_cluster(a.embedding);
    } else {
      cluster_cache_.reset();
    }
    return a;
  }

  /// Backpropagates gradients w.r.t. the class logits, optionally the
  /// cluster logits, and optionally a direct gradient on the embedding.
  void backward(const Matrix<Scalar>& d_class_logits, const Matrix<Scalar>* d_cluster_logits = nullptr,
                const Matrix<Scalar>* d_embedding = nullptr) {
    if (!class_cache_) throw Error("model: backward without forward");
    Matrix<Scalar> g = class_head_.backward(*class_cache_, d_class_logits);
    if (d_cluster_logits != nullptr) {
      if (!cluster_cache_) throw Error("model: cluster gradient without a cluster forward");
      g += cluster_head_.backward(*cluster_cache_, *d_cluster_logits);
    }
    if (d_embedding != nullptr) g += *d_embedding;
    g = projection_.backward(g);
    encoder_.backward(g);
  }

  std::vector<ParamState<Scalar>*> encoder_params() { return encoder_.params(); }
  std::vector<ParamState<Scalar>*> projection_params() { return projection_.params(); }

  std::vector<ParamState<Scalar>*> params(bool include_cluster_head = true) {
    auto out = encoder_.params();
    for (auto* p : projection_.params()) out.push_back(p);
    for (auto* p : class_head_.params()) out.push_back(p);
    if (include_cluster_head)
      for (auto* p : cluster_head_.params()) out.push_back(p);
    return out;
  }

  /// Every persistent tensor (trainable values, momentum buffers and
  /// running statistics) under a stable name.
  std::vector<std::pair<std::string, Matrix<Scalar>*>> state() {
    std::vector<std::pair<std::string, Matrix<Scalar>*>> out;
    for (auto* p : params()) {
      out.emplace_back(p->name, &p->value);
      out.emplace_back(p->name + ".momentum", &p->momentum_buf);
    }
    for (auto& b : encoder_.buffers()) out.push_back(b);
    for (auto& b : projection_.buffers()) out.push_back(b);
    return out;
  }

 private:
  EncoderConfig encoder_cfg_;
  ProjectionConfig projection_cfg_;
  Sequential<Scalar> encoder_;
  Sequential<Scalar> projection_;
  Dense<Scalar> class_head_;
  Dense<Scalar> cluster_head_;
  std::optional<LayerCache<Scalar>> class_cache_;
  std::optional<LayerCache<Scalar>> cluster_cache_;
};

}  // namespace scan
