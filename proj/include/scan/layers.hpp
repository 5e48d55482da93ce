#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scan/error.hpp"
#include "scan/optim.hpp"
#include "scan/rng.hpp"
#include "scan/tensor.hpp"

namespace scan {

enum class Mode { Train, Eval };

enum class LayerKind { Dense, Relu, Softmax, BatchNorm, Dropout, Conv2d, MaxPool2d, Flatten };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

/// Everything a layer needs to run its backward pass for one forward call.
template <typename Scalar>
struct LayerCache {
  LayerKind kind{};
  Mode mode = Mode::Eval;
  std::vector<Matrix<Scalar>> saved;
  std::vector<Eigen::Index> indices;
};

template <typename Scalar>
struct LayerOutput {
  Matrix<Scalar> output;
  LayerCache<Scalar> cache;
};

/// Images travel as rows of length channels*height*width, channel-major.
struct ImageShape {
  Eigen::Index channels = 1;
  Eigen::Index height = 1;
  Eigen::Index width = 1;

  Eigen::Index size() const { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;

  /// Forward pass over a batch (one sample per row).
  virtual LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng& rng) = 0;

  /// Returns d(input) and accumulates parameter gradients.
  virtual Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) = 0;

  virtual std::vector<ParamState<Scalar>*> params() { return {}; }

  /// Non-trainable state that must persist, e.g. batchnorm running stats.
  virtual std::vector<std::pair<std::string, Matrix<Scalar>*>> buffers() { return {}; }

  virtual std::unique_ptr<Layer> clone() const = 0;

 protected:
  void check_cache(const LayerCache<Scalar>& cache) const {
    if (cache.kind != kind()) {
      throw Error("backward: cache from a " + std::string(to_string(cache.kind)) +
                  " forward passed to a " + std::string(to_string(kind())) + " layer");
    }
  }

  void check_width(const Matrix<Scalar>& x, Eigen::Index expected) const {
    if (x.cols() != expected) {
      throw DimensionError(std::string(to_string(kind())) + ": input " + shape_string(x) +
                           " has " + std::to_string(x.cols()) + " columns, expected " +
                           std::to_string(expected));
    }
  }
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
Matrix<Scalar> glorot_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                              Eigen::Index fan_out, SeededRng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<Scalar> w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-a, a));
  return w;
}

/// y = x W + b
template <typename Scalar>
class Dense final : public Layer<Scalar> {
 public:
  Dense(Eigen::Index in, Eigen::Index out, SeededRng& rng, std::string name = "dense")
      : weight_(name + ".weight", glorot_uniform<Scalar>(in, out, in, out, rng)),
        bias_(name + ".bias", Matrix<Scalar>::Zero(1, out)) {}

  LayerKind kind() const override { return LayerKind::Dense; }
  Eigen::Index in_features() const { return weight_.value.rows(); }
  Eigen::Index out_features() const { return weight_.value.cols(); }

  ParamState<Scalar>& weight() { return weight_; }
  ParamState<Scalar>& bias() { return bias_; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng&) override {
    this->check_width(x, in_features());
    Matrix<Scalar> y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return {std::move(y), {LayerKind::Dense, mode, {x}, {}}};
  }

  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    const Matrix<Scalar>& x = cache.saved.at(0);
    auto [dx, dw] = matmul_backward<Scalar>(x, weight_.value, dy);
    weight_.accumulate(dw);
    bias_.accumulate(dy.colwise().sum());
    return dx;
  }

  std::vector<ParamState<Scalar>*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Dense>(*this); }

 private:
  ParamState<Scalar> weight_;
  ParamState<Scalar> bias_;
};

template <typename Scalar>
class Relu final : public Layer<Scalar> {
 public:
  LayerKind kind() const override { return LayerKind::Relu; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng&) override {
    Matrix<Scalar> y = x.cwiseMax(Scalar(0));
    return {std::move(y), {LayerKind::Relu, mode, {x}, {}}};
  }

  // Subgradient 0 at x <= 0.
  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    const Matrix<Scalar>& x = cache.saved.at(0);
    return (x.array() > Scalar(0)).select(dy.array(), Scalar(0)).matrix();
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Relu>(*this); }
};

/// Row-wise numerically stable softmax.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <typename Scalar>
class Softmax final : public Layer<Scalar> {
 public:
  LayerKind kind() const override { return LayerKind::Softmax; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng&) override {
    Matrix<Scalar> y = softmax_rows(x);
    return {y, {LayerKind::Softmax, mode, {y}, {}}};
  }

  // dx = y * (dy - <dy, y>) per row
  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    const Matrix<Scalar>& y = cache.saved.at(0);
    const Vector<Scalar> dots = dy.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> dx = dy;
    dx.colwise() -= dots;
    return dx.cwiseProduct(y);
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Softmax>(*this); }
};

/// Batch normalization over `channels` groups of `spatial` columns each
/// (spatial = 1 for dense features). Running statistics follow
/// running <- momentum * running + (1 - momentum) * batch.
template <typename Scalar>
class BatchNorm final : public Layer<Scalar> {
 public:
  static constexpr double kMomentum = 0.9;
  static constexpr double kEps = 1e-5;

  BatchNorm(Eigen::Index channels, Eigen::Index spatial = 1, std::string name = "bn")
      : spatial_(spatial),
        gamma_(name + ".gamma", Matrix<Scalar>::Ones(1, channels)),
        beta_(name + ".beta", Matrix<Scalar>::Zero(1, channels)),
        running_mean_(Matrix<Scalar>::Zero(1, channels)),
        running_var_(Matrix<Scalar>::Ones(1, channels)) {}

  LayerKind kind() const override { return LayerKind::BatchNorm; }
  Eigen::Index channels() const { return gamma_.value.cols(); }

  const Matrix<Scalar>& running_mean() const { return running_mean_; }
  const Matrix<Scalar>& running_var() const { return running_var_; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng&) override {
    this->check_width(x, channels() * spatial_);
    const Eigen::Index n = x.rows() * spatial_;
    Matrix<Scalar> mean(1, channels());
    Matrix<Scalar> inv_std(1, channels());
    if (mode == Mode::Train) {
      if (n < 2) throw DimensionError("batchnorm: training needs more than one value per channel");
      for (Eigen::Index c = 0; c < channels(); ++c) {
        const auto block = x.middleCols(c * spatial_, spatial_);
        const Scalar mu = block.sum() / static_cast<Scalar>(n);
        const Scalar var = (block.array() - mu).square().sum() / static_cast<Scalar>(n);
        mean(0, c) = mu;
        inv_std(0, c) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kEps));
        const auto m = static_cast<Scalar>(kMomentum);
        const Scalar unbiased = var * static_cast<Scalar>(n) / static_cast<Scalar>(n - 1);
        running_mean_(0, c) = m * running_mean_(0, c) + (Scalar(1) - m) * mu;
        running_var_(0, c) = m * running_var_(0, c) + (Scalar(1) - m) * unbiased;
      }
    } else {
      mean = running_mean_;
      for (Eigen::Index c = 0; c < channels(); ++c)
        inv_std(0, c) = Scalar(1) / std::sqrt(running_var_(0, c) + static_cast<Scalar>(kEps));
    }
    Matrix<Scalar> x_hat(x.rows(), x.cols());
    Matrix<Scalar> y(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < channels(); ++c) {
      auto cols = Eigen::seqN(c * spatial_, spatial_);
      x_hat(Eigen::all, cols) = (x(Eigen::all, cols).array() - mean(0, c)) * inv_std(0, c);
      y(Eigen::all, cols) = x_hat(Eigen::all, cols).array() * gamma_.value(0, c) + beta_.value(0, c);
    }
    return {std::move(y), {LayerKind::BatchNorm, mode, {std::move(x_hat), std::move(inv_std)}, {}}};
  }

  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    const Matrix<Scalar>& x_hat = cache.saved.at(0);
    const Matrix<Scalar>& inv_std = cache.saved.at(1);
    const auto n = static_cast<Scalar>(dy.rows() * spatial_);
    Matrix<Scalar> dgamma(1, channels());
    Matrix<Scalar> dbeta(1, channels());
    Matrix<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index c = 0; c < channels(); ++c) {
      auto cols = Eigen::seqN(c * spatial_, spatial_);
      const auto dyc = dy(Eigen::all, cols).array();
      const auto xh = x_hat(Eigen::all, cols).array();
      dgamma(0, c) = (dyc * xh).sum();
      dbeta(0, c) = dyc.sum();
      const Scalar g = gamma_.value(0, c);
      if (cache.mode == Mode::Train) {
        dx(Eigen::all, cols) =
            (g * inv_std(0, c) / n) * (n * dyc - dbeta(0, c) - xh * dgamma(0, c));
      } else {
        dx(Eigen::all, cols) = dyc * (g * inv_std(0, c));
      }
    }
    gamma_.accumulate(dgamma);
    beta_.accumulate(dbeta);
    return dx;
  }

  std::vector<ParamState<Scalar>*> params() override { return {&gamma_, &beta_}; }

  std::vector<std::pair<std::string, Matrix<Scalar>*>> buffers() override {
    return {{gamma_.name.substr(0, gamma_.name.rfind('.')) + ".running_mean", &running_mean_},
            {gamma_.name.substr(0, gamma_.name.rfind('.')) + ".running_var", &running_var_}};
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<BatchNorm>(*this); }

 private:
  Eigen::Index spatial_;
  ParamState<Scalar> gamma_;
  ParamState<Scalar> beta_;
  Matrix<Scalar> running_mean_;
  Matrix<Scalar> running_var_;
};

/// Inverted dropout: kept units are scaled by 1/(1-rate) at train time,
/// so eval mode is the identity.
template <typename Scalar>
class Dropout final : public Layer<Scalar> {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0))
      throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }

  LayerKind kind() const override { return LayerKind::Dropout; }
  double rate() const { return rate_; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng& rng) override {
    if (mode == Mode::Eval || rate_ == 0.0) {
      return {x, {LayerKind::Dropout, mode, {Matrix<Scalar>::Ones(x.rows(), x.cols())}, {}}};
    }
    const auto keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate_));
    Matrix<Scalar> mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i)
      mask.data()[i] = rng.bernoulli(rate_) ? Scalar(0) : keep_scale;
    Matrix<Scalar> y = x.cwiseProduct(mask);
    return {std::move(y), {LayerKind::Dropout, mode, {std::move(mask)}, {}}};
  }

  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    return dy.cwiseProduct(cache.saved.at(0));
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  double rate_;
};

/// Square-kernel 2-D convolution implemented with im2col.
template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(ImageShape in, Eigen::Index out_channels, Eigen::Index kernel, Eigen::Index stride,
         Eigen::Index pad, SeededRng& rng, std::string name = "conv")
      : in_(in), out_channels_(out_channels), kernel_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight",
                glorot_uniform<Scalar>(in.channels * kernel * kernel, out_channels,
                                       in.channels * kernel * kernel,
                                       out_channels * kernel * kernel, rng)),
        bias_(name + ".bias", Matrix<Scalar>::Zero(1, out_channels)) {
    if (kernel <= 0 || stride <= 0 || pad < 0)
      throw ConfigError("conv2d: kernel and stride must be positive, pad non-negative");
    if (in.height + 2 * pad < kernel || in.width + 2 * pad < kernel)
      throw DimensionError("conv2d: kernel larger than padded input");
  }

  LayerKind kind() const override { return LayerKind::Conv2d; }

  ImageShape input_shape() const { return in_; }
  ImageShape output_shape() const {
    return {out_channels_, (in_.height + 2 * pad_ - kernel_) / stride_ + 1,
            (in_.width + 2 * pad_ - kernel_) / stride_ + 1};
  }

  ParamState<Scalar>& weight() { return weight_; }
  ParamState<Scalar>& bias() { return bias_; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng&) override {
    this->check_width(x, in_.size());
    const ImageShape out = output_shape();
    const Eigen::Index positions = out.height * out.width;
    Matrix<Scalar> y(x.rows(), out.size());
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      const Matrix<Scalar> cols = im2col(x.row(b));
      Matrix<Scalar> res = cols * weight_.value;  // positions x out_channels
      res.rowwise() += bias_.value.row(0);
      for (Eigen::Index o = 0; o < out_channels_; ++o)
        for (Eigen::Index p = 0; p < positions; ++p) y(b, o * positions + p) = res(p, o);
    }
    return {std::move(y), {LayerKind::Conv2d, mode, {x}, {}}};
  }

  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    const Matrix<Scalar>& x = cache.saved.at(0);
    const ImageShape out = output_shape();
    const Eigen::Index positions = out.height * out.width;
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(x.rows(), x.cols());
    Matrix<Scalar> dw = Matrix<Scalar>::Zero(weight_.value.rows(), weight_.value.cols());
    Matrix<Scalar> db = Matrix<Scalar>::Zero(1, out_channels_);
    Matrix<Scalar> dres(positions, out_channels_);
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      for (Eigen::Index o = 0; o < out_channels_; ++o)
        for (Eigen::Index p = 0; p < positions; ++p) dres(p, o) = dy(b, o * positions + p);
      const Matrix<Scalar> cols = im2col(x.row(b));
      dw.noalias() += cols.transpose() * dres;
      db += dres.colwise().sum();
      const Matrix<Scalar> dcols = dres * weight_.value.transpose();
      col2im_add(dcols, dx.row(b));
    }
    weight_.accumulate(dw);
    bias_.accumulate(db);
    return dx;
  }

  std::vector<ParamState<Scalar>*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  // Rows are output positions, columns are (channel, ky, kx).
  template <typename Row>
  Matrix<Scalar> im2col(const Row& img) const {
    const ImageShape out = output_shape();
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(out.height * out.width, in_.channels * kernel_ * kernel_);
    for (Eigen::Index oy = 0; oy < out.height; ++oy) {
      for (Eigen::Index ox = 0; ox < out.width; ++ox) {
        const Eigen::Index p = oy * out.width + ox;
        for (Eigen::Index c = 0; c < in_.channels; ++c) {
          for (Eigen::Index ky = 0; ky < kernel_; ++ky) {
            const Eigen::Index iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in_.height) continue;
            for (Eigen::Index kx = 0; kx < kernel_; ++kx) {
              const Eigen::Index ix = ox * stride_ + kx - pad_;
              if (ix < 0 || ix >= in_.width) continue;
              cols(p, (c * kernel_ + ky) * kernel_ + kx) = img((c * in_.height + iy) * in_.width + ix);
            }
          }
        }
      }
    }
    return cols;
  }

  template <typename Row>
  void col2im_add(const Matrix<Scalar>& dcols, Row&& dimg) const {
    const ImageShape out = output_shape();
    for (Eigen::Index oy = 0; oy < out.height; ++oy) {
      for (Eigen::Index ox = 0; ox < out.width; ++ox) {
        const Eigen::Index p = oy * out.width + ox;
        for (Eigen::Index c = 0; c < in_.channels; ++c) {
          for (Eigen::Index ky = 0; ky < kernel_; ++ky) {
            const Eigen::Index iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in_.height) continue;
            for (Eigen::Index kx = 0; kx < kernel_; ++kx) {
              const Eigen::Index ix = ox * stride_ + kx - pad_;
              if (ix < 0 || ix >= in_.width) continue;
              dimg((c * in_.height + iy) * in_.width + ix) += dcols(p, (c * kernel_ + ky) * kernel_ + kx);
            }
          }
        }
      }
    }
  }

  ImageShape in_;
  Eigen::Index out_channels_;
  Eigen::Index kernel_;
  Eigen::Index stride_;
  Eigen::Index pad_;
  ParamState<Scalar> weight_;
  ParamState<Scalar> bias_;
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Ties go to the first element in scan order.
template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
 public:
  explicit MaxPool2d(ImageShape in) : in_(in) {
    if (in.height < 2 || in.width < 2) throw DimensionError("maxpool2d: input smaller than 2x2");
  }

  LayerKind kind() const override { return LayerKind::MaxPool2d; }
  ImageShape output_shape() const { return {in_.channels, in_.height / 2, in_.width / 2}; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng&) override {
    this->check_width(x, in_.size());
    const ImageShape out = output_shape();
    Matrix<Scalar> y(x.rows(), out.size());
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(x.rows() * out.size()));
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      for (Eigen::Index c = 0; c < out.channels; ++c) {
        for (Eigen::Index oy = 0; oy < out.height; ++oy) {
          for (Eigen::Index ox = 0; ox < out.width; ++ox) {
            Eigen::Index best = -1;
            Scalar best_v = -std::numeric_limits<Scalar>::infinity();
            for (Eigen::Index dy = 0; dy < 2; ++dy) {
              for (Eigen::Index dx = 0; dx < 2; ++dx) {
                const Eigen::Index idx = (c * in_.height + 2 * oy + dy) * in_.width + 2 * ox + dx;
                if (best < 0 || x(b, idx) > best_v) {
                  best = idx;
                  best_v = x(b, idx);
                }
              }
            }
            const Eigen::Index o = (c * out.height + oy) * out.width + ox;
            y(b, o) = best_v;
            argmax[static_cast<std::size_t>(b * out.size() + o)] = best;
          }
        }
      }
    }
    LayerCache<Scalar> cache{LayerKind::MaxPool2d, mode, {}, std::move(argmax)};
    return {std::move(y), std::move(cache)};
  }

  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    const Eigen::Index out_size = output_shape().size();
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(dy.rows(), in_.size());
    for (Eigen::Index b = 0; b < dy.rows(); ++b)
      for (Eigen::Index o = 0; o < out_size; ++o)
        dx(b, cache.indices[static_cast<std::size_t>(b * out_size + o)]) += dy(b, o);
    return dx;
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<MaxPool2d>(*this); }

 private:
  ImageShape in_;
};

/// Rows are already flat, so this only validates the width.
template <typename Scalar>
class Flatten final : public Layer<Scalar> {
 public:
  explicit Flatten(Eigen::Index width) : width_(width) {}

  LayerKind kind() const override { return LayerKind::Flatten; }

  LayerOutput<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng&) override {
    this->check_width(x, width_);
    return {x, {LayerKind::Flatten, mode, {}, {}}};
  }

  Matrix<Scalar> backward(const LayerCache<Scalar>& cache, const Matrix<Scalar>& dy) override {
    this->check_cache(cache);
    return dy;
  }

  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Eigen::Index width_;
};

/// Ordered stack of layers that remembers the caches of its last forward call.
template <typename Scalar>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) { *this = other; }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;
  Sequential& operator=(const Sequential& other) {
    if (this == &other) return *this;
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
    caches_.clear();
    return *this;
  }

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<Scalar>& operator[](std::size_t i) const { return *layers_[i]; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Mode mode, SeededRng& rng) {
    caches_.clear();
    caches_.reserve(layers_.size());
    Matrix<Scalar> h = x;
    for (auto& layer : layers_) {
      auto out = layer->forward(h, mode, rng);
      h = std::move(out.output);
      caches_.push_back(std::move(out.cache));
    }
    return h;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    if (caches_.size() != layers_.size()) throw Error("sequential: backward without a matching forward");
    Matrix<Scalar> g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(caches_[i], g);
    return g;
  }

  std::vector<ParamState<Scalar>*> params() {
    std::vector<ParamState<Scalar>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<std::pair<std::string, Matrix<Scalar>*>> buffers() {
    std::vector<std::pair<std::string, Matrix<Scalar>*>> out;
    for (auto& l : layers_)
      for (auto& b : l->buffers()) out.push_back(b);
    return out;
  }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
  std::vector<LayerCache<Scalar>> caches_;
};

}  // namespace scan
