#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "scan/error.hpp"
#include "scan/tensor.hpp"

namespace scan {

/// A trainable parameter with its gradient and SGD momentum buffer.
template <typename Scalar>
struct ParamState {
  ParamState() = default;
  ParamState(std::string param_name, Matrix<Scalar> init)
      : name(std::move(param_name)),
        value(std::move(init)),
        grad(Matrix<Scalar>::Zero(value.rows(), value.cols())),
        momentum_buf(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Matrix<Scalar> momentum_buf;
  bool grad_ready = false;

  /// Adds into the gradient and marks it populated.
  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (g.rows() != grad.rows() || g.cols() != grad.cols()) {
      throw DimensionError("gradient for '" + name + "' has shape " + shape_string(g) +
                           ", expected " + shape_string(grad));
    }
    grad += g;
    grad_ready = true;
  }

  void zero_grad() {
    grad.setZero();
    grad_ready = false;
  }
};

struct SgdOptions {
  double lr = 0.0075;
  double momentum = 0.9;
  double weight_decay = 1e-5;
};

inline void validate(const SgdOptions& o) {
  if (!(o.lr > 0)) throw ConfigError("sgd: lr must be > 0, got " + std::to_string(o.lr));
  if (!(o.momentum >= 0 && o.momentum < 1))
    throw ConfigError("sgd: momentum must be in [0,1), got " + std::to_string(o.momentum));
  if (!(o.weight_decay >= 0))
    throw ConfigError("sgd: weight_decay must be >= 0, got " + std::to_string(o.weight_decay));
}

/// One SGD step with momentum and L2 weight decay:
///   buf <- momentum * buf + (grad + weight_decay * value)
///   value <- value - lr * buf
/// Every gradient is validated before any parameter moves, so a bad
/// gradient leaves the whole parameter set untouched. Gradients are zeroed
/// afterwards.
template <typename Scalar>
void sgd_step(std::span<ParamState<Scalar>* const> params, const SgdOptions& opts) {
  validate(opts);
  for (const auto* p : params) {
    if (!p->grad_ready) throw NumericError("sgd: gradient for '" + p->name + "' was never populated");
    if (!p->grad.allFinite()) throw NumericError("sgd: non-finite gradient for '" + p->name + "'");
  }
  const auto lr = static_cast<Scalar>(opts.lr);
  const auto mu = static_cast<Scalar>(opts.momentum);
  const auto wd = static_cast<Scalar>(opts.weight_decay);
  for (auto* p : params) {
    p->momentum_buf = mu * p->momentum_buf + (p->grad + wd * p->value);
    p->value -= lr * p->momentum_buf;
    p->zero_grad();
  }
}

}  // namespace scan
