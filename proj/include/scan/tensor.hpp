#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "scan/error.hpp"

namespace scan {

/// Row-major dense matrix; rows are samples, columns are features.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using MatrixXf = Matrix<float>;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& m) {
  return shape_string(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
}

/// Dense row-major array with an explicit shape. Used for file IO and for
/// image samples; layer math runs on Matrix views of the same storage.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), Scalar(0)) {
    check_dims();
  }

  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    Matrix<Scalar> rm = m.template cast<Scalar>();
    std::vector<Scalar> data(rm.data(), rm.data() + rm.size());
    return Tensor({static_cast<std::size_t>(rm.rows()), static_cast<std::size_t>(rm.cols())},
                  std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  const std::vector<Scalar>& values() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  /// Interprets the first dimension as rows and the rest as columns.
  Eigen::Map<const Matrix<Scalar>> as_matrix() const {
    const auto rows = shape_.empty() ? 1 : static_cast<Eigen::Index>(shape_[0]);
    const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(data_.size()) / rows;
    return {data_.data(), rows, cols};
  }

  /// Flattened single-row view, e.g. one image as one sample.
  Eigen::Map<const RowVector<Scalar>> as_row() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("tensor shape " + shape_string(shape_) + " has a zero dimension");
    }
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

/// Matrix product with a shape check that names both operands.
template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a) + " * " +
                         shape_string(b));
  }
  Matrix<Scalar> out = a * b;
  return out;
}

/// Gradients of out = a * b given d(out): returns {d(a), d(b)}.
template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> matmul_backward(const Matrix<Scalar>& a,
                                                          const Matrix<Scalar>& b,
                                                          const Matrix<Scalar>& d_out) {
  return {d_out * b.transpose(), a.transpose() * d_out};
}

/// Rows scaled to unit L2 norm; zero rows stay zero.
template <typename Derived>
Matrix<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  Matrix<typename Derived::Scalar> out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const auto n = out.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

}  // namespace scan
