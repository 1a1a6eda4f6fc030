#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "gazeprobe/errors.hpp"

namespace gazeprobe {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using RowVector = RowVectorT<double>;
using Vector = VectorT<double>;

// N-dimensional row-major array. Used where rank is not fixed at two
// (weight containers); everything that computes works on Matrix.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);
  explicit Tensor(const Matrix& m);

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }

  // Rank-1 tensors become a single row.
  Matrix as_matrix() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

namespace tensor {

// Throws NumericError naming `op` if any entry is NaN or Inf.
template <typename Derived>
void check_finite(const Eigen::DenseBase<Derived>& m, std::string_view op) {
  if (!m.derived().allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + std::string(op));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with per-row max subtraction. -inf entries act as masked
// positions; a row with no finite entry is an error.
template <typename Derived>
MatrixT<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  MatrixT<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar peak = m.row(r).maxCoeff();
    if (!std::isfinite(peak)) {
      throw NumericError("softmax_rows: row " + std::to_string(r) + " has no finite entry");
    }
    // Eigen's vectorized exp clamps very negative input, so exp(-inf) comes
    // back as a denormal; masked entries must be exactly zero.
    const auto shifted = (m.row(r).array() - peak).eval();
    out.row(r) = (shifted == -std::numeric_limits<Scalar>::infinity()).select(Scalar(0), shifted.exp()).matrix();
    out.row(r) /= out.row(r).sum();
  }
  check_finite(out, "softmax_rows");
  return out;
}

template <typename Derived>
MatrixT<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  MatrixT<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar peak = m.row(r).maxCoeff();
    if (!std::isfinite(peak)) {
      throw NumericError("log_softmax_rows: row " + std::to_string(r) + " has no finite entry");
    }
    const auto shifted = (m.row(r).array() - peak).eval();
    const Scalar lse =
        peak + std::log((shifted == -std::numeric_limits<Scalar>::infinity()).select(Scalar(0), shifted.exp()).sum());
    out.row(r) = (m.row(r).array() - lse).matrix();
  }
  return out;
}

// Population-variance layer norm of one vector.
template <typename D1, typename D2, typename D3>
RowVectorT<typename D1::Scalar> layer_norm(const Eigen::MatrixBase<D1>& x,
                                           const Eigen::MatrixBase<D2>& gain,
                                           const Eigen::MatrixBase<D3>& bias,
                                           typename D1::Scalar eps) {
  using Scalar = typename D1::Scalar;
  if (x.size() != gain.size() || x.size() != bias.size()) {
    throw ShapeError("layer_norm: length mismatch (x=" + std::to_string(x.size()) +
                     ", gain=" + std::to_string(gain.size()) +
                     ", bias=" + std::to_string(bias.size()) + ")");
  }
  const auto n = static_cast<Scalar>(x.size());
  const Scalar mean = x.sum() / n;
  const auto centered = (x.array() - mean).eval();
  const Scalar var = centered.square().sum() / n;
  const Scalar inv = Scalar(1) / std::sqrt(var + eps);
  RowVectorT<Scalar> out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = centered(i) * inv * gain(i) + bias(i);
  }
  check_finite(out, "layer_norm");
  return out;
}

// layer_norm applied to every row of a matrix.
template <typename D1, typename D2, typename D3>
MatrixT<typename D1::Scalar> layer_norm_rows(const Eigen::MatrixBase<D1>& x,
                                             const Eigen::MatrixBase<D2>& gain,
                                             const Eigen::MatrixBase<D3>& bias,
                                             typename D1::Scalar eps) {
  MatrixT<typename D1::Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out.row(r) = layer_norm(x.row(r), gain, bias, eps);
  }
  return out;
}

template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
  const Scalar c = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + Scalar(0.044715) * x * x * x)));
}

template <std::floating_point Scalar>
Scalar gelu_erf(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
}

enum class GeluKind { Tanh, Erf };

template <typename Derived>
MatrixT<typename Derived::Scalar> gelu(const Eigen::MatrixBase<Derived>& m,
                                       GeluKind kind = GeluKind::Tanh) {
  using Scalar = typename Derived::Scalar;
  MatrixT<Scalar> out = m;
  if (kind == GeluKind::Tanh) {
    out = out.unaryExpr([](Scalar v) { return gelu(v); });
  } else {
    out = out.unaryExpr([](Scalar v) { return gelu_erf(v); });
  }
  check_finite(out, "gelu");
  return out;
}

template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = v.maxCoeff();
  return peak + std::log((v.array() - peak).exp().sum());
}

}  // namespace tensor
}  // namespace gazeprobe
