#include "gazeprobe/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace gazeprobe {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t expected = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                                               std::multiplies<>());
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimension must be positive: " + shape_string(shape_));
  }
  if (expected != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

Tensor::Tensor(const Matrix& m)
    : shape_{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
      data_(m.data(), m.data() + m.size()) {}

Matrix Tensor::as_matrix() const {
  if (rank() == 1) {
    return Eigen::Map<const Matrix>(data_.data(), 1, static_cast<Eigen::Index>(shape_[0]));
  }
  if (rank() == 2) {
    return Eigen::Map<const Matrix>(data_.data(), static_cast<Eigen::Index>(shape_[0]),
                                    static_cast<Eigen::Index>(shape_[1]));
  }
  throw ShapeError("as_matrix: tensor of shape " + shape_string(shape_) + " is not rank 1 or 2");
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace tensor {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " times " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
  Matrix out = a * b;
  check_finite(out, "matmul");
  return out;
}

}  // namespace tensor
}  // namespace gazeprobe
