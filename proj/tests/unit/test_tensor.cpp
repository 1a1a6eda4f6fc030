#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "gazeprobe/errors.hpp"
#include "gazeprobe/random.hpp"
#include "gazeprobe/tensor.hpp"
#include "oracles.hpp"

using namespace gazeprobe;

TEST(Tensor, RejectsShapeDataMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}, {}), ShapeError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.as_matrix()(1, 0), 4.0);
  EXPECT_EQ(Tensor({3}, {1, 2, 3}).as_matrix().rows(), 1);
  EXPECT_THROW(Tensor({1, 1, 2}, {1, 2}).as_matrix(), ShapeError);
}

TEST(Tensor, MatmulMatchesNaiveLoops) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const auto k = 1 + static_cast<Eigen::Index>(rng.below(6));
    const auto m = 1 + static_cast<Eigen::Index>(rng.below(6));
    const Matrix a = rng.normal_matrix(n, k), b = rng.normal_matrix(k, m);
    EXPECT_LT((tensor::matmul(a, b) - oracle::naive_matmul(a, b)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(tensor::matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)), ShapeError);
}

TEST(Tensor, MatmulRejectsNonFinite) {
  Matrix a = Matrix::Ones(2, 2);
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    tensor::matmul(a, Matrix::Ones(2, 2));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Tensor, SoftmaxRowsSumToOneAndHandleMinusInfinity) {
  Rng rng(5);
  Matrix m = rng.normal_matrix(4, 7) * 30.0;
  const double inf = std::numeric_limits<double>::infinity();
  m(2, 3) = -inf;
  m(2, 5) = -inf;
  const Matrix s = tensor::softmax_rows(m);
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_NEAR(s.row(r).sum(), 1.0, 1e-12);
  EXPECT_EQ(s(2, 3), 0.0);
  EXPECT_EQ(s(2, 5), 0.0);
  Matrix dead = Matrix::Constant(1, 3, -inf);
  EXPECT_THROW(tensor::softmax_rows(dead), NumericError);
}

TEST(Tensor, LogSoftmaxMatchesLogOfSoftmax) {
  Rng rng(6);
  const Matrix m = rng.normal_matrix(3, 9) * 4.0;
  const Matrix a = tensor::log_softmax_rows(m);
  const Matrix b = tensor::softmax_rows(m).array().log().matrix();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index r = 0; r < 3; ++r) EXPECT_NEAR(tensor::logsumexp(a.row(r)), 0.0, 1e-12);
}

TEST(Tensor, LayerNormMatchesTextbookFormula) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(10));
    const RowVector x = rng.normal_matrix(1, d) * 3.0;
    const RowVector g = rng.normal_matrix(1, d), b = rng.normal_matrix(1, d);
    const RowVector y = tensor::layer_norm(x, g, b, 1e-5);
    const auto ref = oracle::layer_norm(std::vector<double>(x.data(), x.data() + d),
                                        std::vector<double>(g.data(), g.data() + d),
                                        std::vector<double>(b.data(), b.data() + d), 1e-5);
    for (Eigen::Index i = 0; i < d; ++i) EXPECT_NEAR(y(i), ref[static_cast<std::size_t>(i)], 1e-12);
  }
  EXPECT_THROW(tensor::layer_norm(RowVector::Ones(3), RowVector::Ones(2), RowVector::Ones(3), 1e-5), ShapeError);
}

TEST(Tensor, GeluKnownValues) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))) and 0.5 x (1 + erf(x / sqrt 2)) at x = 1.
  EXPECT_NEAR(tensor::gelu(1.0), 0.8411919906082768, 1e-15);
  EXPECT_NEAR(tensor::gelu_erf(1.0), 0.8413447460685429, 1e-15);
  EXPECT_EQ(tensor::gelu(0.0), 0.0);
  EXPECT_NEAR(tensor::gelu(-10.0), 0.0, 1e-12);
  const Matrix m = Matrix::Constant(2, 2, 1.0);
  EXPECT_NEAR(tensor::gelu(m, tensor::GeluKind::Erf)(1, 1), 0.8413447460685429, 1e-15);
}

TEST(Tensor, FloatScalarInstantiation) {
  MatrixT<float> m(1, 3);
  m << 1.0f, 2.0f, 3.0f;
  const MatrixT<float> s = tensor::softmax_rows(m);
  EXPECT_NEAR(s.sum(), 1.0f, 1e-6f);
}
