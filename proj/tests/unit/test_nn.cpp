#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "posestream/errors.hpp"
#include "posestream/nn.hpp"

using namespace posestream;
using namespace posestream::nn;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-2.0, 2.0);
  return m;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Nn, LinearInitBounds) {
  Rng rng(1);
  const Linear l = Linear::init(16, 5, rng);
  EXPECT_EQ(l.in_dim(), 16);
  EXPECT_EQ(l.out_dim(), 5);
  EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_LE(l.bias.cwiseAbs().maxCoeff(), 0.25);
}

TEST(Nn, SoftmaxRowsSumToOne) {
  Rng rng(2);
  Matrix m = random_matrix(rng, 5, 9) * 100.0;
  softmax_rows_inplace(m);
  for (int r = 0; r < 5; ++r) {
    EXPECT_NEAR(m.row(r).sum(), 1.0, 1e-12);
    EXPECT_GE(m.row(r).minCoeff(), 0.0);
  }
}

TEST(Nn, LayerNormZeroMeanUnitVariance) {
  Rng rng(3);
  const Matrix y = layer_norm(random_matrix(rng, 4, 32), 0.0);
  for (int r = 0; r < 4; ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.row(r).array().square().mean(), 1.0, 1e-12);
  }
}

TEST(Nn, AttentionMatchesLoopOracle) {
  Rng rng(4);
  const int heads = 3, dh = 4;
  const Matrix q = random_matrix(rng, 5, heads * dh);
  const Matrix k = random_matrix(rng, 7, heads * dh);
  const Matrix v = random_matrix(rng, 7, heads * dh);
  const Matrix got = scaled_dot_product_attention(q, k, v, heads);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < 5; ++i) {
      std::vector<double> w(7);
      double total = 0.0;
      for (int j = 0; j < 7; ++j) {
        double dot = 0.0;
        for (int c = 0; c < dh; ++c) dot += q(i, h * dh + c) * k(j, h * dh + c);
        w[j] = std::exp(dot / std::sqrt(double(dh)));
        total += w[j];
      }
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (int j = 0; j < 7; ++j) acc += w[j] / total * v(j, h * dh + c);
        ASSERT_NEAR(got(i, h * dh + c), acc, 1e-12);
      }
    }
  }
}

TEST(Nn, AttentionIgnoresContextOrder) {
  Rng rng(5);
  const Matrix q = random_matrix(rng, 3, 8);
  const Matrix k = random_matrix(rng, 6, 8);
  const Matrix v = random_matrix(rng, 6, 8);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(6);
  p.indices() << 3, 0, 5, 1, 4, 2;
  const Matrix a = scaled_dot_product_attention(q, k, v, 2);
  const Matrix b = scaled_dot_product_attention(q, p * k, p * v, 2);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nn, AttentionShapeErrors) {
  const Matrix q(2, 6), k(3, 6), v(4, 6);
  EXPECT_THROW(scaled_dot_product_attention(q, k, v, 2), InvalidArgument);
  EXPECT_THROW(scaled_dot_product_attention(q, k, k, 4), InvalidArgument);
}

TEST(Nn, GruMatchesFormula) {
  Rng rng(6);
  const Gru g = Gru::init(5, 3, rng);
  const Matrix x = random_matrix(rng, 2, 5);
  const Matrix h = random_matrix(rng, 2, 3).array().tanh().matrix();
  const Matrix out = g.forward(x, h);
  for (int row = 0; row < 2; ++row) {
    for (int i = 0; i < 3; ++i) {
      auto wi = [&](int gate) { return g.input.weight.row(gate * 3 + i).dot(x.row(row)) + g.input.bias[gate * 3 + i]; };
      auto uh = [&](int gate) { return g.state.weight.row(gate * 3 + i).dot(h.row(row)) + g.state.bias[gate * 3 + i]; };
      const double r = sigm(wi(0) + uh(0));
      const double z = sigm(wi(1) + uh(1));
      const double n = std::tanh(wi(2) + r * uh(2));
      EXPECT_NEAR(out(row, i), (1 - z) * n + z * h(row, i), 1e-12);
    }
  }
}

TEST(Nn, GruStateStaysBounded) {
  Rng rng(7);
  const Gru g = Gru::init(4, 6, rng);
  Matrix h = Matrix::Zero(1, 6);
  for (int t = 0; t < 200; ++t) {
    h = g.forward(random_matrix(rng, 1, 4) * 50.0, h);
    ASSERT_LE(h.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(Nn, VisitorSeesEveryTensor) {
  Rng rng(8);
  TransformerBlock b = TransformerBlock::init(8, 2, rng);
  int tensors = 0;
  Eigen::Index values = 0;
  b.visit("blk", [&](const std::string&, double*, Eigen::Index r, Eigen::Index c) {
    ++tensors;
    values += r * c;
  });
  // four projections + two MLP layers, each weight and bias
  EXPECT_EQ(tensors, 12);
  EXPECT_EQ(values, 4 * (8 * 8 + 8) + (8 * 16 + 16) + (16 * 8 + 8));
}
