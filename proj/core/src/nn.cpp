#include "posestream/nn.hpp"

#include <cmath>
#include <numbers>

#include "posestream/errors.hpp"

namespace posestream::nn {

Linear Linear::init(int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight.resize(out, in);
  l.bias.resize(out);
  for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = rng.uniform(-bound, bound);
  }
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-bound, bound);
  return l;
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight.transpose();
  y.rowwise() += bias;
  return y;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".weight", weight.data(), weight.rows(), weight.cols());
  v(prefix + ".bias", bias.data(), 1, bias.size());
}

Matrix gelu(const Matrix& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return x.unaryExpr([](double a) { return 0.5 * a * (1.0 + std::tanh(c * (a + 0.044715 * a * a * a))); });
}

Matrix layer_norm(const Matrix& x, double eps) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    y.row(r) = (x.row(r).array() - mean) / std::sqrt(var + eps);
  }
  return y;
}

void softmax_rows_inplace(Matrix& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    x.row(r) = (x.row(r).array() - m).exp();
    x.row(r) /= x.row(r).sum();
  }
}

Matrix scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads) {
  if (heads < 1 || q.cols() % heads != 0 || k.cols() != q.cols() || v.cols() % heads != 0 ||
      k.rows() != v.rows()) {
    throw InvalidArgument("attention: inconsistent shapes");
  }
  const Eigen::Index dk = q.cols() / heads;
  const Eigen::Index dv = v.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix out(q.rows(), v.cols());
  for (int h = 0; h < heads; ++h) {
    Matrix logits = (q.middleCols(h * dk, dk) * k.middleCols(h * dk, dk).transpose()) * scale;
    softmax_rows_inplace(logits);
    out.middleCols(h * dv, dv) = logits * v.middleCols(h * dv, dv);
  }
  return out;
}

Mlp Mlp::init(int in, int hidden, int out, Rng& rng) {
  Mlp m;
  m.fc1 = Linear::init(in, hidden, rng);
  m.fc2 = Linear::init(hidden, out, rng);
  return m;
}

void Mlp::visit(const std::string& prefix, const ParamVisitor& v) {
  fc1.visit(prefix + ".fc1", v);
  fc2.visit(prefix + ".fc2", v);
}

MultiHeadAttention MultiHeadAttention::init(int dim, int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw InvalidArgument("attention: width must be divisible by the head count");
  }
  MultiHeadAttention a;
  a.query = Linear::init(dim, dim, rng);
  a.key = Linear::init(dim, dim, rng);
  a.value = Linear::init(dim, dim, rng);
  a.output = Linear::init(dim, dim, rng);
  a.heads = heads;
  return a;
}

Matrix MultiHeadAttention::forward(const Matrix& queries, const Matrix& context) const {
  return output.forward(scaled_dot_product_attention(query.forward(queries), key.forward(context),
                                                     value.forward(context), heads));
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& v) {
  query.visit(prefix + ".query", v);
  key.visit(prefix + ".key", v);
  value.visit(prefix + ".value", v);
  output.visit(prefix + ".output", v);
}

TransformerBlock TransformerBlock::init(int dim, int heads, Rng& rng) {
  TransformerBlock b;
  b.attention = MultiHeadAttention::init(dim, heads, rng);
  b.mlp = Mlp::init(dim, 2 * dim, dim, rng);
  return b;
}

Matrix TransformerBlock::forward(const Matrix& x) const {
  const Matrix n1 = layer_norm(x);
  Matrix y = x + attention.forward(n1, n1);
  return y + mlp.forward(layer_norm(y));
}

void TransformerBlock::visit(const std::string& prefix, const ParamVisitor& v) {
  attention.visit(prefix + ".attention", v);
  mlp.visit(prefix + ".mlp", v);
}

Gru Gru::init(int in, int hidden, Rng& rng) {
  Gru g;
  g.input = Linear::init(in, 3 * hidden, rng);
  g.state = Linear::init(hidden, 3 * hidden, rng);
  g.hidden = hidden;
  return g;
}

Matrix Gru::forward(const Matrix& x, const Matrix& h) const {
  const Matrix gi = input.forward(x);
  const Matrix gh = state.forward(h);
  const auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  const Matrix r = (gi.leftCols(hidden) + gh.leftCols(hidden)).unaryExpr(sig);
  const Matrix z = (gi.middleCols(hidden, hidden) + gh.middleCols(hidden, hidden)).unaryExpr(sig);
  const Matrix n = (gi.rightCols(hidden).array() + r.array() * gh.rightCols(hidden).array())
                       .tanh()
                       .matrix();
  return ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
}

void Gru::visit(const std::string& prefix, const ParamVisitor& v) {
  input.visit(prefix + ".input", v);
  state.visit(prefix + ".state", v);
}

}  // namespace posestream::nn
