#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

#include "posestream/random.hpp"

// Forward-only layers for the pose update module. Activations are row-major
// in the sense that each row of a matrix is one token.
namespace posestream::nn {

using Matrix = Eigen::MatrixXd;

/// Receives every parameter tensor by name (column-major storage).
using ParamVisitor = std::function<void(const std::string& name, double* data, Eigen::Index rows,
                                        Eigen::Index cols)>;

struct Linear {
  Matrix weight;               // out x in
  Eigen::RowVectorXd bias;     // 1 x out

  static Linear init(int in, int out, Rng& rng);
  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
  Matrix forward(const Matrix& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

Matrix gelu(const Matrix& x);
/// Per-row normalization to zero mean and unit variance (no affine terms).
Matrix layer_norm(const Matrix& x, double eps = 1e-5);
void softmax_rows_inplace(Matrix& x);

/// softmax(Q K^T / sqrt(d_head)) V, computed independently per head on
/// contiguous column blocks of width cols / heads.
Matrix scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads);

struct Mlp {
  Linear fc1;
  Linear fc2;

  static Mlp init(int in, int hidden, int out, Rng& rng);
  Matrix forward(const Matrix& x) const { return fc2.forward(gelu(fc1.forward(x))); }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  int heads = 1;

  static MultiHeadAttention init(int dim, int heads, Rng& rng);
  Matrix forward(const Matrix& queries, const Matrix& context) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// Pre-norm self-attention block: x += attn(ln(x)); x += mlp(ln(x)).
struct TransformerBlock {
  MultiHeadAttention attention;
  Mlp mlp;

  static TransformerBlock init(int dim, int heads, Rng& rng);
  Matrix forward(const Matrix& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// Gated recurrent unit:
///   r = sigma(W_r x + U_r h + b_r), z = sigma(W_z x + U_z h + b_z)
///   n = tanh(W_n x + b_n + r * (U_n h + c_n)), h' = (1 - z) * n + z * h
/// Rows of `x` and `h` are independent sequences.
struct Gru {
  Linear input;   // in -> 3 * hidden, gate order (r, z, n)
  Linear state;   // hidden -> 3 * hidden
  int hidden = 0;

  static Gru init(int in, int hidden, Rng& rng);
  Matrix forward(const Matrix& x, const Matrix& h) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace posestream::nn
