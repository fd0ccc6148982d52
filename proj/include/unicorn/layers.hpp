#pragma once

#include <string>
#include <utility>
#include <vector>

#include "unicorn/rng.hpp"
#include "unicorn/tensor.hpp"

namespace unicorn {

using ParamList = std::vector<std::pair<std::string, Tensor>>;

// All layers initialize weights uniform in (-sqrt(1/fan_in), +sqrt(1/fan_in))
// where fan_in is the input width of the matrix they multiply. Parameters are
// drawn in member-declaration order so a seeded Rng reproduces a model.

struct Linear {
  Tensor W;  // in x out
  Tensor b;  // 1 x out

  Linear() = default;
  Linear(int in, int out, Rng& rng);
  Tensor forward(const Tensor& x) const;  // x: n x in -> n x out
  void collect(const std::string& prefix, ParamList& out) const;
};

// Two affine layers with a ReLU between them.
struct Mlp2 {
  Linear l1;
  Linear l2;

  Mlp2() = default;
  Mlp2(int in, int hidden, int out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Standard GRU cell over row vectors; input and hidden share one width.
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   hb = tanh(x Wh + (r*h) Uh + bh)
//   h' = (1-z)*h + z*hb
struct GruCell {
  int width = 0;
  Tensor Wz, Uz, bz;
  Tensor Wr, Ur, br;
  Tensor Wh, Uh, bh;

  GruCell() = default;
  GruCell(int width, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& h_prev) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Multi-head scaled dot-product attention from query rows onto key/value rows.
// width must divide evenly into heads; each head projects to width/heads,
// scores are scaled by 1/sqrt(width/heads), masked keys get zero weight, and
// the concatenated heads pass through an output projection. kv_mask holds one
// 0/1 entry per kv row; at least one key must stay unmasked.
struct CrossAttention {
  int width = 0;
  int heads = 0;
  int d_head = 0;
  std::vector<Tensor> Wq, Wk, Wv;  // per head: width x d_head
  Tensor Wo;                       // width x width

  CrossAttention() = default;
  CrossAttention(int width, int heads, Rng& rng);
  Tensor forward(const Tensor& query, const Tensor& kv,
                 const std::vector<double>& kv_mask) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) leaf parameter.
Tensor uniform_param(int rows, int cols, int fan_in, Rng& rng);

}  // namespace unicorn
