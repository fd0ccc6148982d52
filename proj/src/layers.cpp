#include "unicorn/layers.hpp"

#include <cmath>

namespace unicorn {

Tensor uniform_param(int rows, int cols, int fan_in, Rng& rng) {
  if (fan_in <= 0) throw ValidationError("uniform_param: fan_in must be positive");
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(rows) * static_cast<size_t>(cols));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::param(std::move(v), rows, cols);
}

Linear::Linear(int in, int out, Rng& rng)
    : W(uniform_param(in, out, in, rng)), b(uniform_param(1, out, in, rng)) {}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, W), b); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
}

Mlp2::Mlp2(int in, int hidden, int out, Rng& rng)
    : l1(in, hidden, rng), l2(hidden, out, rng) {}

Tensor Mlp2::forward(const Tensor& x) const { return l2.forward(relu(l1.forward(x))); }

void Mlp2::collect(const std::string& prefix, ParamList& out) const {
  l1.collect(prefix + ".l1", out);
  l2.collect(prefix + ".l2", out);
}

GruCell::GruCell(int width, Rng& rng)
    : width(width),
      Wz(uniform_param(width, width, width, rng)),
      Uz(uniform_param(width, width, width, rng)),
      bz(uniform_param(1, width, width, rng)),
      Wr(uniform_param(width, width, width, rng)),
      Ur(uniform_param(width, width, width, rng)),
      br(uniform_param(1, width, width, rng)),
      Wh(uniform_param(width, width, width, rng)),
      Uh(uniform_param(width, width, width, rng)),
      bh(uniform_param(1, width, width, rng)) {}

Tensor GruCell::forward(const Tensor& x, const Tensor& h_prev) const {
  if (x.cols() != width || h_prev.cols() != width || x.rows() != h_prev.rows())
    throw ValidationError("gru: input and hidden must both be n x width");
  Tensor z = sigmoid(add(add(matmul(x, Wz), matmul(h_prev, Uz)), bz));
  Tensor r = sigmoid(add(add(matmul(x, Wr), matmul(h_prev, Ur)), br));
  Tensor hb = tanh_t(add(add(matmul(x, Wh), matmul(mul(r, h_prev), Uh)), bh));
  Tensor ones = Tensor::constant(std::vector<double>(z.numel(), 1.0), z.rows(), z.cols());
  return add(mul(sub(ones, z), h_prev), mul(z, hb));
}

void GruCell::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".Wz", Wz);
  out.emplace_back(prefix + ".Uz", Uz);
  out.emplace_back(prefix + ".bz", bz);
  out.emplace_back(prefix + ".Wr", Wr);
  out.emplace_back(prefix + ".Ur", Ur);
  out.emplace_back(prefix + ".br", br);
  out.emplace_back(prefix + ".Wh", Wh);
  out.emplace_back(prefix + ".Uh", Uh);
  out.emplace_back(prefix + ".bh", bh);
}

CrossAttention::CrossAttention(int width, int heads, Rng& rng)
    : width(width), heads(heads), d_head(width / heads) {
  if (heads <= 0 || width <= 0 || width % heads != 0)
    throw ValidationError("attention: width must be a positive multiple of heads");
  Wq.reserve(heads);
  Wk.reserve(heads);
  Wv.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Wq.push_back(uniform_param(width, d_head, width, rng));
    Wk.push_back(uniform_param(width, d_head, width, rng));
    Wv.push_back(uniform_param(width, d_head, width, rng));
  }
  Wo = uniform_param(width, width, width, rng);
}

Tensor CrossAttention::forward(const Tensor& query, const Tensor& kv,
                               const std::vector<double>& kv_mask) const {
  if (query.cols() != width || kv.cols() != width)
    throw ValidationError("attention: query and kv width must equal layer width");
  if (kv_mask.size() != static_cast<size_t>(kv.rows()))
    throw ValidationError("attention: kv_mask length must equal kv row count");
  const int n_q = query.rows(), n_k = kv.rows();
  std::vector<double> mask_rows(static_cast<size_t>(n_q) * n_k);
  for (int r = 0; r < n_q; ++r)
    for (int c = 0; c < n_k; ++c) mask_rows[static_cast<size_t>(r) * n_k + c] = kv_mask[c];
  Tensor mask = Tensor::constant(std::move(mask_rows), n_q, n_k);

  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
  Tensor heads_out;
  for (int h = 0; h < heads; ++h) {
    Tensor q = matmul(query, Wq[h]);
    Tensor k = matmul(kv, Wk[h]);
    Tensor v = matmul(kv, Wv[h]);
    Tensor weights = masked_softmax(mul(matmul_nt(q, k), scale), mask);
    Tensor ctx = matmul(weights, v);
    heads_out = h == 0 ? ctx : concat_cols(heads_out, ctx);
  }
  return matmul(heads_out, Wo);
}

void CrossAttention::collect(const std::string& prefix, ParamList& out) const {
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    out.emplace_back(hp + ".Wq", Wq[h]);
    out.emplace_back(hp + ".Wk", Wk[h]);
    out.emplace_back(hp + ".Wv", Wv[h]);
  }
  out.emplace_back(prefix + ".Wo", Wo);
}

}  // namespace unicorn
