#include "unicorn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace unicorn {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(int rows, int cols) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->data.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), 0.0);
  return n;
}

Tensor wrap(std::shared_ptr<TensorNode> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                          "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                          "x" + std::to_string(b.cols()) + ")");
}

// Records parents and the backward closure when the result needs a graph.
template <typename Fn>
void attach(const std::shared_ptr<TensorNode>& out,
            std::vector<std::shared_ptr<TensorNode>> parents, Fn&& fn) {
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (!g_grad_enabled || !any) return;
  out->requires_grad = true;
  out->leaf = false;
  out->parents = std::move(parents);
  out->backward_fn = std::forward<Fn>(fn);
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::constant(const Mat& m) { return constant(m.v, m.rows, m.cols); }

Tensor Tensor::constant(std::vector<double> values, int rows, int cols) {
  if (values.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols))
    throw ValidationError("tensor: value count does not match shape");
  auto n = make_node(rows, cols);
  n->data = std::move(values);
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double x) { return constant({x}, 1, 1); }

Tensor Tensor::param(std::vector<double> values, int rows, int cols) {
  Tensor t = constant(std::move(values), rows, cols);
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::param(const Mat& m) { return param(m.v, m.rows, m.cols); }

double Tensor::item() const {
  require_defined(*this, "item");
  if (numel() != 1) throw ValidationError("item: tensor is not a scalar");
  return node_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

void Tensor::zero_grad() {
  require_defined(*this, "zero_grad");
  node_->grad.assign(node_->numel(), 0.0);
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return constant(node_->data, node_->rows, node_->cols);
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (numel() != 1) throw ValidationError("backward: loss must be a scalar");
  if (!node_->requires_grad)
    throw ValidationError("backward: loss is detached from any recorded graph");

  // Post-order DFS: every parent lands before its consumers, so the reversed
  // order sees each node only after all of its consumers contributed grad.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  for (TensorNode* n : topo) {
    if (!n->leaf)
      n->grad.assign(n->numel(), 0.0);  // interior grads are per-call scratch
    else if (n->grad.size() != n->numel())
      n->grad.assign(n->numel(), 0.0);  // leaves accumulate across calls
  }
  node_->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool row_bcast = b.rows() == 1 && b.cols() == a.cols();
  const bool scalar_bcast = b.numel() == 1;
  if (!same && !row_bcast && !scalar_bcast)
    throw ValidationError("add: shapes not addable (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " + " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  auto out = make_node(a.rows(), a.cols());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) {
      const size_t k = static_cast<size_t>(r) * a.cols() + c;
      const double bx = same ? bv[k] : (row_bcast ? bv[static_cast<size_t>(c)] : bv[0]);
      out->data[k] = av[k] + bx;
    }
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o, same, row_bcast] {
    if (an->requires_grad)
      for (size_t k = 0; k < o->grad.size(); ++k) an->grad[k] += o->grad[k];
    if (bn->requires_grad) {
      if (same) {
        for (size_t k = 0; k < o->grad.size(); ++k) bn->grad[k] += o->grad[k];
      } else if (row_bcast) {
        for (int r = 0; r < o->rows; ++r)
          for (int c = 0; c < o->cols; ++c) bn->grad[static_cast<size_t>(c)] += o->gat(r, c);
      } else {
        for (size_t k = 0; k < o->grad.size(); ++k) bn->grad[0] += o->grad[k];
      }
    }
  });
  return wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  require_same_shape(a, b, "sub");
  auto out = make_node(a.rows(), a.cols());
  for (size_t k = 0; k < out->data.size(); ++k) out->data[k] = a.data()[k] - b.data()[k];
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o] {
    if (an->requires_grad)
      for (size_t k = 0; k < o->grad.size(); ++k) an->grad[k] += o->grad[k];
    if (bn->requires_grad)
      for (size_t k = 0; k < o->grad.size(); ++k) bn->grad[k] -= o->grad[k];
  });
  return wrap(out);
}

Tensor neg(const Tensor& a) {
  require_defined(a, "neg");
  auto out = make_node(a.rows(), a.cols());
  for (size_t k = 0; k < out->data.size(); ++k) out->data[k] = -a.data()[k];
  TensorNode* an = a.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_}, [an, o] {
    for (size_t k = 0; k < o->grad.size(); ++k) an->grad[k] -= o->grad[k];
  });
  return wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  require_same_shape(a, b, "mul");
  auto out = make_node(a.rows(), a.cols());
  for (size_t k = 0; k < out->data.size(); ++k) out->data[k] = a.data()[k] * b.data()[k];
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o] {
    if (an->requires_grad)
      for (size_t k = 0; k < o->grad.size(); ++k) an->grad[k] += o->grad[k] * bn->data[k];
    if (bn->requires_grad)
      for (size_t k = 0; k < o->grad.size(); ++k) bn->grad[k] += o->grad[k] * an->data[k];
  });
  return wrap(out);
}

Tensor mul(const Tensor& a, double s) {
  require_defined(a, "mul");
  auto out = make_node(a.rows(), a.cols());
  for (size_t k = 0; k < out->data.size(); ++k) out->data[k] = a.data()[k] * s;
  TensorNode* an = a.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_}, [an, o, s] {
    for (size_t k = 0; k < o->grad.size(); ++k) an->grad[k] += o->grad[k] * s;
  });
  return wrap(out);
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_defined(a, "div");
  require_defined(b, "div");
  require_same_shape(a, b, "div");
  auto out = make_node(a.rows(), a.cols());
  for (size_t k = 0; k < out->data.size(); ++k) out->data[k] = a.data()[k] / b.data()[k];
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o] {
    if (an->requires_grad)
      for (size_t k = 0; k < o->grad.size(); ++k) an->grad[k] += o->grad[k] / bn->data[k];
    if (bn->requires_grad)
      for (size_t k = 0; k < o->grad.size(); ++k)
        bn->grad[k] -= o->grad[k] * an->data[k] / (bn->data[k] * bn->data[k]);
  });
  return wrap(out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.cols() != b.rows())
    throw ValidationError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()) + ")");
  const int n = a.rows(), k = a.cols(), m = b.cols();
  auto out = make_node(n, m);
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out->data.data();
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < k; ++t) {
      const double x = A[static_cast<size_t>(i) * k + t];
      if (x == 0.0) continue;
      const double* brow = B + static_cast<size_t>(t) * m;
      double* crow = C + static_cast<size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += x * brow[j];
    }
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o, n, k, m] {
    const double* G = o->grad.data();
    if (an->requires_grad) {
      // dA = G * B^T
      const double* B2 = bn->data.data();
      double* GA = an->grad.data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double g = G[static_cast<size_t>(i) * m + j];
          if (g == 0.0) continue;
          const double* brow = B2 + static_cast<size_t>(j);
          for (int t = 0; t < k; ++t)
            GA[static_cast<size_t>(i) * k + t] += g * brow[static_cast<size_t>(t) * m];
        }
    }
    if (bn->requires_grad) {
      // dB = A^T * G
      const double* A2 = an->data.data();
      double* GB = bn->grad.data();
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < k; ++t) {
          const double x = A2[static_cast<size_t>(i) * k + t];
          if (x == 0.0) continue;
          const double* grow = G + static_cast<size_t>(i) * m;
          double* gbrow = GB + static_cast<size_t>(t) * m;
          for (int j = 0; j < m; ++j) gbrow[j] += x * grow[j];
        }
    }
  });
  return wrap(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul_nt");
  require_defined(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw ValidationError("matmul_nt: trailing dimensions disagree (" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  const int n = a.rows(), d = a.cols(), m = b.rows();
  auto out = make_node(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int t = 0; t < d; ++t) acc += a.data()[static_cast<size_t>(i) * d + t] *
                                         b.data()[static_cast<size_t>(j) * d + t];
      out->data[static_cast<size_t>(i) * m + j] = acc;
    }
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o, n, d, m] {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double g = o->grad[static_cast<size_t>(i) * m + j];
        if (g == 0.0) continue;
        if (an->requires_grad)
          for (int t = 0; t < d; ++t)
            an->grad[static_cast<size_t>(i) * d + t] += g * bn->data[static_cast<size_t>(j) * d + t];
        if (bn->requires_grad)
          for (int t = 0; t < d; ++t)
            bn->grad[static_cast<size_t>(j) * d + t] += g * an->data[static_cast<size_t>(i) * d + t];
      }
  });
  return wrap(out);
}

namespace {

// Shared scaffold for elementwise unary ops: dx = g * dfn(x, y).
template <typename F, typename DF>
Tensor unary_op(const Tensor& a, const char* name, F&& f, DF&& df) {
  require_defined(a, name);
  auto out = make_node(a.rows(), a.cols());
  for (size_t k = 0; k < out->data.size(); ++k) out->data[k] = f(a.data()[k]);
  TensorNode* an = a.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_}, [an, o, df] {
    for (size_t k = 0; k < o->grad.size(); ++k)
      an->grad[k] += o->grad[k] * df(an->data[k], o->data[k]);
  });
  return wrap(out);
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ValidationError("clamp: lo exceeds hi");
  return unary_op(
      a, "clamp", [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor min_elem(const Tensor& a, const Tensor& b) {
  require_defined(a, "min_elem");
  require_defined(b, "min_elem");
  require_same_shape(a, b, "min_elem");
  auto out = make_node(a.rows(), a.cols());
  for (size_t k = 0; k < out->data.size(); ++k)
    out->data[k] = std::min(a.data()[k], b.data()[k]);
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o] {
    for (size_t k = 0; k < o->grad.size(); ++k) {
      if (an->data[k] <= bn->data[k]) {  // ties route to the first argument
        if (an->requires_grad) an->grad[k] += o->grad[k];
      } else if (bn->requires_grad) {
        bn->grad[k] += o->grad[k];
      }
    }
  });
  return wrap(out);
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  auto out = make_node(1, 1);
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  out->data[0] = acc;
  TensorNode* an = a.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_}, [an, o] {
    for (size_t k = 0; k < an->grad.size(); ++k) an->grad[k] += o->grad[0];
  });
  return wrap(out);
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw ValidationError("mean: empty tensor");
  return mul(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_defined(a, "concat_cols");
  require_defined(b, "concat_cols");
  if (a.rows() != b.rows()) throw ValidationError("concat_cols: row counts differ");
  const int n = a.rows(), ca = a.cols(), cb = b.cols();
  auto out = make_node(n, ca + cb);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < ca; ++c) out->at(r, c) = a.data()[static_cast<size_t>(r) * ca + c];
    for (int c = 0; c < cb; ++c)
      out->at(r, ca + c) = b.data()[static_cast<size_t>(r) * cb + c];
  }
  TensorNode* an = a.node_.get();
  TensorNode* bn = b.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_, b.node_}, [an, bn, o, n, ca, cb] {
    for (int r = 0; r < n; ++r) {
      if (an->requires_grad)
        for (int c = 0; c < ca; ++c) an->grad[static_cast<size_t>(r) * ca + c] += o->gat(r, c);
      if (bn->requires_grad)
        for (int c = 0; c < cb; ++c)
          bn->grad[static_cast<size_t>(r) * cb + c] += o->gat(r, ca + c);
    }
  });
  return wrap(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: nothing to concatenate");
  int rows = 0;
  const int cols = parts[0].cols();
  for (const auto& p : parts) {
    require_defined(p, "concat_rows");
    if (p.cols() != cols) throw ValidationError("concat_rows: column counts differ");
    rows += p.rows();
  }
  auto out = make_node(rows, cols);
  std::vector<std::shared_ptr<TensorNode>> parents;
  int r0 = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(),
              out->data.begin() + static_cast<size_t>(r0) * cols);
    parents.push_back(p.node_);
    r0 += p.rows();
  }
  TensorNode* o = out.get();
  std::vector<TensorNode*> raw;
  for (const auto& p : parts) raw.push_back(p.node_.get());
  attach(out, std::move(parents), [o, raw, cols] {
    size_t off = 0;
    for (TensorNode* p : raw) {
      if (p->requires_grad)
        for (size_t k = 0; k < p->grad.size(); ++k) p->grad[k] += o->grad[off + k];
      off += p->numel();
    }
    (void)cols;
  });
  return wrap(out);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require_defined(a, "slice_cols");
  if (c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw ValidationError("slice_cols: bad column range");
  const int n = a.rows(), w = c1 - c0;
  auto out = make_node(n, w);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < w; ++c)
      out->at(r, c) = a.data()[static_cast<size_t>(r) * a.cols() + c0 + c];
  TensorNode* an = a.node_.get();
  TensorNode* o = out.get();
  const int ac = a.cols();
  attach(out, {a.node_}, [an, o, n, w, c0, ac] {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < w; ++c)
        an->grad[static_cast<size_t>(r) * ac + c0 + c] += o->gat(r, c);
  });
  return wrap(out);
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require_defined(a, "slice_rows");
  if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw ValidationError("slice_rows: bad row range");
  const int w = a.cols(), n = r1 - r0;
  auto out = make_node(n, w);
  std::copy(a.data().begin() + static_cast<size_t>(r0) * w,
            a.data().begin() + static_cast<size_t>(r1) * w, out->data.begin());
  TensorNode* an = a.node_.get();
  TensorNode* o = out.get();
  attach(out, {a.node_}, [an, o, r0, w] {
    for (size_t k = 0; k < o->grad.size(); ++k)
      an->grad[static_cast<size_t>(r0) * w + k] += o->grad[k];
  });
  return wrap(out);
}

Tensor gather(const Tensor& a, int r, int c) {
  require_defined(a, "gather");
  if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
    throw ValidationError("gather: index out of range");
  auto out = make_node(1, 1);
  out->data[0] = a.data()[static_cast<size_t>(r) * a.cols() + c];
  TensorNode* an = a.node_.get();
  TensorNode* o = out.get();
  const size_t idx = static_cast<size_t>(r) * a.cols() + c;
  attach(out, {a.node_}, [an, o, idx] { an->grad[idx] += o->grad[0]; });
  return wrap(out);
}

namespace {

struct MaskedRow {
  double max_logit = 0.0;
  double denom = 0.0;
  bool any = false;
};

MaskedRow analyze_row(const double* l, const double* m, int w, const char* op) {
  MaskedRow out;
  for (int c = 0; c < w; ++c)
    if (m[c] != 0.0) {
      out.max_logit = out.any ? std::max(out.max_logit, l[c]) : l[c];
      out.any = true;
    }
  if (!out.any) throw ValidationError(std::string(op) + ": a row has every entry masked");
  for (int c = 0; c < w; ++c)
    if (m[c] != 0.0) out.denom += std::exp(l[c] - out.max_logit);
  return out;
}

}  // namespace

Tensor masked_softmax(const Tensor& logits, const Tensor& mask) {
  require_defined(logits, "masked_softmax");
  require_defined(mask, "masked_softmax");
  require_same_shape(logits, mask, "masked_softmax");
  const int n = logits.rows(), w = logits.cols();
  auto out = make_node(n, w);
  for (int r = 0; r < n; ++r) {
    const double* l = logits.data().data() + static_cast<size_t>(r) * w;
    const double* m = mask.data().data() + static_cast<size_t>(r) * w;
    const MaskedRow info = analyze_row(l, m, w, "masked_softmax");
    for (int c = 0; c < w; ++c)
      out->at(r, c) = m[c] != 0.0 ? std::exp(l[c] - info.max_logit) / info.denom : 0.0;
  }
  TensorNode* ln = logits.node_.get();
  TensorNode* o = out.get();
  attach(out, {logits.node_, mask.node_}, [ln, o, n, w] {
    if (!ln->requires_grad) return;  // the mask itself is not differentiable
    for (int r = 0; r < n; ++r) {
      double dot = 0.0;
      for (int c = 0; c < w; ++c) dot += o->gat(r, c) * o->at(r, c);
      for (int c = 0; c < w; ++c) {
        const double p = o->at(r, c);
        if (p != 0.0) ln->grad[static_cast<size_t>(r) * w + c] += p * (o->gat(r, c) - dot);
      }
    }
  });
  return wrap(out);
}

Tensor masked_log_softmax(const Tensor& logits, const Tensor& mask) {
  require_defined(logits, "masked_log_softmax");
  require_defined(mask, "masked_log_softmax");
  require_same_shape(logits, mask, "masked_log_softmax");
  const int n = logits.rows(), w = logits.cols();
  auto out = make_node(n, w);
  std::vector<char> real(static_cast<size_t>(n) * w, 0);
  for (int r = 0; r < n; ++r) {
    const double* l = logits.data().data() + static_cast<size_t>(r) * w;
    const double* m = mask.data().data() + static_cast<size_t>(r) * w;
    const MaskedRow info = analyze_row(l, m, w, "masked_log_softmax");
    const double lse = info.max_logit + std::log(info.denom);
    for (int c = 0; c < w; ++c) {
      if (m[c] != 0.0) {
        out->at(r, c) = l[c] - lse;
        real[static_cast<size_t>(r) * w + c] = 1;
      }
    }
  }
  TensorNode* ln = logits.node_.get();
  TensorNode* o = out.get();
  attach(out, {logits.node_, mask.node_}, [ln, o, n, w, real = std::move(real)] {
    if (!ln->requires_grad) return;
    for (int r = 0; r < n; ++r) {
      double gsum = 0.0;
      for (int c = 0; c < w; ++c)
        if (real[static_cast<size_t>(r) * w + c]) gsum += o->gat(r, c);
      for (int c = 0; c < w; ++c) {
        const size_t k = static_cast<size_t>(r) * w + c;
        if (!real[k]) continue;
        const double p = std::exp(o->at(r, c));
        ln->grad[k] += o->gat(r, c) - p * gsum;
      }
    }
  });
  return wrap(out);
}

Tensor masked_entropy(const Tensor& logits, const Tensor& mask) {
  require_defined(logits, "masked_entropy");
  require_defined(mask, "masked_entropy");
  require_same_shape(logits, mask, "masked_entropy");
  const int n = logits.rows(), w = logits.cols();
  auto out = make_node(1, 1);
  std::vector<double> probs(static_cast<size_t>(n) * w, 0.0);
  std::vector<double> row_h(static_cast<size_t>(n), 0.0);
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* l = logits.data().data() + static_cast<size_t>(r) * w;
    const double* m = mask.data().data() + static_cast<size_t>(r) * w;
    const MaskedRow info = analyze_row(l, m, w, "masked_entropy");
    double h = 0.0;
    for (int c = 0; c < w; ++c) {
      if (m[c] == 0.0) continue;
      const double p = std::exp(l[c] - info.max_logit) / info.denom;
      probs[static_cast<size_t>(r) * w + c] = p;
      if (p > 0.0) h -= p * std::log(p);
    }
    row_h[static_cast<size_t>(r)] = h;
    total += h;
  }
  out->data[0] = total;
  TensorNode* ln = logits.node_.get();
  TensorNode* o = out.get();
  attach(out, {logits.node_, mask.node_},
         [ln, o, n, w, probs = std::move(probs), row_h = std::move(row_h)] {
           if (!ln->requires_grad) return;
           const double g = o->grad[0];
           for (int r = 0; r < n; ++r)
             for (int c = 0; c < w; ++c) {
               const double p = probs[static_cast<size_t>(r) * w + c];
               if (p > 0.0)
                 ln->grad[static_cast<size_t>(r) * w + c] -=
                     g * p * (std::log(p) + row_h[static_cast<size_t>(r)]);
             }
         });
  return wrap(out);
}

}  // namespace unicorn
