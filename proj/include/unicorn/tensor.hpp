#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "unicorn/common.hpp"

namespace unicorn {

// Reverse-mode autodiff over small dense row-major matrices (scalars are 1x1,
// vectors 1xn). Ops record a backward closure and keep their inputs alive via
// shared_ptr; backward() walks the recorded graph in reverse topological
// order. Not thread-shared: each worker builds its own graphs.
struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily by backward()
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;

  size_t numel() const { return data.size(); }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double& gat(int r, int c) { return grad[static_cast<size_t>(r) * cols + c]; }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor constant(const Mat& m);
  static Tensor constant(std::vector<double> values, int rows, int cols);
  static Tensor scalar(double x);
  // Leaf with requires_grad = true (a trainable parameter or probed input).
  static Tensor param(std::vector<double> values, int rows, int cols);
  static Tensor param(const Mat& m);

  bool defined() const { return static_cast<bool>(node_); }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  size_t numel() const { return node_->numel(); }
  double item() const;  // 1x1 only

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& mutable_data() { return node_->data; }
  const std::vector<double>& grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  // Runs reverse-mode accumulation from this scalar. Leaf grads accumulate
  // across calls; interior grads are reset each time.
  void backward() const;

  // Same values, no history, never requires grad.
  Tensor detach() const;

  std::shared_ptr<TensorNode> node_;
};

// While alive, newly created ops record no graph (pure inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Elementwise and matrix ops. Shapes must match exactly unless stated.
Tensor add(const Tensor& a, const Tensor& b);  // b may be a 1xN row bias
Tensor sub(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double s);
Tensor div(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
// a (n x d) times b^T (m x d) -> n x m, without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor min_elem(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);   // -> 1x1
Tensor mean(const Tensor& a);  // -> 1x1

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int c0, int c1);  // [c0, c1)
Tensor slice_rows(const Tensor& a, int r0, int r1);  // [r0, r1)
Tensor gather(const Tensor& a, int r, int c);  // -> 1x1

// Row-wise softmax with hard zeros on masked entries (mask is 0/1, same
// shape, treated as a constant). Every row must keep at least one entry.
Tensor masked_softmax(const Tensor& logits, const Tensor& mask);
// Row-wise log-softmax over unmasked entries; masked outputs are 0 and must
// not be consumed.
Tensor masked_log_softmax(const Tensor& logits, const Tensor& mask);
// Shannon entropy of masked_softmax(logits) summed over rows -> 1x1.
Tensor masked_entropy(const Tensor& logits, const Tensor& mask);

}  // namespace unicorn
