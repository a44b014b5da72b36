#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stzero/errors.hpp"

namespace stzero {

namespace detail {

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;    // sized like value iff requires_grad
  bool requires_grad = false;
  std::uint64_t producer = 0;  // id of the tape that produced this node, 0 for leaves
};

}  // namespace detail

// Dense row-major matrix of 64-bit floats with an optional gradient buffer.
// A Tensor is a shared handle: copies alias the same storage node. Compute is
// double precision throughout; on-disk payloads are float32 and promoted on
// load.
//
// Tensors are safe for concurrent read-only access. Mutation (values, grads)
// must not race with readers.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double fill,
                     bool requires_grad = false);
  static Tensor from_data(std::size_t rows, std::size_t cols, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }

  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j);

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& values() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);

  // Gradient buffer; only valid when requires_grad is set.
  const std::vector<double>& grad() const;
  void zero_grad();

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// "RxC" shape string for diagnostics.
std::string shape_str(const Tensor& t);

bool all_finite(const Tensor& t);

// Rounds every entry to the nearest float32. Live parameters are kept exactly
// float32-representable so that the 32-bit storage format round-trips without
// loss.
void quantize_to_float32(Tensor& t);

inline constexpr double kLayerNormEps = 1e-5;

// Define-by-run reverse-mode tape. Each operation computes its result eagerly
// and records a closure that propagates gradients to inputs that require
// them. A tape is rebuilt per forward pass and replayed backward exactly
// once, in reverse execution order. A tape is confined to one sequence of
// execution; it must not be mutated concurrently.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // a[m x k] * b[k x n] -> [m x n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);

  // Elementwise, same shape.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor sqrt_elem(const Tensor& a);
  Tensor relu(const Tensor& a);

  Tensor scale(const Tensor& a, double factor);
  Tensor add_const(const Tensor& a, double c);

  // Adds a 1 x k row vector to every row of a[m x k].
  Tensor add_rowvec(const Tensor& a, const Tensor& row);

  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

  // Column-wise mean over rows; an empty input (0 x k) yields a zero row and
  // contributes no gradient.
  Tensor mean_rows(const Tensor& a);
  Tensor sum_rows(const Tensor& a);
  Tensor sum_all(const Tensor& a);

  // Row i of the result is the mean of the rows of `a` listed in
  // neighbors[i]; an empty list yields a zero row.
  Tensor neighbor_mean(const Tensor& a, const std::vector<std::vector<int>>& neighbors);

  // Row-wise softmax with max subtraction for stability.
  Tensor softmax_rows(const Tensor& a);

  // Row-wise normalization to zero mean / unit variance (eps inside the
  // square root), then per-column gain and bias (both 1 x k).
  Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, populating
  // grad for every requires_grad ancestor. The loss must be 1x1 and produced
  // by this tape. A second call without a fresh tape is an error.
  void backward(const Tensor& loss);

  std::size_t num_ops() const { return entries_.size(); }

 private:
  Tensor make_output(std::size_t rows, std::size_t cols, bool requires_grad);
  void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> entries_;
  std::uint64_t id_ = 0;
  bool replayed_ = false;
};

// Gradient verification against central finite differences,
// (f(p+h) - f(p-h)) / 2h, evaluated per parameter entry.
struct GradCheckItem {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  bool all_pass = true;
  double step = 0.0;
  double tol = 0.0;
};

// build_loss must deterministically rebuild the same scalar loss from the
// current parameter values on a fresh tape. Throws NumericError (naming the
// parameter) if any evaluation or gradient is non-finite.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build_loss,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double step, double tol);

}  // namespace stzero
