#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cfsum {

namespace detail {

struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty means "not populated"
};

}  // namespace detail

// Dense row-major float64 tensor. Value-semantic handle over shared storage;
// shape and values are fixed after creation (every op returns a new tensor).
// The only sanctioned mutation is mutable_values(), for parameter updates
// between tapes.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // dim 0 of a matrix
  std::size_t cols() const;  // dim 1 of a matrix
  bool is_matrix() const { return ndim() == 2; }

  const std::vector<double>& values() const;
  double at(std::size_t r, std::size_t c) const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void clear_grad();

  // In-place access for init and optimizer steps. Must not be called while a
  // tape recorded against this tensor is still pending.
  std::vector<double>& mutable_values();

  bool all_finite() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Reverse-mode tape. Ops append nodes in execution order, which is already a
// topological order; backward() replays them once in reverse. Single-owner,
// single-thread; one forward+backward per tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Populates grad on every requires_grad tensor the loss depends on.
  // The loss must be a scalar produced by an op recorded on this tape.
  void backward(const Tensor& loss);

  // Clears recorded nodes so the tape can record a fresh forward pass.
  void reset();

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return backward_done_; }

  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    // Reads output->grad, accumulates into inputs' grads.
    std::function<void(const Node&)> pull;
  };

  void record(Node node) { nodes_.push_back(std::move(node)); }

 private:
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// --- Primitive ops ---------------------------------------------------------
// Each op validates shapes, computes the forward value, and records a
// backward rule when any input requires a gradient.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);

// Row-wise softmax, stabilized by subtracting the row max. The masked
// overload treats mask-false positions as absent: they get weight exactly 0
// and the row max is taken over valid entries only. `mask` is row-major m*n.
Tensor softmax_rows(Tape& tape, const Tensor& x);
Tensor softmax_rows(Tape& tape, const Tensor& x, const std::vector<bool>& mask);

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
std::vector<Tensor> split_rows(Tape& tape, const Tensor& x, const std::vector<std::size_t>& lengths);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double c);
// Product with a learnable scalar tensor; gradients flow to both operands.
Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s);
Tensor relu(Tape& tape, const Tensor& x);
Tensor tanh_act(Tape& tape, const Tensor& x);
// x: m×d plus a 1×d vector broadcast over rows (bias add).
Tensor add_row_vector(Tape& tape, const Tensor& x, const Tensor& v);
// Row-wise normalization to zero mean / unit variance, then affine.
// gain and bias are 1×d.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor sum(Tape& tape, const Tensor& x);

}  // namespace cfsum
