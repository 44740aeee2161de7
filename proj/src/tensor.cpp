#include "cfsum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cfsum/errors.hpp"

namespace cfsum {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_matrix(const Tensor& x, const char* op) {
  if (!x.defined() || x.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     shape_str(x.defined() ? x.shape() : std::vector<std::size_t>{}));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Ensures a grad buffer exists (zero-filled) and returns it.
std::vector<double>& grad_buffer(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0);
  return impl->grad;
}

bool any_requires_grad(std::initializer_list<const Tensor*> tensors) {
  for (const Tensor* t : tensors) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// --- Tensor -----------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  impl_ = std::move(impl);
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  std::vector<double> values(shape_product(shape), value);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size() const { return impl_->values.size(); }

std::size_t Tensor::rows() const {
  require_matrix(*this, "rows");
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  require_matrix(*this, "cols");
  return impl_->shape[1];
}

const std::vector<double>& Tensor::values() const { return impl_->values; }

double Tensor::at(std::size_t r, std::size_t c) const {
  require_matrix(*this, "at");
  return impl_->values[r * impl_->shape[1] + c];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item(): tensor has " + std::to_string(size()) + " elements, expected 1");
  }
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw StateError("grad(): no gradient populated; run backward first");
  return impl_->grad;
}

void Tensor::clear_grad() {
  if (impl_) impl_->grad.clear();
}

std::vector<double>& Tensor::mutable_values() { return impl_->values; }

bool Tensor::all_finite() const {
  for (double v : impl_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// --- Tape -------------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (backward_done_) {
    throw StateError("backward(): tape already consumed; reset() or use a fresh tape");
  }
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward(): loss must be a scalar, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
  }
  bool produced_here = std::any_of(nodes_.begin(), nodes_.end(),
                                   [&](const Node& n) { return n.output == loss.impl(); });
  if (!produced_here) {
    throw ContractError("backward(): loss was not produced by an op recorded on this tape");
  }
  backward_done_ = true;
  loss.impl()->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // output does not influence the loss
    it->pull(*it);
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

// --- Ops --------------------------------------------------------------------

namespace {

// Plain m×k by k×n product into out (row-major, accumulating into zeros).
void matmul_into(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                 std::size_t n) {
  std::fill(out, out + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += a^T (m×k) -> (k×m) style helpers for backward rules.
void accumulate_matmul(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                       std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

std::vector<double> transposed(const std::vector<double>& x, std::size_t rows, std::size_t cols) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  }
  return out;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  matmul_into(a.values().data(), b.values().data(), out.data(), m, k, n);
  bool needs_grad = any_requires_grad({&a, &b});
  Tensor result = make_output({m, n}, std::move(out), needs_grad);
  if (needs_grad) {
    auto ai = a.impl(), bi = b.impl();
    tape.record({{ai, bi},
                 result.impl(),
                 [m, k, n](const Tape::Node& node) {
                   const auto& dout = node.output->grad;
                   const auto& ai = node.inputs[0];
                   const auto& bi = node.inputs[1];
                   // dA += dC * B^T
                   auto bt = transposed(bi->values, k, n);
                   accumulate_matmul(dout.data(), bt.data(), grad_buffer(ai).data(), m, n, k);
                   // dB += A^T * dC
                   auto at = transposed(ai->values, m, k);
                   accumulate_matmul(at.data(), dout.data(), grad_buffer(bi).data(), k, m, n);
                 }});
  }
  return result;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  bool needs_grad = x.requires_grad();
  Tensor result = make_output({n, m}, transposed(x.values(), m, n), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl()},
                 result.impl(),
                 [m, n](const Tape::Node& node) {
                   auto& dx = grad_buffer(node.inputs[0]);
                   const auto& dout = node.output->grad;
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t j = 0; j < m; ++j) dx[j * n + i] += dout[i * m + j];
                   }
                 }});
  }
  return result;
}

namespace {

Tensor softmax_rows_impl(Tape& tape, const Tensor& x, const std::vector<bool>* mask) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (mask && mask->size() != m * n) {
    throw ShapeError("softmax_rows: mask length " + std::to_string(mask->size()) +
                     " does not match " + shape_str(x.shape()));
  }
  const auto& v = x.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double rowmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) continue;
      rowmax = std::max(rowmax, v[i * n + j]);
    }
    if (rowmax == -std::numeric_limits<double>::infinity()) {
      throw DegenerateRowError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) continue;  // weight stays exactly 0
      double e = std::exp(v[i * n + j] - rowmax);
      out[i * n + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
  }
  bool needs_grad = x.requires_grad();
  Tensor result = make_output({m, n}, std::move(out), needs_grad);
  if (needs_grad) {
    // dx_j = y_j * (dy_j - sum_k y_k dy_k); masked entries have y == 0 so
    // their slots receive and emit no gradient.
    tape.record({{x.impl()},
                 result.impl(),
                 [m, n](const Tape::Node& node) {
                   const auto& y = node.output->values;
                   const auto& dy = node.output->grad;
                   auto& dx = grad_buffer(node.inputs[0]);
                   for (std::size_t i = 0; i < m; ++i) {
                     double dot = 0.0;
                     for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * dy[i * n + j];
                     for (std::size_t j = 0; j < n; ++j) {
                       dx[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot);
                     }
                   }
                 }});
  }
  return result;
}

}  // namespace

Tensor softmax_rows(Tape& tape, const Tensor& x) { return softmax_rows_impl(tape, x, nullptr); }

Tensor softmax_rows(Tape& tape, const Tensor& x, const std::vector<bool>& mask) {
  return softmax_rows_impl(tape, x, &mask);
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: needs at least one part");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != d) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                       " vs " + shape_str(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  bool needs_grad = false;
  for (const Tensor& p : parts) needs_grad = needs_grad || p.requires_grad();
  Tensor result = make_output({total, d}, std::move(out), needs_grad);
  if (needs_grad) {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::vector<std::size_t> lengths;
    for (const Tensor& p : parts) {
      inputs.push_back(p.impl());
      lengths.push_back(p.rows());
    }
    tape.record({std::move(inputs),
                 result.impl(),
                 [lengths, d](const Tape::Node& node) {
                   const auto& dout = node.output->grad;
                   std::size_t offset = 0;
                   for (std::size_t p = 0; p < node.inputs.size(); ++p) {
                     auto& dpart = grad_buffer(node.inputs[p]);
                     const std::size_t count = lengths[p] * d;
                     for (std::size_t i = 0; i < count; ++i) dpart[i] += dout[offset + i];
                     offset += count;
                   }
                 }});
  }
  return result;
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  if (count == 0 || begin + count > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of bounds for " +
                     shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(x.values().begin() + begin * d, x.values().begin() + (begin + count) * d);
  bool needs_grad = x.requires_grad();
  Tensor result = make_output({count, d}, std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl()},
                 result.impl(),
                 [begin, count, d](const Tape::Node& node) {
                   auto& dx = grad_buffer(node.inputs[0]);
                   const auto& dout = node.output->grad;
                   for (std::size_t i = 0; i < count * d; ++i) dx[begin * d + i] += dout[i];
                 }});
  }
  return result;
}

std::vector<Tensor> split_rows(Tape& tape, const Tensor& x,
                               const std::vector<std::size_t>& lengths) {
  require_matrix(x, "split_rows");
  std::size_t total = 0;
  for (std::size_t len : lengths) {
    if (len == 0) throw ShapeError("split_rows: lengths must be positive");
    total += len;
  }
  if (total != x.rows()) {
    throw ShapeError("split_rows: lengths sum to " + std::to_string(total) + " but tensor is " +
                     shape_str(x.shape()));
  }
  std::vector<Tensor> parts;
  parts.reserve(lengths.size());
  std::size_t offset = 0;
  for (std::size_t len : lengths) {
    parts.push_back(slice_rows(tape, x, offset, len));
    offset += len;
  }
  return parts;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: needs at least one part");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t col_offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t d = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.values().data() + i * d, d, out.data() + i * total + col_offset);
    }
    col_offset += d;
  }
  bool needs_grad = false;
  for (const Tensor& p : parts) needs_grad = needs_grad || p.requires_grad();
  Tensor result = make_output({m, total}, std::move(out), needs_grad);
  if (needs_grad) {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
      inputs.push_back(p.impl());
      widths.push_back(p.cols());
    }
    tape.record({std::move(inputs),
                 result.impl(),
                 [widths, m, total](const Tape::Node& node) {
                   const auto& dout = node.output->grad;
                   std::size_t col_offset = 0;
                   for (std::size_t p = 0; p < node.inputs.size(); ++p) {
                     auto& dpart = grad_buffer(node.inputs[p]);
                     const std::size_t d = widths[p];
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t j = 0; j < d; ++j) {
                         dpart[i * d + j] += dout[i * total + col_offset + j];
                       }
                     }
                     col_offset += d;
                   }
                 }});
  }
  return result;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  if (count == 0 || begin + count > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of bounds for " +
                     shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(x.values().data() + i * n + begin, count, out.data() + i * count);
  }
  bool needs_grad = x.requires_grad();
  Tensor result = make_output({m, count}, std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl()},
                 result.impl(),
                 [begin, count, m, n](const Tape::Node& node) {
                   auto& dx = grad_buffer(node.inputs[0]);
                   const auto& dout = node.output->grad;
                   for (std::size_t i = 0; i < m; ++i) {
                     for (std::size_t j = 0; j < count; ++j) {
                       dx[i * n + begin + j] += dout[i * count + j];
                     }
                   }
                 }});
  }
  return result;
}

namespace {

enum class BinaryOp { kAdd, kSub, kMul };

Tensor binary_elementwise(Tape& tape, const Tensor& a, const Tensor& b, BinaryOp op,
                          const char* name) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(name) + ": undefined operand");
  require_same_shape(a, b, name);
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  switch (op) {
    case BinaryOp::kAdd:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
      break;
    case BinaryOp::kSub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
      break;
    case BinaryOp::kMul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
      break;
  }
  bool needs_grad = any_requires_grad({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{a.impl(), b.impl()},
                 result.impl(),
                 [op, n](const Tape::Node& node) {
                   const auto& dout = node.output->grad;
                   auto& da = grad_buffer(node.inputs[0]);
                   auto& db = grad_buffer(node.inputs[1]);
                   switch (op) {
                     case BinaryOp::kAdd:
                       for (std::size_t i = 0; i < n; ++i) {
                         da[i] += dout[i];
                         db[i] += dout[i];
                       }
                       break;
                     case BinaryOp::kSub:
                       for (std::size_t i = 0; i < n; ++i) {
                         da[i] += dout[i];
                         db[i] -= dout[i];
                       }
                       break;
                     case BinaryOp::kMul:
                       for (std::size_t i = 0; i < n; ++i) {
                         da[i] += node.inputs[1]->values[i] * dout[i];
                         db[i] += node.inputs[0]->values[i] * dout[i];
                       }
                       break;
                   }
                 }});
  }
  return result;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(tape, a, b, BinaryOp::kAdd, "add");
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(tape, a, b, BinaryOp::kSub, "sub");
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(tape, a, b, BinaryOp::kMul, "mul");
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = c * x.values()[i];
  bool needs_grad = x.requires_grad();
  Tensor result = make_output(x.shape(), std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl()},
                 result.impl(),
                 [c, n](const Tape::Node& node) {
                   auto& dx = grad_buffer(node.inputs[0]);
                   for (std::size_t i = 0; i < n; ++i) dx[i] += c * node.output->grad[i];
                 }});
  }
  return result;
}

Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s) {
  if (s.size() != 1) {
    throw ShapeError("scale_by: scale must be a scalar tensor, got " + shape_str(s.shape()));
  }
  const double c = s.values()[0];
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = c * x.values()[i];
  bool needs_grad = any_requires_grad({&x, &s});
  Tensor result = make_output(x.shape(), std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl(), s.impl()},
                 result.impl(),
                 [c, n](const Tape::Node& node) {
                   const auto& dout = node.output->grad;
                   auto& dx = grad_buffer(node.inputs[0]);
                   auto& ds = grad_buffer(node.inputs[1]);
                   double acc = 0.0;
                   for (std::size_t i = 0; i < n; ++i) {
                     dx[i] += c * dout[i];
                     acc += node.inputs[0]->values[i] * dout[i];
                   }
                   ds[0] += acc;
                 }});
  }
  return result;
}

Tensor relu(Tape& tape, const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  bool needs_grad = x.requires_grad();
  Tensor result = make_output(x.shape(), std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl()},
                 result.impl(),
                 [n](const Tape::Node& node) {
                   auto& dx = grad_buffer(node.inputs[0]);
                   for (std::size_t i = 0; i < n; ++i) {
                     if (node.inputs[0]->values[i] > 0.0) dx[i] += node.output->grad[i];
                   }
                 }});
  }
  return result;
}

Tensor tanh_act(Tape& tape, const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x.values()[i]);
  bool needs_grad = x.requires_grad();
  Tensor result = make_output(x.shape(), std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl()},
                 result.impl(),
                 [n](const Tape::Node& node) {
                   auto& dx = grad_buffer(node.inputs[0]);
                   for (std::size_t i = 0; i < n; ++i) {
                     const double y = node.output->values[i];
                     dx[i] += (1.0 - y * y) * node.output->grad[i];
                   }
                 }});
  }
  return result;
}

Tensor add_row_vector(Tape& tape, const Tensor& x, const Tensor& v) {
  require_matrix(x, "add_row_vector");
  require_matrix(v, "add_row_vector");
  if (v.rows() != 1 || v.cols() != x.cols()) {
    throw ShapeError("add_row_vector: vector " + shape_str(v.shape()) + " does not broadcast to " +
                     shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), d = x.cols();
  std::vector<double> out(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.values()[i * d + j] + v.values()[j];
  }
  bool needs_grad = any_requires_grad({&x, &v});
  Tensor result = make_output({m, d}, std::move(out), needs_grad);
  if (needs_grad) {
    tape.record({{x.impl(), v.impl()},
                 result.impl(),
                 [m, d](const Tape::Node& node) {
                   const auto& dout = node.output->grad;
                   auto& dx = grad_buffer(node.inputs[0]);
                   auto& dv = grad_buffer(node.inputs[1]);
                   for (std::size_t i = 0; i < m; ++i) {
                     for (std::size_t j = 0; j < d; ++j) {
                       dx[i * d + j] += dout[i * d + j];
                       dv[j] += dout[i * d + j];
                     }
                   }
                 }});
  }
  return result;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_matrix(x, "layer_norm");
  require_matrix(gain, "layer_norm");
  require_matrix(bias, "layer_norm");
  const std::size_t m = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match row width of " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(m * d);
  std::vector<double> inv_std(m);
  std::vector<double> mean(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x.values()[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.values()[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (x.values()[i * d + j] - mu) * is;
      out[i * d + j] = xhat * gain.values()[j] + bias.values()[j];
    }
  }
  bool needs_grad = any_requires_grad({&x, &gain, &bias});
  Tensor result = make_output({m, d}, std::move(out), needs_grad);
  if (needs_grad) {
    tape.record(
        {{x.impl(), gain.impl(), bias.impl()},
         result.impl(),
         [m, d, mean, inv_std](const Tape::Node& node) {
           const auto& dout = node.output->grad;
           const auto& xv = node.inputs[0]->values;
           const auto& gv = node.inputs[1]->values;
           auto& dx = grad_buffer(node.inputs[0]);
           auto& dg = grad_buffer(node.inputs[1]);
           auto& db = grad_buffer(node.inputs[2]);
           const double dn = static_cast<double>(d);
           for (std::size_t i = 0; i < m; ++i) {
             // dxhat = dy * g; dx = is * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
             double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
             for (std::size_t j = 0; j < d; ++j) {
               const double xhat = (xv[i * d + j] - mean[i]) * inv_std[i];
               const double dxhat = dout[i * d + j] * gv[j];
               sum_dxhat += dxhat;
               sum_dxhat_xhat += dxhat * xhat;
               dg[j] += dout[i * d + j] * xhat;
               db[j] += dout[i * d + j];
             }
             for (std::size_t j = 0; j < d; ++j) {
               const double xhat = (xv[i * d + j] - mean[i]) * inv_std[i];
               const double dxhat = dout[i * d + j] * gv[j];
               dx[i * d + j] +=
                   inv_std[i] * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
             }
           }
         }});
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  bool needs_grad = x.requires_grad();
  Tensor result = make_output({1}, {total}, needs_grad);
  if (needs_grad) {
    tape.record({{x.impl()},
                 result.impl(),
                 [](const Tape::Node& node) {
                   auto& dx = grad_buffer(node.inputs[0]);
                   const double g = node.output->grad[0];
                   for (double& v : dx) v += g;
                 }});
  }
  return result;
}

}  // namespace cfsum
