#include "cfsum/attention.hpp"

#include <cmath>
#include <string>

#include "cfsum/errors.hpp"

namespace cfsum {

std::size_t PaddingMask::count_valid() const {
  std::size_t n = 0;
  for (bool b : valid) n += b ? 1 : 0;
  return n;
}

PaddingMask concat_masks(const std::vector<PaddingMask>& parts) {
  PaddingMask out;
  for (const PaddingMask& p : parts) out.valid.insert(out.valid.end(), p.valid.begin(), p.valid.end());
  return out;
}

void AttentionParams::validate() const {
  if (n_heads == 0) throw ConfigError("attention: n_heads must be positive");
  if (!w_q.defined() || !w_k.defined() || !w_v.defined()) {
    throw ConfigError("attention: projection weights are undefined");
  }
  if (w_q.cols() != w_k.cols() || w_q.cols() != w_v.cols()) {
    throw ShapeError("attention: projections disagree on d_model: w_q " + shape_str(w_q.shape()) +
                     ", w_k " + shape_str(w_k.shape()) + ", w_v " + shape_str(w_v.shape()));
  }
  if (w_k.rows() != w_v.rows()) {
    throw ShapeError("attention: w_k " + shape_str(w_k.shape()) + " and w_v " +
                     shape_str(w_v.shape()) + " must share the key/value input width");
  }
  if (w_q.cols() % n_heads != 0) {
    throw ConfigError("attention: d_model " + std::to_string(w_q.cols()) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (use_output_proj) {
    if (!w_o.defined() || w_o.rows() != w_q.cols() || w_o.cols() != w_q.cols()) {
      throw ShapeError("attention: w_o must be d_model x d_model, got " +
                       (w_o.defined() ? shape_str(w_o.shape()) : std::string("<undefined>")));
    }
  }
}

Tensor multi_head_attention(Tape& tape, const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const AttentionParams& params, const PaddingMask& key_mask) {
  params.validate();
  if (k_in.rows() != v_in.rows()) {
    throw ShapeError("attention: key rows " + shape_str(k_in.shape()) + " != value rows " +
                     shape_str(v_in.shape()));
  }
  if (q_in.cols() != params.w_q.rows()) {
    throw ShapeError("attention: query width " + shape_str(q_in.shape()) +
                     " does not match w_q " + shape_str(params.w_q.shape()));
  }
  if (k_in.cols() != params.w_k.rows()) {
    throw ShapeError("attention: key width " + shape_str(k_in.shape()) + " does not match w_k " +
                     shape_str(params.w_k.shape()));
  }
  if (key_mask.size() != k_in.rows()) {
    throw ShapeError("attention: mask length " + std::to_string(key_mask.size()) +
                     " != key count " + std::to_string(k_in.rows()));
  }
  if (!key_mask.any_valid()) {
    throw DegenerateRowError("attention: every key position is masked out");
  }

  const std::size_t n_q = q_in.rows();
  const std::size_t n_k = k_in.rows();
  const std::size_t d_k = params.d_k();

  Tensor q = matmul(tape, q_in, params.w_q);
  Tensor k = matmul(tape, k_in, params.w_k);
  Tensor v = matmul(tape, v_in, params.w_v);

  // Key validity replicated across query rows.
  std::vector<bool> mask(n_q * n_k);
  for (std::size_t i = 0; i < n_q; ++i) {
    for (std::size_t j = 0; j < n_k; ++j) mask[i * n_k + j] = key_mask.valid[j];
  }

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(params.n_heads);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
  for (std::size_t h = 0; h < params.n_heads; ++h) {
    Tensor q_h = slice_cols(tape, q, h * d_k, d_k);
    Tensor k_h = slice_cols(tape, k, h * d_k, d_k);
    Tensor v_h = slice_cols(tape, v, h * d_k, d_k);
    Tensor logits = scale(tape, matmul(tape, q_h, transpose(tape, k_h)), inv_sqrt_dk);
    Tensor weights = softmax_rows(tape, logits, mask);
    head_outputs.push_back(matmul(tape, weights, v_h));
  }
  Tensor out = params.n_heads == 1 ? head_outputs.front() : concat_cols(tape, head_outputs);
  if (params.use_output_proj) out = matmul(tape, out, params.w_o);
  return out;
}

Tensor sinusoidal_positional_encoding(std::size_t n, std::size_t d) {
  if (d % 2 != 0) {
    throw ConfigError("positional encoding: dimension must be even, got " + std::to_string(d));
  }
  std::vector<double> values(n * d);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double rate =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(p) * rate;
      values[p * d + 2 * i] = std::sin(angle);
      values[p * d + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({n, d}, std::move(values));
}

}  // namespace cfsum
