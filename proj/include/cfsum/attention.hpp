#pragma once

#include <cstddef>
#include <vector>

#include "cfsum/tensor.hpp"

namespace cfsum {

// Per-position validity flags for a variable-length sequence.
struct PaddingMask {
  std::vector<bool> valid;

  static PaddingMask all_valid(std::size_t n) { return PaddingMask{std::vector<bool>(n, true)}; }

  std::size_t size() const { return valid.size(); }
  std::size_t count_valid() const;
  bool any_valid() const { return count_valid() > 0; }
};

PaddingMask concat_masks(const std::vector<PaddingMask>& parts);

// Projection weights for one multi-head attention layer. Queries may come
// from a different feature width than keys/values; both are projected to
// d_model, which splits into n_heads slices of width d_k = d_model / n_heads.
struct AttentionParams {
  Tensor w_q;  // d_in_q  x d_model
  Tensor w_k;  // d_in_kv x d_model
  Tensor w_v;  // d_in_kv x d_model
  Tensor w_o;  // d_model x d_model (undefined when use_output_proj is false)
  std::size_t n_heads = 1;
  bool use_output_proj = true;

  std::size_t d_model() const { return w_q.cols(); }
  std::size_t d_k() const { return d_model() / n_heads; }
  void validate() const;
};

// Scaled dot-product multi-head attention over a single (unbatched) sequence
// pair. Key positions with mask false receive weight exactly 0; changing
// their features cannot change the output. The output always has q_in's row
// count.
Tensor multi_head_attention(Tape& tape, const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const AttentionParams& params, const PaddingMask& key_mask);

// Fixed sinusoidal position table: row p holds interleaved
// sin(p / 10000^(2i/d)), cos(p / 10000^(2i/d)). d must be even.
Tensor sinusoidal_positional_encoding(std::size_t n, std::size_t d);

}  // namespace cfsum
