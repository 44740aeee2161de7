#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfsum/attention.hpp"
#include "cfsum/sample.hpp"
#include "cfsum/tensor.hpp"

namespace cfsum {

// Architecture hyperparameters plus the module/modality switches used for
// ablation runs. Disabled modules contribute no parameters; their stage of
// the forward pass becomes a passthrough.
struct ModelConfig {
  std::size_t d_video = 0;
  std::size_t d_audio = 0;
  std::size_t d_text = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 8;
  std::size_t ffn_hidden = 0;  // 0 means 4 * d_model
  std::size_t n_autoencoder_layers = 1;
  bool use_layer_norm = true;
  bool use_output_proj = true;
  std::set<Modality> enabled_modalities = {Modality::kVideo, Modality::kAudio, Modality::kText};
  std::string activation = "relu";  // "relu" or "tanh"
  double w_tv_init = 2.0;
  double w_ta_init = 1.0;
  bool interaction_weights_learnable = true;
  bool use_autoencoder = true;  // the intra-modal self-attention stage
  bool use_fusion_module = true;
  bool use_interaction_module = true;
  std::uint64_t seed = 0;

  std::size_t resolved_ffn_hidden() const { return ffn_hidden ? ffn_hidden : 4 * d_model; }
  bool enabled(Modality m) const { return enabled_modalities.count(m) > 0; }
  std::size_t input_dim(Modality m) const;
  void validate() const;
};

struct LayerNormParams {
  Tensor gain;  // 1 x d
  Tensor bias;  // 1 x d
};

struct MlpParams {
  Tensor w1;  // d_in x hidden
  Tensor b1;  // 1 x hidden
  Tensor w2;  // hidden x d_out
  Tensor b2;  // 1 x d_out
};

// Intra-modal enrichment at the native feature width followed by the
// projection into the shared width. With the autoencoder stage disabled the
// layer list is empty and only the projection runs.
struct AutoencoderBlock {
  std::vector<AttentionParams> attn_layers;
  std::vector<LayerNormParams> norms;  // parallel to attn_layers when layer norm is on
  MlpParams proj;                      // native dim -> ffn_hidden -> d_model
};

struct FusionBlock {
  AttentionParams attn;  // joint self-attention at d_model
  LayerNormParams norm;
  std::map<Modality, MlpParams> ffn;  // per-modality post-split FFN (residual)
};

struct InteractionBlock {
  AttentionParams text_to_video;
  std::optional<AttentionParams> text_to_audio;  // present iff audio enabled
  Tensor w_tv;
  Tensor w_ta;  // undefined when audio disabled
};

struct SaliencyHead {
  Tensor w;  // d_model x 1
  Tensor b;  // 1 x 1
};

// A named parameter tensor. init_bound > 0 for tensors drawn from
// uniform(-init_bound, +init_bound); 0 for constant-initialized ones
// (layer-norm affine, interaction weights).
struct ParamInfo {
  std::string name;
  Tensor tensor;
  double init_bound = 0.0;
};

struct CFSumModel {
  ModelConfig config;
  std::map<Modality, AutoencoderBlock> encoders;  // one per enabled modality
  std::optional<FusionBlock> fusion;
  std::optional<InteractionBlock> interaction;
  SaliencyHead head;

  // Learnable parameters in a fixed, documented order.
  std::vector<ParamInfo> parameters() const;
  // Everything persisted in a checkpoint: parameters plus frozen scalars.
  std::vector<ParamInfo> state_tensors() const;
  void zero_grads() const;
  bool all_finite() const;
};

// Clip scores straight off the head, still attached to the tape so the loss
// can backpropagate through them.
struct SaliencyPrediction {
  Tensor scores;            // n_c x 1
  std::vector<bool> valid;  // per-clip validity

  std::size_t n_clips() const { return scores.rows(); }
  std::vector<double> flat() const;
};

// One modality stream between pipeline stages.
struct Stream {
  Tensor features;
  PaddingMask mask;
};

// Video always present; audio/text only when enabled and supplied. Absent
// modalities contribute zero-length segments to the fusion stage, i.e. they
// are simply left out of the joint sequence.
struct Streams {
  Stream video;
  std::optional<Stream> audio;
  std::optional<Stream> text;
};

CFSumModel init_model(const ModelConfig& config);

// Self-attention enrichment (residual, optional layer norm) at the native
// width, projection MLP into d_model, then the sinusoidal position table of
// the sequence length is added.
Tensor modal_autoencoder_forward(Tape& tape, const FeatureSequence& f, const CFSumModel& model);

// Joint self-attention over the concatenated streams with residual and
// optional layer norm, split back to the original lengths, then a
// per-modality FFN with residual. Passthrough when the module is disabled.
Streams modal_fusion_forward(Tape& tape, const Streams& aug, const CFSumModel& model);

// Cross-attention with the clip-aligned streams as queries and text as
// keys/values, combined as w_tv * tv_att + w_ta * ta_att. Without text each
// branch attends over its own stream; without audio only the video branch
// contributes. Returns the video-stream features unchanged when the module
// is disabled.
Tensor feature_interaction_forward(Tape& tape, const Streams& fused, const CFSumModel& model);

SaliencyPrediction saliency_head_forward(Tape& tape, const Tensor& z_out,
                                         const PaddingMask& clip_mask, const CFSumModel& model);

// Mean squared error over valid clips only.
Tensor mse_loss(Tape& tape, const SaliencyPrediction& pred, const std::vector<double>& truth);

SaliencyPrediction cfsum_forward(Tape& tape, const MultiModalSample& sample,
                                 const CFSumModel& model);

std::size_t count_params(const CFSumModel& model);
// Counts keyed by top-level component: "autoencoder", "fusion",
// "interaction", "head".
std::map<std::string, std::size_t> count_params_by_component(const CFSumModel& model);

}  // namespace cfsum
