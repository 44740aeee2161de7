#include "cfsum/model.hpp"

#include <algorithm>
#include <cmath>

#include "cfsum/errors.hpp"
#include "cfsum/rng.hpp"

namespace cfsum {

const char* to_string(Modality m) {
  switch (m) {
    case Modality::kVideo: return "video";
    case Modality::kAudio: return "audio";
    case Modality::kText: return "text";
  }
  return "?";
}

void FeatureSequence::validate() const {
  if (!features.defined() || features.ndim() != 2) {
    throw ShapeError("feature sequence: features must be a matrix");
  }
  if (mask.size() != length()) {
    throw ShapeError("feature sequence: mask length " + std::to_string(mask.size()) +
                     " != sequence length " + std::to_string(length()));
  }
  if (!mask.any_valid()) {
    throw ContractError(std::string("feature sequence (") + to_string(modality) +
                        "): no valid positions");
  }
}

void MultiModalSample::validate() const {
  video.validate();
  if (video.modality != Modality::kVideo) throw ContractError("sample: video slot holds " +
                                                              std::string(to_string(video.modality)));
  if (audio) {
    audio->validate();
    if (audio->length() != video.length()) {
      throw ShapeError("sample " + sample_id + ": audio length " +
                       std::to_string(audio->length()) + " != clip count " +
                       std::to_string(video.length()));
    }
    if (audio->mask.valid != video.mask.valid) {
      throw ContractError("sample " + sample_id + ": audio validity differs from clip validity");
    }
  }
  if (text) text->validate();
  if (saliency.size() != video.length()) {
    throw ShapeError("sample " + sample_id + ": " + std::to_string(saliency.size()) +
                     " labels for " + std::to_string(video.length()) + " clips");
  }
  for (double s : saliency) {
    if (!std::isfinite(s)) throw ContractError("sample " + sample_id + ": non-finite label");
  }
}

std::size_t ModelConfig::input_dim(Modality m) const {
  switch (m) {
    case Modality::kVideo: return d_video;
    case Modality::kAudio: return d_audio;
    case Modality::kText: return d_text;
  }
  return 0;
}

void ModelConfig::validate() const {
  if (d_model == 0) throw ConfigError("model config: d_model must be positive");
  if (d_model % 2 != 0) throw ConfigError("model config: d_model must be even for the position table");
  if (n_heads == 0) throw ConfigError("model config: n_heads must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!enabled(Modality::kVideo)) throw ConfigError("model config: video modality is mandatory");
  for (Modality m : enabled_modalities) {
    if (input_dim(m) == 0) {
      throw ConfigError(std::string("model config: d_") + to_string(m) +
                        " must be positive for an enabled modality");
    }
    if (use_autoencoder && n_autoencoder_layers > 0 && input_dim(m) % n_heads != 0) {
      throw ConfigError(std::string("model config: d_") + to_string(m) + " = " +
                        std::to_string(input_dim(m)) + " not divisible by n_heads " +
                        std::to_string(n_heads));
    }
  }
  if (activation != "relu" && activation != "tanh") {
    throw ConfigError("model config: unknown activation '" + activation + "'");
  }
  if (!std::isfinite(w_tv_init) || !std::isfinite(w_ta_init)) {
    throw ConfigError("model config: interaction weight inits must be finite");
  }
  if (n_autoencoder_layers == 0 && use_autoencoder) {
    throw ConfigError("model config: n_autoencoder_layers must be >= 1");
  }
}

// --- Initialization ----------------------------------------------------------

namespace {

Tensor draw_uniform(std::uint64_t seed, const std::string& name, std::size_t rows,
                    std::size_t cols, double bound) {
  Rng rng = Rng::keyed(seed, name);
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor({rows, cols}, std::move(values), /*requires_grad=*/true);
}

struct ParamBuilder {
  std::uint64_t seed;
  std::vector<ParamInfo>* registry = nullptr;  // set when collecting, null when initializing

  Tensor drawn(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return draw_uniform(seed, name, rows, cols, bound);
  }
};

AttentionParams make_attention(ParamBuilder& pb, const std::string& prefix, std::size_t d_in_q,
                               std::size_t d_in_kv, std::size_t d_model, std::size_t n_heads,
                               bool use_output_proj) {
  AttentionParams p;
  p.n_heads = n_heads;
  p.use_output_proj = use_output_proj;
  p.w_q = pb.drawn(prefix + ".w_q", d_in_q, d_model, d_in_q);
  p.w_k = pb.drawn(prefix + ".w_k", d_in_kv, d_model, d_in_kv);
  p.w_v = pb.drawn(prefix + ".w_v", d_in_kv, d_model, d_in_kv);
  if (use_output_proj) p.w_o = pb.drawn(prefix + ".w_o", d_model, d_model, d_model);
  return p;
}

MlpParams make_mlp(ParamBuilder& pb, const std::string& prefix, std::size_t d_in,
                   std::size_t hidden, std::size_t d_out) {
  MlpParams p;
  p.w1 = pb.drawn(prefix + ".w1", d_in, hidden, d_in);
  p.b1 = pb.drawn(prefix + ".b1", 1, hidden, d_in);
  p.w2 = pb.drawn(prefix + ".w2", hidden, d_out, hidden);
  p.b2 = pb.drawn(prefix + ".b2", 1, d_out, hidden);
  return p;
}

LayerNormParams make_layer_norm(std::size_t d) {
  LayerNormParams p;
  p.gain = Tensor::full({1, d}, 1.0, /*requires_grad=*/true);
  p.bias = Tensor::zeros({1, d}, /*requires_grad=*/true);
  return p;
}

const std::vector<Modality> kModalityOrder = {Modality::kVideo, Modality::kAudio, Modality::kText};

}  // namespace

CFSumModel init_model(const ModelConfig& config) {
  config.validate();
  CFSumModel model;
  model.config = config;
  ParamBuilder pb{config.seed};
  const std::size_t dm = config.d_model;
  const std::size_t ffn = config.resolved_ffn_hidden();

  for (Modality m : kModalityOrder) {
    if (!config.enabled(m)) continue;
    const std::string prefix = std::string("autoencoder.") + to_string(m);
    const std::size_t d = config.input_dim(m);
    AutoencoderBlock block;
    if (config.use_autoencoder) {
      for (std::size_t layer = 0; layer < config.n_autoencoder_layers; ++layer) {
        const std::string lp = prefix + ".layer" + std::to_string(layer);
        block.attn_layers.push_back(
            make_attention(pb, lp + ".attn", d, d, d, config.n_heads, config.use_output_proj));
        if (config.use_layer_norm) block.norms.push_back(make_layer_norm(d));
      }
    }
    block.proj = make_mlp(pb, prefix + ".proj", d, ffn, dm);
    model.encoders.emplace(m, std::move(block));
  }

  if (config.use_fusion_module) {
    FusionBlock fusion;
    fusion.attn = make_attention(pb, "fusion.attn", dm, dm, dm, config.n_heads,
                                 config.use_output_proj);
    if (config.use_layer_norm) fusion.norm = make_layer_norm(dm);
    for (Modality m : kModalityOrder) {
      if (!config.enabled(m)) continue;
      fusion.ffn.emplace(m, make_mlp(pb, std::string("fusion.ffn.") + to_string(m), dm, ffn, dm));
    }
    model.fusion = std::move(fusion);
  }

  if (config.use_interaction_module) {
    InteractionBlock inter;
    inter.text_to_video = make_attention(pb, "interaction.text_video", dm, dm, dm, config.n_heads,
                                         config.use_output_proj);
    inter.w_tv = Tensor::scalar(config.w_tv_init, config.interaction_weights_learnable);
    if (config.enabled(Modality::kAudio)) {
      inter.text_to_audio = make_attention(pb, "interaction.text_audio", dm, dm, dm,
                                           config.n_heads, config.use_output_proj);
      inter.w_ta = Tensor::scalar(config.w_ta_init, config.interaction_weights_learnable);
    }
    model.interaction = std::move(inter);
  }

  model.head.w = pb.drawn("head.w", dm, 1, dm);
  model.head.b = pb.drawn("head.b", 1, 1, dm);
  return model;
}

// --- Parameter registry -------------------------------------------------------

namespace {

void collect_attention(std::vector<ParamInfo>& out, const std::string& prefix,
                       const AttentionParams& p) {
  const auto bound = [](const Tensor& t) { return 1.0 / std::sqrt(static_cast<double>(t.rows())); };
  out.push_back({prefix + ".w_q", p.w_q, bound(p.w_q)});
  out.push_back({prefix + ".w_k", p.w_k, bound(p.w_k)});
  out.push_back({prefix + ".w_v", p.w_v, bound(p.w_v)});
  if (p.use_output_proj) out.push_back({prefix + ".w_o", p.w_o, bound(p.w_o)});
}

void collect_mlp(std::vector<ParamInfo>& out, const std::string& prefix, const MlpParams& p) {
  const double b1 = 1.0 / std::sqrt(static_cast<double>(p.w1.rows()));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(p.w2.rows()));
  out.push_back({prefix + ".w1", p.w1, b1});
  out.push_back({prefix + ".b1", p.b1, b1});
  out.push_back({prefix + ".w2", p.w2, b2});
  out.push_back({prefix + ".b2", p.b2, b2});
}

void collect_norm(std::vector<ParamInfo>& out, const std::string& prefix,
                  const LayerNormParams& p) {
  out.push_back({prefix + ".gain", p.gain, 0.0});
  out.push_back({prefix + ".bias", p.bias, 0.0});
}

std::vector<ParamInfo> collect_state(const CFSumModel& model, bool learnable_only) {
  std::vector<ParamInfo> out;
  for (Modality m : kModalityOrder) {
    auto it = model.encoders.find(m);
    if (it == model.encoders.end()) continue;
    const std::string prefix = std::string("autoencoder.") + to_string(m);
    const AutoencoderBlock& block = it->second;
    for (std::size_t layer = 0; layer < block.attn_layers.size(); ++layer) {
      const std::string lp = prefix + ".layer" + std::to_string(layer);
      collect_attention(out, lp + ".attn", block.attn_layers[layer]);
      if (layer < block.norms.size()) collect_norm(out, lp + ".norm", block.norms[layer]);
    }
    collect_mlp(out, prefix + ".proj", block.proj);
  }
  if (model.fusion) {
    collect_attention(out, "fusion.attn", model.fusion->attn);
    if (model.fusion->norm.gain.defined()) collect_norm(out, "fusion.norm", model.fusion->norm);
    for (const auto& [m, ffn] : model.fusion->ffn) {
      collect_mlp(out, std::string("fusion.ffn.") + to_string(m), ffn);
    }
  }
  if (model.interaction) {
    collect_attention(out, "interaction.text_video", model.interaction->text_to_video);
    if (model.interaction->text_to_audio) {
      collect_attention(out, "interaction.text_audio", *model.interaction->text_to_audio);
    }
    if (learnable_only ? model.interaction->w_tv.requires_grad() : true) {
      out.push_back({"interaction.w_tv", model.interaction->w_tv, 0.0});
    }
    if (model.interaction->w_ta.defined() &&
        (learnable_only ? model.interaction->w_ta.requires_grad() : true)) {
      out.push_back({"interaction.w_ta", model.interaction->w_ta, 0.0});
    }
  }
  const double hb = 1.0 / std::sqrt(static_cast<double>(model.head.w.rows()));
  out.push_back({"head.w", model.head.w, hb});
  out.push_back({"head.b", model.head.b, hb});
  return out;
}

}  // namespace

std::vector<ParamInfo> CFSumModel::parameters() const { return collect_state(*this, true); }

std::vector<ParamInfo> CFSumModel::state_tensors() const { return collect_state(*this, false); }

void CFSumModel::zero_grads() const {
  for (const ParamInfo& p : collect_state(*this, false)) {
    Tensor t = p.tensor;
    t.clear_grad();
  }
}

bool CFSumModel::all_finite() const {
  for (const ParamInfo& p : collect_state(*this, false)) {
    if (!p.tensor.all_finite()) return false;
  }
  return true;
}

std::vector<double> SaliencyPrediction::flat() const { return scores.values(); }

// --- Forward passes -----------------------------------------------------------

namespace {

Tensor activation(Tape& tape, const Tensor& x, const std::string& kind) {
  return kind == "tanh" ? tanh_act(tape, x) : relu(tape, x);
}

Tensor mlp_forward(Tape& tape, const Tensor& x, const MlpParams& p, const std::string& act) {
  Tensor h = activation(tape, add_row_vector(tape, matmul(tape, x, p.w1), p.b1), act);
  return add_row_vector(tape, matmul(tape, h, p.w2), p.b2);
}

}  // namespace

Tensor modal_autoencoder_forward(Tape& tape, const FeatureSequence& f, const CFSumModel& model) {
  f.validate();
  if (!model.config.enabled(f.modality)) {
    throw ContractError(std::string("autoencoder: modality ") + to_string(f.modality) +
                        " is disabled in this configuration");
  }
  if (f.dim() != model.config.input_dim(f.modality)) {
    throw ShapeError(std::string("autoencoder: ") + to_string(f.modality) + " features " +
                     shape_str(f.features.shape()) + " do not match configured dim " +
                     std::to_string(model.config.input_dim(f.modality)));
  }
  const AutoencoderBlock& block = model.encoders.at(f.modality);
  Tensor x = f.features;
  for (std::size_t layer = 0; layer < block.attn_layers.size(); ++layer) {
    Tensor att = multi_head_attention(tape, x, x, x, block.attn_layers[layer], f.mask);
    x = add(tape, x, att);
    if (layer < block.norms.size()) {
      x = layer_norm(tape, x, block.norms[layer].gain, block.norms[layer].bias);
    }
  }
  x = mlp_forward(tape, x, block.proj, model.config.activation);
  Tensor pe = sinusoidal_positional_encoding(f.length(), model.config.d_model);
  return add(tape, x, pe);
}

Streams modal_fusion_forward(Tape& tape, const Streams& aug, const CFSumModel& model) {
  const std::size_t dm = model.config.d_model;
  auto check_width = [dm](const Stream& s, const char* name) {
    if (s.features.cols() != dm) {
      throw ShapeError(std::string("fusion: ") + name + " stream " +
                       shape_str(s.features.shape()) + " does not have width " +
                       std::to_string(dm));
    }
  };
  check_width(aug.video, "video");
  if (aug.audio) check_width(*aug.audio, "audio");
  if (aug.text) check_width(*aug.text, "text");

  if (!model.fusion) return aug;  // module ablated: passthrough

  std::vector<Tensor> parts = {aug.video.features};
  std::vector<PaddingMask> masks = {aug.video.mask};
  std::vector<std::size_t> lengths = {aug.video.mask.size()};
  if (aug.audio) {
    parts.push_back(aug.audio->features);
    masks.push_back(aug.audio->mask);
    lengths.push_back(aug.audio->mask.size());
  }
  if (aug.text) {
    parts.push_back(aug.text->features);
    masks.push_back(aug.text->mask);
    lengths.push_back(aug.text->mask.size());
  }

  Tensor joint = concat_rows(tape, parts);
  PaddingMask joint_mask = concat_masks(masks);
  Tensor att = multi_head_attention(tape, joint, joint, joint, model.fusion->attn, joint_mask);
  Tensor fused = add(tape, joint, att);
  if (model.fusion->norm.gain.defined()) {
    fused = layer_norm(tape, fused, model.fusion->norm.gain, model.fusion->norm.bias);
  }
  std::vector<Tensor> pieces = split_rows(tape, fused, lengths);

  auto enhance = [&](const Tensor& x, Modality m) {
    const MlpParams& ffn = model.fusion->ffn.at(m);
    return add(tape, x, mlp_forward(tape, x, ffn, model.config.activation));
  };

  Streams out;
  std::size_t idx = 0;
  out.video = Stream{enhance(pieces[idx++], Modality::kVideo), aug.video.mask};
  if (aug.audio) out.audio = Stream{enhance(pieces[idx++], Modality::kAudio), aug.audio->mask};
  if (aug.text) out.text = Stream{enhance(pieces[idx++], Modality::kText), aug.text->mask};
  return out;
}

Tensor feature_interaction_forward(Tape& tape, const Streams& fused, const CFSumModel& model) {
  if (!model.interaction) return fused.video.features;  // module ablated

  if (fused.audio && fused.audio->features.rows() != fused.video.features.rows()) {
    throw ShapeError("interaction: audio length " +
                     std::to_string(fused.audio->features.rows()) + " != video length " +
                     std::to_string(fused.video.features.rows()));
  }
  const InteractionBlock& inter = *model.interaction;

  // With text present the clip-aligned streams query the text tokens; without
  // text each branch falls back to self-attention over its own stream.
  Tensor tv_att;
  if (fused.text) {
    tv_att = multi_head_attention(tape, fused.video.features, fused.text->features,
                                  fused.text->features, inter.text_to_video, fused.text->mask);
  } else {
    tv_att = multi_head_attention(tape, fused.video.features, fused.video.features,
                                  fused.video.features, inter.text_to_video, fused.video.mask);
  }
  Tensor z_out = scale_by(tape, tv_att, inter.w_tv);

  if (fused.audio) {
    if (!inter.text_to_audio) {
      throw ContractError("interaction: audio stream supplied but the audio branch is disabled");
    }
    Tensor ta_att;
    if (fused.text) {
      ta_att = multi_head_attention(tape, fused.audio->features, fused.text->features,
                                    fused.text->features, *inter.text_to_audio, fused.text->mask);
    } else {
      ta_att = multi_head_attention(tape, fused.audio->features, fused.audio->features,
                                    fused.audio->features, *inter.text_to_audio,
                                    fused.audio->mask);
    }
    z_out = add(tape, z_out, scale_by(tape, ta_att, inter.w_ta));
  }
  return z_out;
}

SaliencyPrediction saliency_head_forward(Tape& tape, const Tensor& z_out,
                                         const PaddingMask& clip_mask, const CFSumModel& model) {
  if (z_out.cols() != model.config.d_model) {
    throw ShapeError("head: input " + shape_str(z_out.shape()) + " does not have width " +
                     std::to_string(model.config.d_model));
  }
  if (clip_mask.size() != z_out.rows()) {
    throw ShapeError("head: clip mask length " + std::to_string(clip_mask.size()) +
                     " != clip count " + std::to_string(z_out.rows()));
  }
  Tensor scores = add_row_vector(tape, matmul(tape, z_out, model.head.w), model.head.b);
  return SaliencyPrediction{scores, clip_mask.valid};
}

Tensor mse_loss(Tape& tape, const SaliencyPrediction& pred, const std::vector<double>& truth) {
  const std::size_t n = pred.n_clips();
  if (truth.size() != n) {
    throw ShapeError("mse_loss: " + std::to_string(truth.size()) + " labels for " +
                     std::to_string(n) + " predictions");
  }
  for (double t : truth) {
    if (!std::isfinite(t)) throw ContractError("mse_loss: non-finite label");
  }
  std::size_t n_valid = 0;
  std::vector<double> mask_values(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (pred.valid[i]) {
      mask_values[i] = 1.0;
      ++n_valid;
    }
  }
  if (n_valid == 0) throw ContractError("mse_loss: no valid clips");
  Tensor truth_t({n, 1}, std::vector<double>(truth));
  Tensor mask_t({n, 1}, std::move(mask_values));
  Tensor diff = sub(tape, pred.scores, truth_t);
  Tensor sq = mul(tape, diff, diff);
  Tensor masked = mul(tape, sq, mask_t);
  return scale(tape, sum(tape, masked), 1.0 / static_cast<double>(n_valid));
}

SaliencyPrediction cfsum_forward(Tape& tape, const MultiModalSample& sample,
                                 const CFSumModel& model) {
  sample.validate();
  const ModelConfig& cfg = model.config;

  Streams aug;
  aug.video = Stream{modal_autoencoder_forward(tape, sample.video, model), sample.video.mask};
  if (sample.audio && cfg.enabled(Modality::kAudio)) {
    aug.audio = Stream{modal_autoencoder_forward(tape, *sample.audio, model), sample.audio->mask};
  }
  if (sample.text && cfg.enabled(Modality::kText)) {
    aug.text = Stream{modal_autoencoder_forward(tape, *sample.text, model), sample.text->mask};
  }

  Streams fused = modal_fusion_forward(tape, aug, model);
  Tensor z_out = feature_interaction_forward(tape, fused, model);
  return saliency_head_forward(tape, z_out, sample.video.mask, model);
}

std::size_t count_params(const CFSumModel& model) {
  std::size_t total = 0;
  for (const ParamInfo& p : model.parameters()) total += p.tensor.size();
  return total;
}

std::map<std::string, std::size_t> count_params_by_component(const CFSumModel& model) {
  std::map<std::string, std::size_t> counts;
  for (const ParamInfo& p : model.parameters()) {
    const std::string component = p.name.substr(0, p.name.find('.'));
    counts[component] += p.tensor.size();
  }
  return counts;
}

}  // namespace cfsum
