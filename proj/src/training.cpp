#include "cfsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfsum/errors.hpp"
#include "cfsum/evaluation.hpp"
#include "cfsum/rng.hpp"

namespace cfsum {

void TrainConfig::validate() const {
  // lr 0 is allowed so a no-op training run can exercise the pipeline.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train config: learning_rate must be finite and >= 0");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("train config: betas must lie in [0, 1)");
  }
  if (eps <= 0.0) throw ConfigError("train config: eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
  if (clip_norm < 0.0) throw ConfigError("train config: clip_norm must be >= 0");
  if (eval_every == 0) throw ConfigError("train config: eval_every must be >= 1");
}

AdamState AdamState::init(const CFSumModel& model) {
  AdamState state;
  for (const ParamInfo& p : model.parameters()) {
    state.slots.emplace(p.name, AdamSlot{std::vector<double>(p.tensor.size(), 0.0),
                                         std::vector<double>(p.tensor.size(), 0.0)});
  }
  return state;
}

void adam_step(const std::vector<ParamInfo>& params, AdamState& state, const TrainConfig& cfg) {
  state.t += 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const ParamInfo& p : params) {
    if (!p.tensor.has_grad()) continue;  // parameter did not participate in this sample
    const std::vector<double>& g = p.tensor.grad();
    auto it = state.slots.find(p.name);
    if (it == state.slots.end()) {
      it = state.slots.emplace(p.name, AdamSlot{std::vector<double>(g.size(), 0.0),
                                                std::vector<double>(g.size(), 0.0)}).first;
    }
    AdamSlot& slot = it->second;
    std::vector<double>& theta = const_cast<Tensor&>(p.tensor).mutable_values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double grad = g[i];
      if (!std::isfinite(grad)) {
        throw TrainingError("adam_step: non-finite gradient in " + p.name);
      }
      if (cfg.coupled_l2) grad += cfg.weight_decay * theta[i];
      slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * grad;
      slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * grad * grad;
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      double update = m_hat / (std::sqrt(v_hat) + cfg.eps);
      if (!cfg.coupled_l2) update += cfg.weight_decay * theta[i];
      theta[i] -= cfg.learning_rate * update;
    }
  }
}

double clip_gradients(const std::vector<ParamInfo>& params, double max_norm) {
  double sq = 0.0;
  for (const ParamInfo& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const ParamInfo& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto& grad = const_cast<std::vector<double>&>(p.tensor.grad());
      for (double& g : grad) g *= factor;
    }
  }
  return norm;
}

TrainResult train(const std::vector<MultiModalSample>& train_set, CFSumModel& model,
                  const TrainConfig& cfg, const std::vector<MultiModalSample>* val_set,
                  double eval_threshold, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train: empty dataset");
  for (const MultiModalSample& s : train_set) s.validate();

  const std::vector<ParamInfo> params = model.parameters();
  AdamState state = AdamState::init(model);
  TrainResult result;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      Rng rng = Rng::keyed(cfg.seed, /*a=*/epoch);
      rng.shuffle(order);
    }
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const MultiModalSample& sample = train_set[idx];
      Tape tape;
      SaliencyPrediction pred = cfsum_forward(tape, sample, model);
      Tensor loss = mse_loss(tape, pred, sample.saliency);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", sample " + sample.sample_id);
      }
      loss_sum += loss_value;
      tape.backward(loss);
      if (cfg.clip_norm > 0.0) clip_gradients(params, cfg.clip_norm);
      adam_step(params, state, cfg);
      model.zero_grads();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (val_set && !val_set->empty() &&
        (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      MetricsReport report = evaluate(model, *val_set, eval_threshold);
      stats.val_map = report.map;
      stats.val_hit1 = report.hit_at_1;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (cfg.target_val_map > 0.0 && stats.val_map && *stats.val_map >= cfg.target_val_map) {
      break;
    }
  }
  return result;
}

}  // namespace cfsum
