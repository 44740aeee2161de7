#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "cfsum/model.hpp"
#include "cfsum/sample.hpp"

namespace cfsum {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool coupled_l2 = false;  // classic L2-in-gradient instead of decoupled decay
  double clip_norm = 0.0;   // global-norm gradient clipping; 0 disables
  std::size_t eval_every = 1;
  double target_val_map = 0.0;  // stop once val mAP reaches this; 0 disables

  void validate() const;
};

// First/second moment buffers per parameter, keyed by parameter name.
struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  std::map<std::string, AdamSlot> slots;
  std::size_t t = 0;

  static AdamState init(const CFSumModel& model);
};

// One Adam update from the gradients currently populated on the parameters.
// Decoupled weight decay by default. Throws TrainingError (naming the
// parameter) on a non-finite gradient.
void adam_step(const std::vector<ParamInfo>& params, AdamState& state, const TrainConfig& cfg);

// Scales all gradients so their global L2 norm is at most max_norm.
// No-op when max_norm <= 0. Returns the pre-clip norm.
double clip_gradients(const std::vector<ParamInfo>& params, double max_norm);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_map;
  std::optional<double> val_hit1;
};

struct TrainResult {
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Per-sample (batch size 1) optimization of the saliency MSE. Sample order is
// reshuffled each epoch from a stream keyed by (seed, epoch); the whole run is
// a pure function of (dataset, model init, config).
TrainResult train(const std::vector<MultiModalSample>& train_set, CFSumModel& model,
                  const TrainConfig& cfg,
                  const std::vector<MultiModalSample>* val_set = nullptr,
                  double eval_threshold = 0.5, const EpochCallback& on_epoch = {});

}  // namespace cfsum
