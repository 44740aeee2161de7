#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cfsum/data_io.hpp"
#include "cfsum/errors.hpp"
#include "cfsum/model.hpp"
#include "cfsum/rng.hpp"
#include "cfsum/training.hpp"

using namespace cfsum;

namespace {

ModelConfig small_config(std::uint64_t seed = 0) {
  ModelConfig cfg;
  cfg.d_video = 6;
  cfg.d_audio = 4;
  cfg.d_text = 4;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_hidden = 8;
  cfg.seed = seed;
  return cfg;
}

SynthConfig tiny_synth(std::uint64_t seed = 0) {
  SynthConfig cfg;
  cfg.n_samples = 24;
  cfg.val_fraction = 0.25;
  cfg.n_concepts = 3;
  cfg.d_video = 6;
  cfg.d_audio = 4;
  cfg.d_text = 4;
  cfg.min_clips = 3;
  cfg.max_clips = 5;
  cfg.min_tokens = 1;
  cfg.max_tokens = 2;
  cfg.noise_sigma = 0.1;
  cfg.seed = seed;
  return cfg;
}

ModelConfig synth_model_config(const SynthConfig& s, std::uint64_t seed = 0) {
  ModelConfig cfg = small_config(seed);
  cfg.d_video = s.d_video;
  cfg.d_audio = s.d_audio;
  cfg.d_text = s.d_text;
  return cfg;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// One-parameter setup: a scalar theta with its gradient populated by a tape.
struct ScalarProblem {
  Tensor theta;
  std::vector<ParamInfo> params;

  explicit ScalarProblem(double value) : theta(Tensor::scalar(value, true)) {
    params.push_back({"theta", theta, 0.0});
  }

  // Populates grad of f(theta) = theta^2.
  double square_loss() {
    theta.clear_grad();
    Tape tape;
    Tensor loss = sum(tape, mul(tape, theta, theta));
    tape.backward(loss);
    return loss.item();
  }

  // Populates grad of f(theta) = c * theta.
  void linear_loss(double c) {
    theta.clear_grad();
    Tape tape;
    Tensor loss = sum(tape, scale(tape, theta, c));
    tape.backward(loss);
  }
};

}  // namespace

TEST_CASE("adam first step moves by about -lr * sign(g)") {
  ScalarProblem problem(0.5);
  problem.linear_loss(0.8);  // grad = 0.8
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.weight_decay = 0.0;
  AdamSlot slot{{0.0}, {0.0}};
  AdamState state;
  state.slots.emplace("theta", slot);
  adam_step(problem.params, state, cfg);
  CHECK(state.t == 1);
  const double delta = problem.theta.item() - 0.5;
  CHECK(delta == doctest::Approx(-cfg.learning_rate).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
  ScalarProblem problem(0.37);
  problem.linear_loss(0.0);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  AdamState state;
  state.slots.emplace("theta", AdamSlot{{0.0}, {0.0}});
  adam_step(problem.params, state, cfg);
  CHECK(problem.theta.item() == 0.37);
}

TEST_CASE("two adam steps on theta^2 decrease the loss monotonically") {
  ScalarProblem problem(1.0);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  AdamState state;
  state.slots.emplace("theta", AdamSlot{{0.0}, {0.0}});

  const double f0 = problem.square_loss();
  adam_step(problem.params, state, cfg);
  const double f1 = problem.square_loss();
  adam_step(problem.params, state, cfg);
  const double f2 = problem.theta.item() * problem.theta.item();
  CHECK(f1 < f0);
  CHECK(f2 < f1);
}

TEST_CASE("adam aborts on non-finite gradients, naming the parameter") {
  ScalarProblem problem(1.0);
  problem.linear_loss(std::numeric_limits<double>::infinity());
  TrainConfig cfg;
  AdamState state;
  state.slots.emplace("theta", AdamSlot{{0.0}, {0.0}});
  try {
    adam_step(problem.params, state, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("theta") != std::string::npos);
  }
}

TEST_CASE("adam step size is bounded by lr * |m_hat| / (sqrt(v_hat) + eps)") {
  ModelConfig mcfg = small_config(5);
  CFSumModel model = init_model(mcfg);
  SynthConfig scfg = tiny_synth(5);
  scfg.d_video = mcfg.d_video;
  scfg.d_audio = mcfg.d_audio;
  scfg.d_text = mcfg.d_text;
  auto samples = synth_split(scfg, "train");
  REQUIRE(!samples.empty());

  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  auto params = model.parameters();
  AdamState state = AdamState::init(model);

  std::map<std::string, std::vector<double>> before;
  for (const ParamInfo& p : params) before.emplace(p.name, p.tensor.values());

  Tape tape;
  SaliencyPrediction pred = cfsum_forward(tape, samples[0], model);
  Tensor loss = mse_loss(tape, pred, samples[0].saliency);
  tape.backward(loss);
  adam_step(params, state, cfg);

  const double bias1 = 1.0 - cfg.beta1;
  const double bias2 = 1.0 - cfg.beta2;
  for (const ParamInfo& p : params) {
    const AdamSlot& slot = state.slots.at(p.name);
    const auto& old_values = before.at(p.name);
    for (std::size_t i = 0; i < old_values.size(); ++i) {
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      const double bound = cfg.learning_rate * std::abs(m_hat) / (std::sqrt(v_hat) + cfg.eps);
      const double delta = std::abs(p.tensor.values()[i] - old_values[i]);
      CHECK(delta <= bound + 1e-15);
    }
  }
}

TEST_CASE("training with lr 0 leaves parameters bit-identical") {
  SynthConfig scfg = tiny_synth(1);
  ModelConfig mcfg = synth_model_config(scfg, 1);
  CFSumModel model = init_model(mcfg);
  std::map<std::string, std::vector<double>> before;
  for (const ParamInfo& p : model.state_tensors()) before.emplace(p.name, p.tensor.values());

  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  train(synth_split(scfg, "train"), model, cfg);

  for (const ParamInfo& p : model.state_tensors()) {
    CHECK(bit_equal(p.tensor.values(), before.at(p.name)));
  }
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  SynthConfig scfg = tiny_synth(2);
  ModelConfig mcfg = synth_model_config(scfg, 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 99;
  auto train_set = synth_split(scfg, "train");
  auto val_set = synth_split(scfg, "val");

  CFSumModel m1 = init_model(mcfg);
  CFSumModel m2 = init_model(mcfg);
  TrainResult r1 = train(train_set, m1, cfg, &val_set, 0.5);
  TrainResult r2 = train(train_set, m2, cfg, &val_set, 0.5);

  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t e = 0; e < r1.history.size(); ++e) {
    CHECK(std::memcmp(&r1.history[e].train_loss, &r2.history[e].train_loss, sizeof(double)) == 0);
    CHECK(r1.history[e].val_map == r2.history[e].val_map);
  }
  auto p1 = m1.state_tensors();
  auto p2 = m2.state_tensors();
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(bit_equal(p1[i].tensor.values(), p2[i].tensor.values()));
  }
}

TEST_CASE("training reduces the loss on a small planted-signal set") {
  SynthConfig scfg = tiny_synth(3);
  ModelConfig mcfg = synth_model_config(scfg, 3);
  CFSumModel model = init_model(mcfg);
  TrainConfig cfg;
  cfg.epochs = 40;
  auto train_set = synth_split(scfg, "train");
  TrainResult result = train(train_set, model, cfg);
  REQUIRE(result.history.size() == cfg.epochs);
  for (const EpochStats& stats : result.history) CHECK(std::isfinite(stats.train_loss));
  CHECK(result.history.back().train_loss < 0.5 * result.history.front().train_loss);
  CHECK(model.all_finite());
}

TEST_CASE("training errors") {
  ModelConfig mcfg = small_config();
  CFSumModel model = init_model(mcfg);
  TrainConfig cfg;
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(train({}, model, cfg), ContractError);
  }
  SUBCASE("divergence reports the epoch") {
    SynthConfig scfg = tiny_synth(7);
    ModelConfig mc = synth_model_config(scfg, 7);
    CFSumModel m = init_model(mc);
    Tensor head = m.head.w;
    head.mutable_values()[0] = std::numeric_limits<double>::infinity();
    try {
      train(synth_split(scfg, "train"), m, cfg);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
  }
  SUBCASE("invalid config") {
    TrainConfig bad;
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.learning_rate = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  ScalarProblem problem(1.0);
  problem.linear_loss(10.0);  // grad = 10
  const double before = clip_gradients(problem.params, 1.0);
  CHECK(before == doctest::Approx(10.0));
  CHECK(problem.theta.grad()[0] == doctest::Approx(1.0));
  const double after = clip_gradients(problem.params, 1.0);
  CHECK(after == doctest::Approx(1.0));
}

TEST_CASE("coupled l2 and decoupled decay differ") {
  TrainConfig decoupled;
  decoupled.weight_decay = 0.1;
  TrainConfig coupled = decoupled;
  coupled.coupled_l2 = true;

  auto run = [&](const TrainConfig& cfg) {
    ScalarProblem problem(1.0);
    problem.linear_loss(0.5);
    AdamState state;
    state.slots.emplace("theta", AdamSlot{{0.0}, {0.0}});
    adam_step(problem.params, state, cfg);
    return problem.theta.item();
  };
  CHECK(run(decoupled) != run(coupled));
}
