#include "cfsum/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cfsum/attention.hpp"
#include "cfsum/errors.hpp"
#include "cfsum/model.hpp"
#include "cfsum/rng.hpp"

namespace cfsum {
namespace gradcheck {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_grad: h must be positive");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> plus = x.values();
    std::vector<double> minus = x.values();
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor(x.shape(), std::move(plus)));
    const double fm = f(Tensor(x.shape(), std::move(minus)));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(grad));
}

std::vector<double> finite_diff_inplace(const std::function<double()>& f, Tensor param, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_inplace: h must be positive");
  std::vector<double>& values = param.mutable_values();
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + h;
    const double fp = f();
    values[i] = original - h;
    const double fm = f();
    values[i] = original;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  if (a.size() != b.size()) {
    throw ShapeError("max_rel_error: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({floor, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

double Report::worst() const {
  double w = 0.0;
  for (const CheckResult& c : checks) w = std::max(w, c.max_rel_err);
  return w;
}

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, bool requires_grad = true) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> values(n);
  for (double& v : values) v = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

// Builds a scalar from `inputs` via `fwd`, then compares the tape gradient of
// inputs[wrt] with the finite-difference oracle.
using ForwardFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

CheckResult check_op(const std::string& name, const ForwardFn& fwd, std::vector<Tensor> inputs,
                     std::size_t wrt, double tolerance, double h) {
  for (Tensor& t : inputs) t.clear_grad();  // inputs are shared across checks
  Tape tape;
  Tensor loss = fwd(tape, inputs);
  tape.backward(loss);
  const std::vector<double> analytic = inputs[wrt].grad();

  auto probe = [&](const Tensor& x) {
    std::vector<Tensor> alt;
    alt.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      alt.push_back(i == wrt ? Tensor(x.shape(), x.values())
                             : Tensor(inputs[i].shape(), inputs[i].values()));
    }
    Tape fresh;
    return fwd(fresh, alt).item();
  };
  Tensor fd = finite_diff_grad(probe, inputs[wrt], h);

  CheckResult result;
  result.name = name;
  result.max_rel_err = max_rel_error(analytic, fd.values());
  result.pass = result.max_rel_err < tolerance;
  return result;
}

// Weighted sum against fixed coefficients so that every output entry carries
// a distinct gradient signal.
Tensor weighted_sum(Tape& tape, const Tensor& x, const Tensor& weights) {
  return sum(tape, mul(tape, x, weights));
}

ModelConfig tiny_config(std::uint64_t seed) {
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

MultiModalSample tiny_sample(Rng& rng, const ModelConfig& cfg, std::size_t n_c, std::size_t n_t) {
  MultiModalSample sample;
  sample.sample_id = "gradcheck";
  sample.video = FeatureSequence{Modality::kVideo, random_tensor(rng, {n_c, cfg.d_video}, false),
                                 PaddingMask::all_valid(n_c)};
  sample.audio = FeatureSequence{Modality::kAudio, random_tensor(rng, {n_c, cfg.d_audio}, false),
                                 PaddingMask::all_valid(n_c)};
  sample.text = FeatureSequence{Modality::kText, random_tensor(rng, {n_t, cfg.d_text}, false),
                                PaddingMask::all_valid(n_t)};
  sample.saliency.resize(n_c);
  for (double& s : sample.saliency) s = rng.uniform();
  return sample;
}

}  // namespace

Report run_suite(std::uint64_t seed, double tolerance, double h) {
  Report report;
  report.tolerance = tolerance;
  auto run = [&](CheckResult result) {
    report.checks.push_back(result);
    report.all_pass = report.all_pass && result.pass;
  };

  {  // matmul, both operands
    Rng rng = Rng::keyed(seed, "matmul");
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    Tensor w = random_tensor(rng, {3, 2}, false);
    auto fwd = [&w](Tape& t, const std::vector<Tensor>& in) {
      return weighted_sum(t, matmul(t, in[0], in[1]), w);
    };
    run(check_op("matmul/dA", fwd, {a, b}, 0, tolerance, h));
    run(check_op("matmul/dB", fwd, {a, b}, 1, tolerance, h));
  }
  {  // transpose
    Rng rng = Rng::keyed(seed, "transpose");
    Tensor x = random_tensor(rng, {3, 5});
    Tensor w = random_tensor(rng, {5, 3}, false);
    run(check_op("transpose", [&w](Tape& t, const std::vector<Tensor>& in) {
          return weighted_sum(t, transpose(t, in[0]), w);
        },
        {x}, 0, tolerance, h));
  }
  {  // softmax, unmasked and masked
    Rng rng = Rng::keyed(seed, "softmax");
    Tensor x = random_tensor(rng, {3, 5});
    Tensor w = random_tensor(rng, {3, 5}, false);
    run(check_op("softmax_rows", [&w](Tape& t, const std::vector<Tensor>& in) {
          return weighted_sum(t, softmax_rows(t, in[0]), w);
        },
        {x}, 0, tolerance, h));
    std::vector<bool> mask(15, true);
    mask[1] = mask[7] = mask[14] = false;
    run(check_op("softmax_rows/masked", [&w, mask](Tape& t, const std::vector<Tensor>& in) {
          return weighted_sum(t, softmax_rows(t, in[0], mask), w);
        },
        {x}, 0, tolerance, h));
  }
  {  // concat_rows / split_rows
    Rng rng = Rng::keyed(seed, "concat");
    Tensor a = random_tensor(rng, {2, 3});
    Tensor b = random_tensor(rng, {3, 3});
    Tensor w = random_tensor(rng, {5, 3}, false);
    auto fwd = [&w](Tape& t, const std::vector<Tensor>& in) {
      return weighted_sum(t, concat_rows(t, {in[0], in[1]}), w);
    };
    run(check_op("concat_rows/dA", fwd, {a, b}, 0, tolerance, h));
    run(check_op("concat_rows/dB", fwd, {a, b}, 1, tolerance, h));
    Tensor w0 = random_tensor(rng, {2, 3}, false);
    Tensor stacked = random_tensor(rng, {5, 3});
    run(check_op("split_rows", [&w0](Tape& t, const std::vector<Tensor>& in) {
          auto parts = split_rows(t, in[0], {2, 3});
          return weighted_sum(t, parts[0], w0);
        },
        {stacked}, 0, tolerance, h));
  }
  {  // concat_cols / slice_cols
    Rng rng = Rng::keyed(seed, "cols");
    Tensor a = random_tensor(rng, {3, 2});
    Tensor b = random_tensor(rng, {3, 4});
    Tensor w = random_tensor(rng, {3, 6}, false);
    auto fwd = [&w](Tape& t, const std::vector<Tensor>& in) {
      return weighted_sum(t, concat_cols(t, {in[0], in[1]}), w);
    };
    run(check_op("concat_cols/dA", fwd, {a, b}, 0, tolerance, h));
    run(check_op("concat_cols/dB", fwd, {a, b}, 1, tolerance, h));
    Tensor x = random_tensor(rng, {3, 6});
    Tensor ws = random_tensor(rng, {3, 3}, false);
    run(check_op("slice_cols", [&ws](Tape& t, const std::vector<Tensor>& in) {
          return weighted_sum(t, slice_cols(t, in[0], 2, 3), ws);
        },
        {x}, 0, tolerance, h));
  }
  {  // elementwise binary ops
    Rng rng = Rng::keyed(seed, "elementwise");
    Tensor a = random_tensor(rng, {4, 3});
    Tensor b = random_tensor(rng, {4, 3});
    Tensor w = random_tensor(rng, {4, 3}, false);
    auto make = [&w](Tensor (*op)(Tape&, const Tensor&, const Tensor&)) {
      return [op, &w](Tape& t, const std::vector<Tensor>& in) {
        return weighted_sum(t, op(t, in[0], in[1]), w);
      };
    };
    run(check_op("add/dA", make(&add), {a, b}, 0, tolerance, h));
    run(check_op("sub/dB", make(&sub), {a, b}, 1, tolerance, h));
    run(check_op("mul/dA", make(&mul), {a, b}, 0, tolerance, h));
    run(check_op("mul/dB", make(&mul), {a, b}, 1, tolerance, h));
  }
  {  // scale, scale_by, relu, tanh, add_row_vector, sum
    Rng rng = Rng::keyed(seed, "unary");
    Tensor x = random_tensor(rng, {4, 3});
    Tensor w = random_tensor(rng, {4, 3}, false);
    run(check_op("scale", [&w](Tape& t, const std::vector<Tensor>& in) {
          return weighted_sum(t, scale(t, in[0], -1.7), w);
        },
        {x}, 0, tolerance, h));
    Tensor s = Tensor::scalar(0.8, true);
    auto fwd_scale_by = [&w](Tape& t, const std::vector<Tensor>& in) {
      return weighted_sum(t, scale_by(t, in[0], in[1]), w);
    };
    run(check_op("scale_by/dx", fwd_scale_by, {x, s}, 0, tolerance, h));
    run(check_op("scale_by/ds", fwd_scale_by, {x, s}, 1, tolerance, h));
    run(check_op("relu", [&w](Tape& t, const std::vector<Tensor>& in) {
          return weighted_sum(t, relu(t, in[0]), w);
        },
        {x}, 0, tolerance, h));
    run(check_op("tanh", [&w](Tape& t, const std::vector<Tensor>& in) {
          return weighted_sum(t, tanh_act(t, in[0]), w);
        },
        {x}, 0, tolerance, h));
    Tensor v = random_tensor(rng, {1, 3});
    auto fwd_bias = [&w](Tape& t, const std::vector<Tensor>& in) {
      return weighted_sum(t, add_row_vector(t, in[0], in[1]), w);
    };
    run(check_op("add_row_vector/dx", fwd_bias, {x, v}, 0, tolerance, h));
    run(check_op("add_row_vector/dv", fwd_bias, {x, v}, 1, tolerance, h));
    run(check_op("sum", [](Tape& t, const std::vector<Tensor>& in) { return sum(t, in[0]); }, {x},
                 0, tolerance, h));
  }
  {  // layer_norm, all three operands
    Rng rng = Rng::keyed(seed, "layer_norm");
    Tensor x = random_tensor(rng, {4, 6});
    Tensor gain = random_tensor(rng, {1, 6});
    Tensor bias = random_tensor(rng, {1, 6});
    Tensor w = random_tensor(rng, {4, 6}, false);
    auto fwd = [&w](Tape& t, const std::vector<Tensor>& in) {
      return weighted_sum(t, layer_norm(t, in[0], in[1], in[2]), w);
    };
    run(check_op("layer_norm/dx", fwd, {x, gain, bias}, 0, tolerance, h));
    run(check_op("layer_norm/dgain", fwd, {x, gain, bias}, 1, tolerance, h));
    run(check_op("layer_norm/dbias", fwd, {x, gain, bias}, 2, tolerance, h));
  }
  {  // multi-head attention: inputs and every projection
    Rng rng = Rng::keyed(seed, "attention");
    const std::size_t n_q = 3, n_k = 4, d_q = 4, d_kv = 6, dm = 8;
    AttentionParams params;
    params.n_heads = 2;
    params.use_output_proj = true;
    params.w_q = random_tensor(rng, {d_q, dm});
    params.w_k = random_tensor(rng, {d_kv, dm});
    params.w_v = random_tensor(rng, {d_kv, dm});
    params.w_o = random_tensor(rng, {dm, dm});
    Tensor q = random_tensor(rng, {n_q, d_q});
    Tensor k = random_tensor(rng, {n_k, d_kv});
    Tensor v = random_tensor(rng, {n_k, d_kv});
    Tensor w = random_tensor(rng, {n_q, dm}, false);
    PaddingMask mask = PaddingMask::all_valid(n_k);
    mask.valid[2] = false;
    auto fwd = [&](Tape& t, const std::vector<Tensor>& in) {
      AttentionParams p;
      p.n_heads = params.n_heads;
      p.use_output_proj = true;
      p.w_q = in[3];
      p.w_k = in[4];
      p.w_v = in[5];
      p.w_o = in[6];
      return weighted_sum(t, multi_head_attention(t, in[0], in[1], in[2], p, mask), w);
    };
    std::vector<Tensor> inputs = {q, k, v, params.w_q, params.w_k, params.w_v, params.w_o};
    const char* names[] = {"attention/dq",  "attention/dk",  "attention/dv", "attention/dw_q",
                           "attention/dw_k", "attention/dw_v", "attention/dw_o"};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      run(check_op(names[i], fwd, inputs, i, tolerance, h));
    }
  }
  {  // end-to-end loss gradient for every model parameter
    Rng rng = Rng::keyed(seed, "end_to_end");
    ModelConfig cfg = tiny_config(seed);
    CFSumModel model = init_model(cfg);
    MultiModalSample sample = tiny_sample(rng, cfg, /*n_c=*/3, /*n_t=*/2);

    auto loss_value = [&]() {
      Tape tape;
      SaliencyPrediction pred = cfsum_forward(tape, sample, model);
      return mse_loss(tape, pred, sample.saliency).item();
    };

    Tape tape;
    SaliencyPrediction pred = cfsum_forward(tape, sample, model);
    Tensor loss = mse_loss(tape, pred, sample.saliency);
    tape.backward(loss);

    for (const ParamInfo& p : model.parameters()) {
      const std::vector<double> analytic =
          p.tensor.has_grad() ? p.tensor.grad() : std::vector<double>(p.tensor.size(), 0.0);
      const std::vector<double> fd = finite_diff_inplace(loss_value, p.tensor, h);
      CheckResult result;
      result.name = "cfsum_loss/" + p.name;
      result.max_rel_err = max_rel_error(analytic, fd);
      result.pass = result.max_rel_err < tolerance;
      run(result);
    }
    model.zero_grads();
  }
  return report;
}

}  // namespace gradcheck
}  // namespace cfsum
