#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfsum/tensor.hpp"

namespace cfsum {
namespace gradcheck {

using ScalarFn = std::function<double(const Tensor&)>;

// Central-difference estimate (f(x + h e_i) - f(x - h e_i)) / 2h per
// coordinate. The independent oracle against which every backward rule is
// judged.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-5);

// Same oracle, wiggling a live parameter tensor in place. f() must rebuild
// the forward pass from the parameter's current values.
std::vector<double> finite_diff_inplace(const std::function<double()>& f, Tensor param,
                                        double h = 1e-5);

// max_i |a_i - b_i| / max(floor, |a_i|, |b_i|)
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                     double floor = 1e-6);

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct Report {
  std::vector<CheckResult> checks;
  double tolerance = 0.0;
  bool all_pass = true;

  double worst() const;
};

// Checks every primitive op, the attention block, each model stage, and the
// end-to-end loss gradient (3 clips / 2 tokens / d_model 8) against the
// finite-difference oracle. Inputs are drawn in [-1, 1] from streams keyed
// by `seed`.
Report run_suite(std::uint64_t seed, double tolerance = 1e-4, double h = 1e-5);

}  // namespace gradcheck
}  // namespace cfsum
