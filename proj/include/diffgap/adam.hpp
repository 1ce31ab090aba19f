#pragma once

#include <cstdint>
#include <vector>

#include "diffgap/tape.hpp"

namespace diffgap {

struct AdamHyper {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moments aligned with a ParamSet's ordering.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static AdamState for_params(const ParamSet& params);
  bool matches(const ParamSet& params) const;
};

// Bias-corrected Adam update using the gradients accumulated in `params`.
void adam_step(ParamSet& params, AdamState& state, const AdamHyper& hyper);

}  // namespace diffgap
