#include "diffgap/adam.hpp"

#include <cmath>

#include "diffgap/error.hpp"

namespace diffgap {

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState s;
  for (const Parameter& p : params) {
    s.m.emplace_back(p.value.shape(), 0.0);
    s.v.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

bool AdamState::matches(const ParamSet& params) const {
  if (m.size() != params.size() || v.size() != params.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!same_layout(m[i], params[i].value) || !same_layout(v[i], params[i].value)) {
      return false;
    }
  }
  return true;
}

void adam_step(ParamSet& params, AdamState& state, const AdamHyper& hyper) {
  if (!state.matches(params)) throw ContractViolation("adam_step: moment shapes do not match parameters");
  for (const Parameter& p : params) {
    if (!same_layout(p.grad, p.value)) {
      throw ContractViolation("adam_step: gradient shape mismatch for " + p.name);
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

}  // namespace diffgap
