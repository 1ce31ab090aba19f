#pragma once

#include <cstddef>
#include <vector>

namespace diffgap {

struct ScheduleParams {
  std::size_t steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

// Linear-beta diffusion schedule. All per-step accessors take t in 1..N;
// alpha_bar also accepts t = 0 (clean signal, alpha_bar = 1).
class NoiseSchedule {
 public:
  static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end);
  static NoiseSchedule linear(const ScheduleParams& p) {
    return linear(p.steps, p.beta_start, p.beta_end);
  }

  std::size_t steps() const noexcept { return betas_.size(); }
  const ScheduleParams& params() const noexcept { return params_; }

  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  double alpha_bar(std::size_t t) const { return alpha_bars_.at(t); }
  // Variance of q(z_{t-1} | z_t, z_0); zero at t = 1.
  double posterior_variance(std::size_t t) const { return posterior_vars_.at(t - 1); }

  const std::vector<double>& betas() const noexcept { return betas_; }
  // Index 0 holds alpha_bar_0 = 1.
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }
  const std::vector<double>& posterior_variances() const noexcept { return posterior_vars_; }

 private:
  ScheduleParams params_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
  std::vector<double> posterior_vars_;
};

}  // namespace diffgap
