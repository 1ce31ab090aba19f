#include "diffgap/schedule.hpp"

#include <string>

#include "diffgap/error.hpp"

namespace diffgap {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw ContractViolation("schedule: step count must be at least 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ContractViolation("schedule: need 0 < beta_start <= beta_end < 1, got " +
                            std::to_string(beta_start) + ", " + std::to_string(beta_end));
  }
  NoiseSchedule s;
  s.params_ = ScheduleParams{steps, beta_start, beta_end};
  s.betas_.resize(steps);
  for (std::size_t t = 1; t <= steps; ++t) {
    s.betas_[t - 1] = steps == 1 ? beta_start
                                 : beta_start + static_cast<double>(t - 1) /
                                                    static_cast<double>(steps - 1) *
                                                    (beta_end - beta_start);
  }
  s.alpha_bars_.resize(steps + 1);
  s.alpha_bars_[0] = 1.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    s.alpha_bars_[t] = s.alpha_bars_[t - 1] * (1.0 - s.betas_[t - 1]);
  }
  s.posterior_vars_.resize(steps);
  s.posterior_vars_[0] = 0.0;
  for (std::size_t t = 2; t <= steps; ++t) {
    s.posterior_vars_[t - 1] =
        s.betas_[t - 1] * (1.0 - s.alpha_bars_[t - 1]) / (1.0 - s.alpha_bars_[t]);
  }
  return s;
}

}  // namespace diffgap
