#include "diffgap/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffgap/error.hpp"

namespace diffgap {

NoiseModel noise_model(Denoiser& d) {
  return [&d](Tape& tape, Var z_n, std::span<const std::size_t> steps, Var cond) {
    return d.predict(tape, z_n, steps, cond);
  };
}

NoiseFn noise_fn(const Denoiser& d) {
  return [&d](const Tensor& z_t, std::size_t t, const Tensor& cond) {
    const std::vector<std::size_t> steps(z_t.rows(), t);
    return d.predict_values(z_t, steps, cond);
  };
}

Tensor forward_diffuse(const Tensor& z0, std::size_t n, const Tensor& eps,
                       const NoiseSchedule& sched) {
  if (n > sched.steps()) {
    throw ContractViolation("forward_diffuse: step " + std::to_string(n) + " exceeds N = " +
                            std::to_string(sched.steps()));
  }
  if (z0.shape() != eps.shape()) throw ContractViolation("forward_diffuse: z0/eps shape mismatch");
  if (n == 0) return z0;
  const double a = std::sqrt(sched.alpha_bar(n));
  const double s = std::sqrt(1.0 - sched.alpha_bar(n));
  Tensor z(z0.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = a * z0[i] + s * eps[i];
  return z;
}

Tensor forward_step(const Tensor& z_prev, std::size_t t, const Tensor& noise,
                    const NoiseSchedule& sched) {
  if (t == 0 || t > sched.steps()) throw ContractViolation("forward_step: t out of range");
  if (z_prev.shape() != noise.shape()) throw ContractViolation("forward_step: shape mismatch");
  const double a = std::sqrt(1.0 - sched.beta(t));
  const double s = std::sqrt(sched.beta(t));
  Tensor z(z_prev.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = a * z_prev[i] + s * noise[i];
  return z;
}

Tensor standard_normal(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

Tensor normalized_rows(Tensor x) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double s = 0.0;
    for (double v : row) s += v * v;
    if (!(s > 0.0)) throw ContractViolation("normalize: zero vector");
    const double inv = 1.0 / std::sqrt(s);
    for (double& v : row) v *= inv;
  }
  return x;
}

DiffusionLoss diffusion_loss_at(const NoiseModel& model, const Tensor& z0, const Tensor& cond,
                                const NoiseSchedule& sched, std::vector<std::size_t> steps,
                                Tensor eps) {
  if (steps.size() != z0.rows()) throw ContractViolation("diffusion_loss: one step per row");
  Tensor z_n(z0.shape());
  for (std::size_t r = 0; r < z0.rows(); ++r) {
    if (steps[r] == 0 || steps[r] > sched.steps()) {
      throw ContractViolation("diffusion_loss: step out of range 1..N");
    }
    const double a = std::sqrt(sched.alpha_bar(steps[r]));
    const double s = std::sqrt(1.0 - sched.alpha_bar(steps[r]));
    auto out = z_n.row(r);
    auto clean = z0.row(r);
    auto noise = eps.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = a * clean[c] + s * noise[c];
  }
  DiffusionLoss result{Tape{}, Var{}, std::move(steps), std::move(eps)};
  Tape& tape = result.tape;
  Var pred = model(tape, tape.constant(std::move(z_n)), result.steps, tape.constant(cond));
  result.loss = mse(tape, pred, tape.constant(result.eps));
  return result;
}

DiffusionLoss diffusion_loss(const NoiseModel& model, const Tensor& z0, const Tensor& cond,
                             const NoiseSchedule& sched, Rng& rng) {
  std::vector<std::size_t> steps(z0.rows());
  for (auto& n : steps) n = static_cast<std::size_t>(rng.uniform_int(1, sched.steps()));
  Tensor eps = standard_normal(z0.shape(), rng);
  return diffusion_loss_at(model, z0, cond, sched, std::move(steps), std::move(eps));
}

Tensor ddpm_sample_from(const NoiseFn& model, Tensor z, const Tensor& cond,
                        const NoiseSchedule& sched, Rng& rng) {
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const Tensor eps = model(z, t, cond);
    if (eps.shape() != z.shape()) throw ContractViolation("ddpm_sample: model output shape");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const double eps_coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double sigma = std::sqrt(sched.posterior_variance(t));
    for (std::size_t i = 0; i < z.numel(); ++i) {
      z[i] = inv_sqrt_alpha * (z[i] - eps_coef * eps[i]);
    }
    if (sigma > 0.0) {
      for (double& v : z.data()) v += sigma * rng.normal();
    }
  }
  return normalized_rows(std::move(z));
}

Tensor ddpm_sample(const NoiseFn& model, const Tensor& cond, std::size_t embed_dim,
                   const NoiseSchedule& sched, Rng& rng) {
  const Shape shape = cond.rank() == 1 ? Shape{embed_dim} : Shape{cond.rows(), embed_dim};
  return ddpm_sample_from(model, standard_normal(shape, rng), cond, sched, rng);
}

std::vector<std::size_t> ddim_timesteps(std::size_t total_steps, std::size_t steps) {
  if (steps < 1 || steps > total_steps) {
    throw ContractViolation("ddim: steps must be in 1.." + std::to_string(total_steps) +
                            ", got " + std::to_string(steps));
  }
  std::vector<std::size_t> ts(steps);
  for (std::size_t k = 0; k < steps; ++k) ts[k] = total_steps - k * total_steps / steps;
  return ts;
}

Tensor ddim_sample_from(const NoiseFn& model, Tensor z, const Tensor& cond,
                        const NoiseSchedule& sched, std::size_t steps, double eta, Rng& rng) {
  if (!(eta >= 0.0)) throw ContractViolation("ddim: eta must be >= 0");
  const auto ts = ddim_timesteps(sched.steps(), steps);
  Tensor z0_hat(z.shape());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const std::size_t t = ts[k];
    const std::size_t s = k + 1 < ts.size() ? ts[k + 1] : 0;
    const Tensor eps = model(z, t, cond);
    if (eps.shape() != z.shape()) throw ContractViolation("ddim_sample: model output shape");
    const double ab_t = sched.alpha_bar(t);
    const double ab_s = sched.alpha_bar(s);
    const double sigma =
        eta * std::sqrt((1.0 - ab_s) / (1.0 - ab_t) * (1.0 - ab_t / ab_s));
    const double dir_coef = std::sqrt(std::max(0.0, 1.0 - ab_s - sigma * sigma));
    const double sqrt_ab_t = std::sqrt(ab_t), sqrt_1m_ab_t = std::sqrt(1.0 - ab_t);
    const double sqrt_ab_s = std::sqrt(ab_s);
    for (std::size_t i = 0; i < z.numel(); ++i) {
      z0_hat[i] = (z[i] - sqrt_1m_ab_t * eps[i]) / sqrt_ab_t;
      z[i] = sqrt_ab_s * z0_hat[i] + dir_coef * eps[i];
    }
    if (sigma > 0.0) {
      for (double& v : z.data()) v += sigma * rng.normal();
    }
  }
  return normalized_rows(std::move(z));
}

Tensor ddim_sample(const NoiseFn& model, const Tensor& cond, std::size_t embed_dim,
                   const NoiseSchedule& sched, std::size_t steps, double eta, Rng& rng) {
  const Shape shape = cond.rank() == 1 ? Shape{embed_dim} : Shape{cond.rows(), embed_dim};
  return ddim_sample_from(model, standard_normal(shape, rng), cond, sched, steps, eta, rng);
}

}  // namespace diffgap
