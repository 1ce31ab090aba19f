#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "diffgap/denoiser.hpp"
#include "diffgap/rng.hpp"
#include "diffgap/schedule.hpp"
#include "diffgap/tape.hpp"

namespace diffgap {

// Differentiable noise predictor used by the training objective.
using NoiseModel =
    std::function<Var(Tape&, Var z_n, std::span<const std::size_t> steps, Var cond)>;
// Inference-only noise predictor used by the samplers; every row of z_t shares step t.
using NoiseFn = std::function<Tensor(const Tensor& z_t, std::size_t t, const Tensor& cond)>;

NoiseModel noise_model(Denoiser& d);
NoiseFn noise_fn(const Denoiser& d);

// z_n = sqrt(abar_n) z0 + sqrt(1 - abar_n) eps, for 0 <= n <= N.
Tensor forward_diffuse(const Tensor& z0, std::size_t n, const Tensor& eps,
                       const NoiseSchedule& sched);
// One transition of q(z_t | z_{t-1}) = N(sqrt(1 - beta_t) z_{t-1}, beta_t I).
Tensor forward_step(const Tensor& z_prev, std::size_t t, const Tensor& noise,
                    const NoiseSchedule& sched);

Tensor standard_normal(const Shape& shape, Rng& rng);
// Rows rescaled to unit norm; zero rows are rejected.
Tensor normalized_rows(Tensor x);

struct DiffusionLoss {
  Tape tape;
  Var loss;
  std::vector<std::size_t> steps;
  Tensor eps;

  double value() const { return tape.value(loss).item(); }
};

// Mean squared error between injected and predicted noise. z0/cond may be a
// single vector or a [B, ...] batch; one step and one noise vector per row.
DiffusionLoss diffusion_loss(const NoiseModel& model, const Tensor& z0, const Tensor& cond,
                             const NoiseSchedule& sched, Rng& rng);
// Same objective with caller-chosen steps and noise.
DiffusionLoss diffusion_loss_at(const NoiseModel& model, const Tensor& z0, const Tensor& cond,
                                const NoiseSchedule& sched, std::vector<std::size_t> steps,
                                Tensor eps);

// Ancestral sampler over all N steps, starting from z_N ~ N(0, I). Output rows are
// unit-normalized.
Tensor ddpm_sample(const NoiseFn& model, const Tensor& cond, std::size_t embed_dim,
                   const NoiseSchedule& sched, Rng& rng);
Tensor ddpm_sample_from(const NoiseFn& model, Tensor z_n, const Tensor& cond,
                        const NoiseSchedule& sched, Rng& rng);

// Evenly spaced descending timesteps t_k = N - floor(k N / steps); always starts at N.
std::vector<std::size_t> ddim_timesteps(std::size_t total_steps, std::size_t steps);

// DDIM with `steps` evaluations; eta = 0 is deterministic. Output rows are
// unit-normalized.
Tensor ddim_sample(const NoiseFn& model, const Tensor& cond, std::size_t embed_dim,
                   const NoiseSchedule& sched, std::size_t steps, double eta, Rng& rng);
Tensor ddim_sample_from(const NoiseFn& model, Tensor z_n, const Tensor& cond,
                        const NoiseSchedule& sched, std::size_t steps, double eta, Rng& rng);

}  // namespace diffgap
