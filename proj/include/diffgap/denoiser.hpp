#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diffgap/rng.hpp"
#include "diffgap/tape.hpp"

namespace diffgap {

// Size budget for trainable parameters, counted at 4 bytes per scalar.
inline constexpr double kParamBudgetBytes = 5.4e6;

struct DenoiserConfig {
  std::size_t embed_dim = 512;
  std::size_t cond_dim = 512;
  std::size_t time_embed_dim = 128;
  std::size_t hidden_dim = 512;
  std::size_t hidden_layers = 2;
  // Adds z_n to the network output (parameter-free skip).
  bool residual = true;

  std::size_t input_dim() const { return embed_dim + cond_dim + time_embed_dim; }
  void validate() const;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

struct ParamStats {
  std::size_t param_count = 0;
  std::size_t bytes_f32 = 0;

  double megabytes() const { return static_cast<double>(bytes_f32) / 1e6; }
  bool within_budget() const { return static_cast<double>(bytes_f32) <= kParamBudgetBytes; }
};

// Closed-form parameter count for a config.
ParamStats param_stats(const DenoiserConfig& config);

// Sinusoidal encoding: [sin(n w_0), cos(n w_0), sin(n w_1), ...] with
// w_i = 10000^(-2i/E).
std::vector<double> time_embedding(std::size_t n, std::size_t dim);

// Noise predictor eps(z_n, n, cond): an MLP over [z_n ; cond ; time_embedding(n)]
// with SiLU hidden layers and a linear output of width embed_dim, plus z_n when
// the config is residual.
class Denoiser {
 public:
  // Weights uniform in +-1/sqrt(fan_in), biases zero.
  Denoiser(const DenoiserConfig& config, Rng& rng);
  // All parameters zero.
  static Denoiser zeros(const DenoiserConfig& config);

  const DenoiserConfig& config() const noexcept { return config_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamStats stats() const;

  // z_n is [D] or [B, D]; cond matches its rank; one step index per row.
  Var predict(Tape& tape, Var z_n, std::span<const std::size_t> steps, Var cond);
  // Inference without gradient recording.
  Tensor predict_values(const Tensor& z_n, std::span<const std::size_t> steps,
                        const Tensor& cond) const;

 private:
  explicit Denoiser(const DenoiserConfig& config);

  DenoiserConfig config_;
  ParamSet params_;
};

inline Var predict_noise(Denoiser& d, Tape& tape, Var z_n, std::size_t n, Var cond) {
  const std::size_t steps[1] = {n};
  return d.predict(tape, z_n, steps, cond);
}

}  // namespace diffgap
