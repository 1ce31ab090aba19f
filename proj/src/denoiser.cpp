#include "diffgap/denoiser.hpp"

#include <cmath>
#include <string>

#include "diffgap/error.hpp"

namespace diffgap {

namespace {

std::string layer_name(std::size_t i) { return "layer" + std::to_string(i); }

}  // namespace

void DenoiserConfig::validate() const {
  if (embed_dim == 0 || cond_dim == 0 || time_embed_dim == 0 || hidden_dim == 0 ||
      hidden_layers == 0) {
    throw ContractViolation("denoiser config: all dimensions must be >= 1");
  }
  if (time_embed_dim % 2 != 0) {
    throw ContractViolation("denoiser config: time_embed_dim must be even, got " +
                            std::to_string(time_embed_dim));
  }
}

ParamStats param_stats(const DenoiserConfig& config) {
  config.validate();
  std::size_t count = 0;
  std::size_t fan_in = config.input_dim();
  for (std::size_t i = 0; i < config.hidden_layers; ++i) {
    count += fan_in * config.hidden_dim + config.hidden_dim;
    fan_in = config.hidden_dim;
  }
  count += fan_in * config.embed_dim + config.embed_dim;
  return ParamStats{count, 4 * count};
}

std::vector<double> time_embedding(std::size_t n, std::size_t dim) {
  if (dim % 2 != 0) throw ContractViolation("time_embedding: dimension must be even");
  std::vector<double> emb(dim);
  const double x = static_cast<double>(n);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    emb[2 * i] = std::sin(x * freq);
    emb[2 * i + 1] = std::cos(x * freq);
  }
  return emb;
}

Denoiser::Denoiser(const DenoiserConfig& config) : config_(config) {
  config_.validate();
  std::size_t fan_in = config_.input_dim();
  for (std::size_t i = 0; i < config_.hidden_layers; ++i) {
    params_.add(layer_name(i) + ".weight", Tensor(Shape{config_.hidden_dim, fan_in}));
    params_.add(layer_name(i) + ".bias", Tensor(Shape{config_.hidden_dim}));
    fan_in = config_.hidden_dim;
  }
  params_.add("out.weight", Tensor(Shape{config_.embed_dim, fan_in}));
  params_.add("out.bias", Tensor(Shape{config_.embed_dim}));
}

Denoiser::Denoiser(const DenoiserConfig& config, Rng& rng) : Denoiser(config) {
  for (Parameter& p : params_) {
    if (p.value.rank() != 2) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.dim(1)));
    for (double& w : p.value.data()) w = rng.uniform(-bound, bound);
  }
}

Denoiser Denoiser::zeros(const DenoiserConfig& config) { return Denoiser(config); }

ParamStats Denoiser::stats() const {
  const std::size_t count = params_.scalar_count();
  return ParamStats{count, 4 * count};
}

Var Denoiser::predict(Tape& tape, Var z_n, std::span<const std::size_t> steps, Var cond) {
  const Tensor& z = tape.value(z_n);
  const Tensor& c = tape.value(cond);
  if (z.rank() != c.rank() || (z.rank() != 1 && z.rank() != 2)) {
    throw ContractViolation("denoiser: z_n " + shape_str(z.shape()) + " and cond " +
                            shape_str(c.shape()) + " must both be rank 1 or both rank 2");
  }
  if (z.cols() != config_.embed_dim || c.cols() != config_.cond_dim) {
    throw ContractViolation("denoiser: expected z_n width " + std::to_string(config_.embed_dim) +
                            " and cond width " + std::to_string(config_.cond_dim) + ", got " +
                            shape_str(z.shape()) + " and " + shape_str(c.shape()));
  }
  const std::size_t batch = z.rows();
  if (c.rows() != batch || steps.size() != batch) {
    throw ContractViolation("denoiser: batch sizes of z_n, cond and steps differ");
  }

  const std::size_t e = config_.time_embed_dim;
  Tensor temb(z.rank() == 1 ? Shape{e} : Shape{batch, e});
  for (std::size_t r = 0; r < batch; ++r) {
    if (steps[r] == 0) throw ContractViolation("denoiser: step index must be >= 1");
    const auto emb = time_embedding(steps[r], e);
    std::copy(emb.begin(), emb.end(), temb.ptr() + r * e);
  }

  Var h = concat(tape, {z_n, cond, tape.constant(std::move(temb))});
  for (std::size_t i = 0; i < config_.hidden_layers; ++i) {
    Var w = tape.param(params_.get(layer_name(i) + ".weight"));
    Var b = tape.param(params_.get(layer_name(i) + ".bias"));
    h = silu(tape, affine(tape, w, b, h));
  }
  Var o = affine(tape, tape.param(params_.get("out.weight")), tape.param(params_.get("out.bias")),
                 h);
  return config_.residual ? add(tape, o, z_n) : o;
}

Tensor Denoiser::predict_values(const Tensor& z_n, std::span<const std::size_t> steps,
                                const Tensor& cond) const {
  Tape tape(false);
  // Inference tapes never write through parameter handles.
  auto& self = const_cast<Denoiser&>(*this);
  Var out = self.predict(tape, tape.constant(z_n), steps, tape.constant(cond));
  return tape.value(out);
}

}  // namespace diffgap
