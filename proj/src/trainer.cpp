#include "diffgap/trainer.hpp"

#include <cmath>
#include <sstream>

#include "diffgap/error.hpp"

namespace diffgap {

std::string_view direction_label(Direction d) {
  return d == Direction::CondV_DenoiseA ? "v2a" : "a2v";
}

Direction parse_direction(std::string_view label) {
  if (label == "v2a") return Direction::CondV_DenoiseA;
  if (label == "a2v") return Direction::CondA_DenoiseV;
  throw ContractViolation("unknown direction '" + std::string(label) + "' (expected v2a or a2v)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ContractViolation("train config: batch_size must be >= 1");
  if (interval == 0) throw ContractViolation("train config: interval must be >= 1");
  if (!(learning_rate > 0.0)) throw ContractViolation("train config: learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ContractViolation("train config: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ContractViolation("train config: adam_eps must be > 0");
  (void)NoiseSchedule::linear(schedule);
  denoiser_config(1, 1).validate();
}

DenoiserConfig TrainConfig::denoiser_config(std::size_t embed_dim, std::size_t cond_dim) const {
  return DenoiserConfig{embed_dim, cond_dim, time_embed_dim, hidden_dim, hidden_layers, residual};
}

Tensor to_diffusion_space(const Tensor& unit_rows) {
  Tensor out = unit_rows;
  const double scale = std::sqrt(static_cast<double>(unit_rows.cols()));
  for (double& x : out.data()) x *= scale;
  return out;
}

std::size_t iterations_per_epoch(std::size_t items, std::size_t batch_size) {
  return (items + batch_size - 1) / batch_size;
}

Checkpoint initial_checkpoint(std::size_t dim_a, std::size_t dim_v, const TrainConfig& cfg) {
  cfg.validate();
  Rng init_v2a = Rng::substream(cfg.seed, "init/v2a");
  Rng init_a2v = Rng::substream(cfg.seed, "init/a2v");
  Denoiser v2a(cfg.denoiser_config(dim_a, dim_v), init_v2a);
  Denoiser a2v(cfg.denoiser_config(dim_v, dim_a), init_a2v);
  AdamState adam_v2a = AdamState::for_params(v2a.params());
  AdamState adam_a2v = AdamState::for_params(a2v.params());
  return Checkpoint{cfg,
                    0,
                    Direction::CondV_DenoiseA,
                    0,
                    DirectionModel{std::move(v2a), std::move(adam_v2a)},
                    DirectionModel{std::move(a2v), std::move(adam_a2v)}};
}

void check_compatible(const Checkpoint& ckpt, std::size_t dim_a, std::size_t dim_v) {
  if (ckpt.dim_a() != dim_a || ckpt.dim_v() != dim_v) {
    throw ContractViolation("checkpoint was trained for dims (a=" + std::to_string(ckpt.dim_a()) +
                            ", v=" + std::to_string(ckpt.dim_v()) + ") but data has (a=" +
                            std::to_string(dim_a) + ", v=" + std::to_string(dim_v) + ")");
  }
}

double train_step(Denoiser& d, const Tensor& z0, const Tensor& cond, const NoiseSchedule& sched,
                  AdamState& adam, const AdamHyper& hyper, Rng& rng) {
  d.params().zero_grad();
  DiffusionLoss loss = diffusion_loss(noise_model(d), z0, cond, sched, rng);
  const double value = loss.value();
  if (!std::isfinite(value)) {
    throw DivergenceError("train_step: diffusion loss is " + std::to_string(value) +
                          " after " + std::to_string(adam.t) + " optimizer steps");
  }
  loss.tape.backward(loss.loss);
  adam_step(d.params(), adam, hyper);
  return value;
}

namespace {

Tensor gather_rows(const Tensor& t, const std::size_t* idx, std::size_t n) {
  const std::size_t w = t.dim(1);
  Tensor out(Shape{n, w});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(t.ptr() + idx[r] * w, w, out.ptr() + r * w);
  return out;
}

}  // namespace

TrainResult train(const PairedCorpus& raw_corpus, const TrainConfig& cfg,
                  const TrainProgress& progress) {
  cfg.validate();
  if (raw_corpus.count() == 0) throw ContractViolation("train: empty corpus");
  if (raw_corpus.dim_a() == 0 || raw_corpus.dim_v() == 0) {
    throw ContractViolation("train: both modalities need a non-zero width");
  }
  const PairedCorpus unit = raw_corpus.normalized();
  const PairedCorpus corpus(to_diffusion_space(unit.a()), to_diffusion_space(unit.v()));
  const NoiseSchedule sched = NoiseSchedule::linear(cfg.schedule);
  const AdamHyper hyper = cfg.adam();

  TrainResult result{initial_checkpoint(corpus.dim_a(), corpus.dim_v(), cfg), {}};
  Checkpoint& ckpt = result.checkpoint;
  Rng shuffle_rng = Rng::substream(cfg.seed, "train/shuffle");
  Rng noise_rng = Rng::substream(cfg.seed, "train/noise");

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(corpus.count(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - begin);
      const bool v2a = ckpt.direction == Direction::CondV_DenoiseA;
      const Tensor& target = v2a ? corpus.a() : corpus.v();
      const Tensor& cond = v2a ? corpus.v() : corpus.a();
      DirectionModel& model = ckpt.model(ckpt.direction);

      ++ckpt.iteration;
      const double loss =
          train_step(model.denoiser, gather_rows(target, order.data() + begin, n),
                     gather_rows(cond, order.data() + begin, n), sched, model.adam, hyper,
                     noise_rng);
      result.history.push_back(LossRecord{ckpt.iteration, ckpt.direction, loss});
      if (progress) progress(result.history.back());

      if (ckpt.iteration % cfg.interval == 0) {
        ckpt.direction = toggled(ckpt.direction);
        ++ckpt.toggles;
      }
    }
  }
  return result;
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,direction,loss\n";
  for (const auto& r : history) {
    os << r.iteration << ',' << direction_label(r.direction) << ',' << r.loss << '\n';
  }
  return os.str();
}

}  // namespace diffgap
