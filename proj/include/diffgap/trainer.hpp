#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "diffgap/adam.hpp"
#include "diffgap/corpus.hpp"
#include "diffgap/denoiser.hpp"
#include "diffgap/diffusion.hpp"
#include "diffgap/schedule.hpp"

namespace diffgap {

// Which modality conditions and which is denoised.
enum class Direction : std::uint8_t {
  CondV_DenoiseA,  // "v2a": condition on B, generate A
  CondA_DenoiseV,  // "a2v": condition on A, generate B
};

std::string_view direction_label(Direction d);
Direction parse_direction(std::string_view label);
inline Direction toggled(Direction d) {
  return d == Direction::CondV_DenoiseA ? Direction::CondA_DenoiseV : Direction::CondV_DenoiseA;
}

// Interval value that disables direction switching.
inline constexpr std::uint64_t kNeverToggle = std::numeric_limits<std::uint64_t>::max();

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 2e-4;
  std::size_t epochs = 30;
  std::uint64_t interval = 5000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  ScheduleParams schedule;
  std::size_t time_embed_dim = 128;
  std::size_t hidden_dim = 512;
  std::size_t hidden_layers = 2;
  bool residual = true;

  void validate() const;
  AdamHyper adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
  DenoiserConfig denoiser_config(std::size_t embed_dim, std::size_t cond_dim) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Unit-norm embeddings are multiplied by sqrt(width) before entering the
// diffusion so each coordinate has roughly unit variance, matching eps ~ N(0, I).
Tensor to_diffusion_space(const Tensor& unit_rows);

std::size_t iterations_per_epoch(std::size_t items, std::size_t batch_size);

struct DirectionModel {
  Denoiser denoiser;
  AdamState adam;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig train;
  std::uint64_t iteration = 0;
  Direction direction = Direction::CondV_DenoiseA;
  std::uint64_t toggles = 0;
  DirectionModel v2a;  // denoises A given B
  DirectionModel a2v;  // denoises B given A

  DirectionModel& model(Direction d) { return d == Direction::CondV_DenoiseA ? v2a : a2v; }
  const DirectionModel& model(Direction d) const {
    return d == Direction::CondV_DenoiseA ? v2a : a2v;
  }
  std::size_t dim_a() const { return v2a.denoiser.config().embed_dim; }
  std::size_t dim_v() const { return a2v.denoiser.config().embed_dim; }
};

// Fresh checkpoint with both denoisers initialized from the "init" substreams.
Checkpoint initial_checkpoint(std::size_t dim_a, std::size_t dim_v, const TrainConfig& cfg);

// Rejects checkpoints whose embedding widths differ from the data at hand.
void check_compatible(const Checkpoint& ckpt, std::size_t dim_a, std::size_t dim_v);

struct LossRecord {
  std::uint64_t iteration;
  Direction direction;
  double loss;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> history;
};

// One optimizer step on the mean diffusion loss over a batch of
// (target z0, condition) rows. Returns the batch loss.
double train_step(Denoiser& d, const Tensor& z0, const Tensor& cond, const NoiseSchedule& sched,
                  AdamState& adam, const AdamHyper& hyper, Rng& rng);

using TrainProgress = std::function<void(const LossRecord&)>;

// Bidirectional split training: starts conditioning on B to denoise A and
// switches direction after every iteration j with j % interval == 0. Each
// direction owns its own denoiser and optimizer state.
TrainResult train(const PairedCorpus& corpus, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

std::string loss_history_csv(const std::vector<LossRecord>& history);

// DGCK checkpoint file: "DGCK", u32 version, u32 header length, UTF-8 JSON
// header, then tensor records (u32 name length, name, u32 rank, u32 dims...,
// f64 little-endian data).
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace diffgap
