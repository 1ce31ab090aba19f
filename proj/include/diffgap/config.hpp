#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diffgap/contrastive.hpp"
#include "diffgap/trainer.hpp"

namespace diffgap {

// Every setting of a run. Precedence, lowest first: defaults, DIFFGAP_SEED,
// the config file, then flag overrides.
struct RunConfig {
  std::uint64_t seed = 0;

  // Corpus. The last eval_count items are held out for evaluation.
  ConceptSpec concept_spec;
  std::size_t train_count = 5000;
  std::size_t eval_count = 500;
  // Contrastive pretraining of toy encoders; zero epochs uses the generated
  // embeddings directly.
  ContrastiveConfig contrastive{0.07, 64, 0, 1e-3};

  TrainConfig train;
  // "iterations": interval is an iteration count. "reference": interval is
  // rescaled by total_iters / reference_total_iters.
  std::string interval_units = "iterations";
  std::size_t reference_total_iters = 30000;

  std::size_t sample_steps = 50;
  double eta = 0.0;
  Direction direction = Direction::CondV_DenoiseA;

  std::size_t gradcheck_seeds = 10;
  // Coordinates checked per parameter tensor on the full-size network (0 = all).
  std::size_t gradcheck_coords = 16;

  std::filesystem::path corpus;
  std::filesystem::path checkpoint;
  std::filesystem::path out = ".";

  std::size_t total_count() const { return train_count + eval_count; }
  // Iterations for a full training run on train_count items.
  std::uint64_t total_iterations() const;
  // Training interval after applying interval_units.
  std::uint64_t effective_interval() const;
  // Maps an interval given in reference units to desk iterations (>= 1).
  std::uint64_t scale_interval(std::uint64_t reference_interval) const;
  // Train config with the effective interval and the run seed.
  TrainConfig resolved_train() const;

  void validate() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Applies one key/value; unknown keys and unparseable values raise ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat "key = value" text with '#' comments.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);

// Defaults, then DIFFGAP_SEED (if set), then the file (if any), then overrides.
RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                       const Overrides& overrides);

// Every key in a stable order, in a form parse_config reads back unchanged.
std::string format_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace diffgap
