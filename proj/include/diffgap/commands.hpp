#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "diffgap/config.hpp"
#include "diffgap/evalkit.hpp"
#include "diffgap/gradcheck.hpp"

namespace diffgap {

// Corpus described by the config, quantized to the stored f32 precision so an
// in-memory corpus equals one read back from gen-data's file.
PairedCorpus build_corpus(const RunConfig& cfg);
// The file named by cfg.corpus, or build_corpus(cfg) when no file is given.
PairedCorpus load_or_build_corpus(const RunConfig& cfg);

struct CorpusSplit {
  PairedCorpus train;
  PairedCorpus eval;
};
// The last eval_count items are held out.
CorpusSplit split_corpus(const PairedCorpus& corpus, std::size_t eval_count);

// Loads cfg.checkpoint and checks it against the corpus widths.
Checkpoint load_checkpoint_for(const RunConfig& cfg, const PairedCorpus& corpus);

// Cosine baseline and DiffGAP reports for both directions on the eval split.
std::vector<RetrievalReport> evaluate_retrieval(const Checkpoint& ckpt, const CorpusSplit& split,
                                                std::size_t steps, std::uint64_t seed,
                                                bool include_baselines);

struct GradCheckRun {
  std::string label;  // "full" or "tiny"
  std::uint64_t seed = 0;
  GradCheckReport report;
};
// Diffusion-loss gradient checks on the configured denoiser (sampled
// coordinates) and on a D=8 denoiser (every coordinate), one per seed.
std::vector<GradCheckRun> run_gradcheck_suite(const RunConfig& cfg);

struct CommandOutput {
  std::vector<std::filesystem::path> artifacts;
  std::string summary;  // one line
  bool ok = true;
};

CommandOutput cmd_gen_data(const RunConfig& cfg);
CommandOutput cmd_train(const RunConfig& cfg);
CommandOutput cmd_sample(const RunConfig& cfg);
CommandOutput cmd_eval_retrieval(const RunConfig& cfg);
CommandOutput cmd_eval_gen(const RunConfig& cfg);
CommandOutput cmd_grad_check(const RunConfig& cfg);
// axis is "steps" (sample steps 50, 20, 5) or "interval" (reference intervals
// 1000, 5000, 10000 and never).
CommandOutput cmd_ablate(const RunConfig& cfg, std::string_view axis);

std::vector<std::string> command_names();

// Runs a command, writes resolved.cfg, validates every artifact, and prints a
// summary (or a one-line error). Returns the process exit status.
int run_command(std::string_view command, const RunConfig& cfg, std::string_view axis,
                std::ostream& out, std::ostream& err);

// Re-reads an artifact and throws if it is malformed.
void validate_artifact(const std::filesystem::path& path);

}  // namespace diffgap
