#include "diffgap/commands.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "diffgap/error.hpp"

namespace diffgap {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

fs::path out_file(const RunConfig& cfg, const char* name) {
  fs::create_directories(cfg.out);
  return cfg.out / name;
}

ConceptSpec corpus_spec(const RunConfig& cfg) {
  ConceptSpec spec = cfg.concept_spec;
  spec.count = cfg.total_count();
  spec.seed = cfg.seed;
  return spec;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

Tensor generate_for(const Checkpoint& ckpt, Direction d, const CorpusSplit& split,
                    std::size_t steps, double eta, std::uint64_t seed) {
  const Tensor& cond = d == Direction::CondV_DenoiseA ? split.eval.v() : split.eval.a();
  return generate(ckpt, d, cond, steps, eta, seed);
}

}  // namespace

PairedCorpus build_corpus(const RunConfig& cfg) {
  const ConceptSpec spec = corpus_spec(cfg);
  PairedCorpus corpus = cfg.contrastive.epochs > 0
                            ? train_contrastive(spec, cfg.contrastive).corpus
                            : generate_corpus(spec);
  return decode_corpus(encode_corpus(corpus));
}

PairedCorpus load_or_build_corpus(const RunConfig& cfg) {
  return cfg.corpus.empty() ? build_corpus(cfg) : load_corpus(cfg.corpus);
}

CorpusSplit split_corpus(const PairedCorpus& corpus, std::size_t eval_count) {
  if (eval_count == 0 || eval_count >= corpus.count()) {
    throw ContractViolation("corpus of " + std::to_string(corpus.count()) +
                            " items cannot hold out eval_count=" + std::to_string(eval_count) +
                            " and still train");
  }
  const std::size_t cut = corpus.count() - eval_count;
  return CorpusSplit{corpus.slice(0, cut), corpus.slice(cut, corpus.count())};
}

Checkpoint load_checkpoint_for(const RunConfig& cfg, const PairedCorpus& corpus) {
  if (cfg.checkpoint.empty()) {
    throw ConfigError("no checkpoint given (pass --ckpt or set checkpoint = PATH)");
  }
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  check_compatible(ckpt, corpus.dim_a(), corpus.dim_v());
  return ckpt;
}

std::vector<RetrievalReport> evaluate_retrieval(const Checkpoint& ckpt, const CorpusSplit& split,
                                                std::size_t steps, std::uint64_t seed,
                                                bool include_baselines) {
  const PairedCorpus eval = split.eval.normalized();
  std::vector<RetrievalReport> reports;
  reports.push_back(
      diffgap_retrieval(ckpt, Direction::CondV_DenoiseA, eval.v(), eval.a(), steps, seed));
  reports.push_back(
      diffgap_retrieval(ckpt, Direction::CondA_DenoiseV, eval.a(), eval.v(), steps, seed));
  if (include_baselines && eval.dim_a() == eval.dim_v()) {
    reports.push_back(cosine_retrieval(eval.v(), eval.a(), "v2a"));
    reports.push_back(cosine_retrieval(eval.a(), eval.v(), "a2v"));
    reports[2].seed = reports[3].seed = seed;
  }
  return reports;
}

std::vector<GradCheckRun> run_gradcheck_suite(const RunConfig& cfg) {
  struct Path {
    const char* label;
    DenoiserConfig config;
    std::size_t coords;
    bool resolution_floor;
  };
  const std::array<Path, 2> paths = {
      Path{"full", cfg.train.denoiser_config(cfg.concept_spec.dim_a, cfg.concept_spec.dim_v),
           cfg.gradcheck_coords, true},
      Path{"tiny", DenoiserConfig{8, 8, 4, 8, 2, cfg.train.residual}, 0, false},
  };
  const NoiseSchedule sched = NoiseSchedule::linear(cfg.train.schedule);
  std::vector<GradCheckRun> runs;
  for (const Path& path : paths) {
    for (std::uint64_t k = 0; k < cfg.gradcheck_seeds; ++k) {
      const std::uint64_t seed = cfg.seed + k;
      Rng rng = Rng::substream(seed, "gradcheck/inputs");
      Denoiser d(path.config, rng);
      const std::size_t batch = 2;
      const Tensor z0 = normalized_rows(standard_normal({batch, path.config.embed_dim}, rng));
      const Tensor cond = normalized_rows(standard_normal({batch, path.config.cond_dim}, rng));
      std::vector<std::size_t> steps(batch);
      for (auto& n : steps) n = rng.uniform_int(1, sched.steps());
      const Tensor eps = standard_normal(z0.shape(), rng);
      Tensor z_n(z0.shape());
      for (std::size_t r = 0; r < batch; ++r) {
        const double a = std::sqrt(sched.alpha_bar(steps[r]));
        const double s = std::sqrt(1.0 - sched.alpha_bar(steps[r]));
        for (std::size_t c = 0; c < z0.cols(); ++c) {
          z_n.at(r, c) = a * z0.at(r, c) + s * eps.at(r, c);
        }
      }
      GradCheckOptions opts;
      opts.coords_per_tensor = path.coords;
      opts.seed = seed;
      opts.resolution_floor = path.resolution_floor;
      auto loss = [&](Tape& tape) {
        Var pred = d.predict(tape, tape.constant(z_n), steps, tape.constant(cond));
        return mse(tape, pred, tape.constant(eps));
      };
      runs.push_back(GradCheckRun{path.label, seed, grad_check(loss, d.params(), opts)});
    }
  }
  return runs;
}

CommandOutput cmd_gen_data(const RunConfig& cfg) {
  const PairedCorpus corpus = build_corpus(cfg);
  const fs::path path = out_file(cfg, "corpus.dgc1");
  save_corpus(corpus, path);
  return {{path},
          "wrote " + std::to_string(corpus.count()) + " pairs (dim_a=" +
              std::to_string(corpus.dim_a()) + ", dim_v=" + std::to_string(corpus.dim_v()) +
              ") to " + path.string()};
}

CommandOutput cmd_train(const RunConfig& cfg) {
  const CorpusSplit split = split_corpus(load_or_build_corpus(cfg), cfg.eval_count);
  const TrainResult result = train(split.train, cfg.resolved_train());
  const fs::path ckpt_path = out_file(cfg, "checkpoint.dgck");
  const fs::path loss_path = out_file(cfg, "loss.csv");
  save_checkpoint(result.checkpoint, ckpt_path);
  write_text(loss_path, loss_history_csv(result.history));
  const double last = result.history.empty() ? 0.0 : result.history.back().loss;
  return {{ckpt_path, loss_path},
          "trained " + std::to_string(result.checkpoint.iteration) + " iterations (" +
              std::to_string(result.checkpoint.toggles) + " direction switches), final loss " +
              fixed(last, 4)};
}

CommandOutput cmd_sample(const RunConfig& cfg) {
  const PairedCorpus corpus = load_or_build_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.eval_count);
  const Checkpoint ckpt = load_checkpoint_for(cfg, corpus);
  Tensor generated = generate_for(ckpt, cfg.direction, split, cfg.sample_steps, cfg.eta, cfg.seed);
  const std::size_t count = generated.dim(0);
  const fs::path path = out_file(cfg, "samples.dgc1");
  save_corpus(PairedCorpus(std::move(generated), Tensor(Shape{count, 0})), path);
  return {{path},
          "generated " + std::to_string(count) + " " + std::string(direction_label(cfg.direction)) +
              " embeddings with " + std::to_string(cfg.sample_steps) + " steps"};
}

CommandOutput cmd_eval_retrieval(const RunConfig& cfg) {
  const PairedCorpus corpus = load_or_build_corpus(cfg);
  const Checkpoint ckpt = load_checkpoint_for(cfg, corpus);
  const auto reports =
      evaluate_retrieval(ckpt, split_corpus(corpus, cfg.eval_count), cfg.sample_steps, cfg.seed, true);
  const fs::path path = out_file(cfg, "retrieval.csv");
  write_text(path, retrieval_csv(reports));
  std::string summary = "R@1";
  for (const auto& r : reports) {
    summary += " " + r.direction + (r.steps == 0 ? "(cosine)" : "(diffgap)") + "=" +
               fixed(r.recall[0]);
  }
  return {{path}, summary};
}

CommandOutput cmd_eval_gen(const RunConfig& cfg) {
  const PairedCorpus corpus = load_or_build_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.eval_count);
  const PairedCorpus eval = split.eval.normalized();
  const Checkpoint ckpt = load_checkpoint_for(cfg, corpus);
  std::ostringstream csv;
  csv.precision(10);
  csv << "direction,mean_cosine,mse,count,steps,seed\n";
  std::string summary = "mean cosine";
  for (Direction d : {Direction::CondV_DenoiseA, Direction::CondA_DenoiseV}) {
    const Tensor generated = generate_for(ckpt, d, split, cfg.sample_steps, cfg.eta, cfg.seed);
    const Tensor& reference = d == Direction::CondV_DenoiseA ? eval.a() : eval.v();
    const GenerationMetrics m = generation_metrics(generated, reference);
    csv << direction_label(d) << ',' << m.mean_cosine << ',' << m.mse << ',' << m.count << ','
        << cfg.sample_steps << ',' << cfg.seed << '\n';
    summary += " " + std::string(direction_label(d)) + "=" + fixed(m.mean_cosine, 4);
  }
  const fs::path path = out_file(cfg, "generation.csv");
  write_text(path, csv.str());
  return {{path}, summary};
}

CommandOutput cmd_grad_check(const RunConfig& cfg) {
  const auto runs = run_gradcheck_suite(cfg);
  std::ostringstream os;
  bool ok = true;
  double worst = 0.0;
  for (const auto& run : runs) {
    os << run.label << " seed=" << run.seed << ' ' << run.report.summary();
    ok = ok && run.report.passed;
    worst = std::max(worst, run.report.max_rel_error);
  }
  os << (ok ? "PASS" : "FAIL") << '\n';
  const fs::path path = out_file(cfg, "gradcheck.txt");
  write_text(path, os.str());
  std::ostringstream summary;
  summary << (ok ? "PASS" : "FAIL") << ": " << runs.size()
          << " gradient checks, max relative error " << std::scientific << worst;
  return {{path}, summary.str(), ok};
}

CommandOutput cmd_ablate(const RunConfig& cfg, std::string_view axis) {
  const PairedCorpus corpus = load_or_build_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.eval_count);
  if (axis == "steps") {
    const Checkpoint ckpt = cfg.checkpoint.empty() ? train(split.train, cfg.resolved_train()).checkpoint
                                                   : load_checkpoint_for(cfg, corpus);
    std::vector<RetrievalReport> reports;
    for (std::size_t steps : {50, 20, 5}) {
      for (const auto& r : evaluate_retrieval(ckpt, split, steps, cfg.seed, false)) {
        reports.push_back(r);
      }
    }
    const fs::path path = out_file(cfg, "ablate_steps.csv");
    write_text(path, retrieval_csv(reports));
    return {{path},
            "v2a R@1 at steps 50/20/5: " + fixed(reports[0].recall[0]) + "/" +
                fixed(reports[2].recall[0]) + "/" + fixed(reports[4].recall[0])};
  }
  if (axis == "interval") {
    std::ostringstream csv;
    csv.precision(10);
    csv << "interval,desk_interval,direction,k,recall,query_count,steps,seed\n";
    std::string summary = "a2v R@1 by interval:";
    for (std::uint64_t m : {std::uint64_t{1000}, std::uint64_t{5000}, std::uint64_t{10000},
                            kNeverToggle}) {
      TrainConfig tc = cfg.resolved_train();
      tc.interval = cfg.scale_interval(m);
      const Checkpoint ckpt = train(split.train, tc).checkpoint;
      const std::string m_label = m == kNeverToggle ? "inf" : std::to_string(m);
      const std::string desk_label =
          tc.interval == kNeverToggle ? "inf" : std::to_string(tc.interval);
      for (const auto& r : evaluate_retrieval(ckpt, split, cfg.sample_steps, cfg.seed, false)) {
        for (std::size_t i = 0; i < kRecallKs.size(); ++i) {
          csv << m_label << ',' << desk_label << ',' << r.direction << ',' << kRecallKs[i] << ','
              << r.recall[i] << ',' << r.query_count << ',' << r.steps << ',' << r.seed << '\n';
        }
        if (r.direction == "a2v") summary += " " + m_label + "=" + fixed(r.recall[0]);
      }
    }
    const fs::path path = out_file(cfg, "ablate_interval.csv");
    write_text(path, csv.str());
    return {{path}, summary};
  }
  throw ConfigError("unknown ablation axis '" + std::string(axis) +
                    "' (expected steps or interval)");
}

std::vector<std::string> command_names() {
  return {"gen-data", "train", "sample", "eval-retrieval", "eval-gen", "grad-check", "ablate"};
}

void validate_artifact(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".dgc1") {
    (void)load_corpus(path);
  } else if (ext == ".dgck") {
    (void)load_checkpoint(path);
  } else if (ext == ".cfg") {
    const auto bytes = read_file_bytes(path);
    RunConfig reread;
    apply_config_text(reread, std::string(bytes.begin(), bytes.end()), path.string());
    if (format_config(reread) != std::string(bytes.begin(), bytes.end())) {
      throw FormatError(path.string(), "resolved config does not read back identically");
    }
  } else {
    const auto bytes = read_file_bytes(path);
    const std::string text(bytes.begin(), bytes.end());
    const auto newline = text.find('\n');
    if (newline == std::string::npos || newline + 1 >= text.size()) {
      throw FormatError(path.string(), "expected a header line and at least one row");
    }
  }
}

int run_command(std::string_view command, const RunConfig& cfg, std::string_view axis,
                std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    CommandOutput result;
    if (command == "gen-data") {
      result = cmd_gen_data(cfg);
    } else if (command == "train") {
      result = cmd_train(cfg);
    } else if (command == "sample") {
      result = cmd_sample(cfg);
    } else if (command == "eval-retrieval") {
      result = cmd_eval_retrieval(cfg);
    } else if (command == "eval-gen") {
      result = cmd_eval_gen(cfg);
    } else if (command == "grad-check") {
      result = cmd_grad_check(cfg);
    } else if (command == "ablate") {
      result = cmd_ablate(cfg, axis);
    } else {
      throw ConfigError("unknown command '" + std::string(command) + "'");
    }
    const fs::path resolved = out_file(cfg, "resolved.cfg");
    write_text(resolved, format_config(cfg));
    result.artifacts.push_back(resolved);
    for (const auto& path : result.artifacts) validate_artifact(path);
    out << command << ": " << result.summary << '\n';
    return result.ok ? 0 : 1;
  } catch (const std::exception& e) {
    err << "diffgap " << command << ": error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace diffgap
