#include <algorithm>
#include <cstdlib>
#include <map>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "diffgap/commands.hpp"
#include "diffgap/config.hpp"
#include "diffgap/corpus.hpp"
#include "diffgap/error.hpp"
#include "../support/test_util.hpp"

using namespace diffgap;
using diffgap::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

// Small enough that a full pipeline runs in well under a second.
Overrides tiny_overrides(const fs::path& out) {
  return {{"train_count", "120"}, {"eval_count", "30"},   {"dim_a", "12"},
          {"dim_v", "12"},        {"concept_dim", "4"},   {"time_embed_dim", "4"},
          {"hidden_dim", "16"},   {"hidden_layers", "1"}, {"batch_size", "16"},
          {"epochs", "2"},        {"interval", "5"},      {"sample_steps", "5"},
          {"gradcheck_seeds", "2"}, {"gradcheck_coords", "4"}, {"out", out.string()}};
}

RunConfig tiny_config(const fs::path& out, Overrides extra = {}) {
  Overrides all = tiny_overrides(out);
  all.insert(all.end(), extra.begin(), extra.end());
  return parse_config(std::nullopt, all);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

int run(std::string_view cmd, const RunConfig& cfg, std::string_view axis = "",
        std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_command(cmd, cfg, axis, out, err);
  if (err_text != nullptr) *err_text = err.str();
  return code;
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("parse_config: empty file gives defaults") {
  const auto dir = scratch_dir("cfg_empty");
  write(dir / "empty.cfg", "");
  const RunConfig cfg = parse_config(dir / "empty.cfg", {});
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.train.learning_rate == 2e-4);
  CHECK(cfg.train.interval == 5000);
  CHECK(cfg.train.epochs == 30);
  CHECK(cfg.concept_spec.concept_dim == 16);
  CHECK(cfg.concept_spec.dim_a == 512);
  CHECK(cfg.train_count == 5000);
  CHECK(cfg.eval_count == 500);
  CHECK(cfg.contrastive.temperature == 0.07);
  CHECK(cfg.train.schedule.steps == 1000);
  CHECK(format_config(cfg) == format_config(RunConfig{}));
}

TEST_CASE("parse_config: flags override the file, comments and blanks are ignored") {
  const auto dir = scratch_dir("cfg_prec");
  write(dir / "run.cfg", "# comment\n\ninterval = 1000   # trailing\nbatch_size=32\n");
  const RunConfig file_only = parse_config(dir / "run.cfg", {});
  CHECK(file_only.train.interval == 1000);
  CHECK(file_only.train.batch_size == 32);
  const RunConfig flagged = parse_config(dir / "run.cfg", {{"interval", "5000"}});
  CHECK(flagged.train.interval == 5000);
  CHECK(flagged.train.batch_size == 32);
  CHECK(parse_config(std::nullopt, {{"interval", "inf"}}).train.interval == kNeverToggle);
}

TEST_CASE("parse_config: errors name the offending key") {
  const auto dir = scratch_dir("cfg_err");
  write(dir / "typo.cfg", "btach_size = 64\n");
  try {
    (void)parse_config(dir / "typo.cfg", {});
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("btach_size") != std::string::npos);
    CHECK(what.find("typo.cfg:1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(std::nullopt, {{"batch_size", "sixty"}}), ConfigError);
  CHECK_THROWS_AS(parse_config(std::nullopt, {{"learning_rate", "nan"}}), ConfigError);
  CHECK_THROWS_AS(parse_config(std::nullopt, {{"direction", "up"}}), ConfigError);
  CHECK_THROWS_AS(parse_config(std::nullopt, {{"time_embed_dim", "7"}}), ConfigError);
  CHECK_THROWS_AS(parse_config(std::nullopt, {{"sample_steps", "1001"}}), ConfigError);
  write(dir / "noeq.cfg", "batch_size 64\n");
  CHECK_THROWS_AS(parse_config(dir / "noeq.cfg", {}), ConfigError);
}

TEST_CASE("DIFFGAP_SEED is the lowest-precedence seed source") {
  ::setenv("DIFFGAP_SEED", "17", 1);
  CHECK(parse_config(std::nullopt, {}).seed == 17);
  CHECK(parse_config(std::nullopt, {{"seed", "3"}}).seed == 3);
  ::setenv("DIFFGAP_SEED", "x", 1);
  CHECK_THROWS_AS(parse_config(std::nullopt, {}), ConfigError);
  ::unsetenv("DIFFGAP_SEED");
  CHECK(parse_config(std::nullopt, {}).seed == 0);
}

TEST_CASE("format_config reads back identically for every key") {
  RunConfig cfg = tiny_config("/tmp/x", {{"interval", "inf"}, {"direction", "a2v"}, {"beta_end", "0.015"}});
  RunConfig back;
  apply_config_text(back, format_config(cfg), "resolved.cfg");
  CHECK(format_config(back) == format_config(cfg));
  CHECK(config_keys().size() == line_count(format_config(cfg)));
}

TEST_CASE("reference interval units scale to desk iterations") {
  RunConfig cfg = tiny_config("/tmp/x", {{"interval_units", "reference"}, {"reference_total_iters", "30000"}});
  // 120 items / 16 per batch = 8 iterations per epoch, 2 epochs.
  CHECK(cfg.total_iterations() == 16);
  CHECK(cfg.scale_interval(5000) == 3);
  CHECK(cfg.scale_interval(1000) == 1);
  CHECK(cfg.scale_interval(kNeverToggle) == kNeverToggle);
}

TEST_CASE("end-to-end pipeline is deterministic and writes resolved.cfg") {
  std::vector<std::map<std::string, std::string>> runs;
  for (int pass = 0; pass < 2; ++pass) {
    const auto dir = scratch_dir("pipe" + std::to_string(pass));
    const RunConfig base = tiny_config(dir);
    REQUIRE(run("gen-data", base) == 0);
    RunConfig with_corpus = tiny_config(dir, {{"corpus", (dir / "corpus.dgc1").string()}});
    REQUIRE(run("train", with_corpus) == 0);
    RunConfig with_ckpt =
        tiny_config(dir, {{"corpus", (dir / "corpus.dgc1").string()}, {"checkpoint", (dir / "checkpoint.dgck").string()}});
    REQUIRE(run("eval-retrieval", with_ckpt) == 0);
    REQUIRE(run("eval-gen", with_ckpt) == 0);
    REQUIRE(run("sample", with_ckpt) == 0);
    std::map<std::string, std::string> files;
    for (const char* f : {"corpus.dgc1", "checkpoint.dgck", "loss.csv", "retrieval.csv", "generation.csv",
                          "samples.dgc1", "resolved.cfg"}) {
      REQUIRE(fs::exists(dir / f));
      files[f] = slurp(dir / f);
    }
    runs.push_back(std::move(files));
    CHECK(load_corpus(dir / "samples.dgc1").dim_v() == 0);

    // Re-running from resolved.cfg reproduces the report byte-for-byte.
    const auto rerun = scratch_dir("pipe_rerun" + std::to_string(pass));
    const RunConfig replay = parse_config(dir / "resolved.cfg", {{"out", rerun.string()}});
    REQUIRE(run("eval-retrieval", replay) == 0);
    CHECK(slurp(rerun / "retrieval.csv") == runs.back()["retrieval.csv"]);
  }
  for (const auto& [name, bytes] : runs[0]) {
    if (name == "resolved.cfg") continue;  // embeds the output directory
    CHECK_MESSAGE(runs[1].at(name) == bytes, name);
  }
  const std::string csv = runs[0]["retrieval.csv"];
  CHECK(csv.rfind("direction,k,recall,query_count,steps,seed\n", 0) == 0);
  CHECK(line_count(csv) == 1 + 4 * 3);  // diffgap and cosine rows, both directions
}

TEST_CASE("ablate rows") {
  const auto dir = scratch_dir("ablate");
  RunConfig cfg = tiny_config(dir, {{"sample_steps", "50"}});
  REQUIRE(run("ablate", cfg, "steps") == 0);
  const std::string steps = slurp(dir / "ablate_steps.csv");
  for (const char* s : {",50,", ",20,", ",5,"}) CHECK(steps.find(s) != std::string::npos);
  CHECK(line_count(steps) == 1 + 3 * 2 * 3);  // 3 step counts, 2 directions, 3 ks

  REQUIRE(run("ablate", cfg, "interval") == 0);
  const std::string intervals = slurp(dir / "ablate_interval.csv");
  CHECK(intervals.rfind("interval,desk_interval,direction,k,recall,query_count,steps,seed\n", 0) == 0);
  for (const char* m : {"\n1000,", "\n5000,", "\n10000,", "\ninf,"}) CHECK(intervals.find(m) != std::string::npos);
  CHECK(line_count(intervals) == 1 + 4 * 2 * 3);
  CHECK(fs::exists(dir / "resolved.cfg"));
}

TEST_CASE("grad-check command") {
  const auto dir = scratch_dir("gc");
  REQUIRE(run("grad-check", tiny_config(dir)) == 0);
  const std::string report = slurp(dir / "gradcheck.txt");
  CHECK(report.find("full seed=0 PASS") != std::string::npos);
  CHECK(report.find("tiny seed=1 PASS") != std::string::npos);
}

TEST_CASE("failures exit nonzero with a one-line cause") {
  const auto dir = scratch_dir("fail");
  std::string err;
  CHECK(run("eval-retrieval", tiny_config(dir), "", &err) != 0);
  CHECK(err.find("checkpoint") != std::string::npos);
  CHECK(line_count(err) == 1);

  CHECK(run("train", tiny_config(dir, {{"corpus", (dir / "missing.dgc1").string()}}), "", &err) != 0);
  CHECK(line_count(err) == 1);

  write(dir / "junk.dgc1", "DGC1junk");
  CHECK(run("train", tiny_config(dir, {{"corpus", (dir / "junk.dgc1").string()}}), "", &err) != 0);
  CHECK(err.find("header") != std::string::npos);

  // A checkpoint for other widths is rejected.
  REQUIRE(run("train", tiny_config(dir)) == 0);
  CHECK(run("eval-retrieval",
            tiny_config(dir, {{"dim_a", "8"}, {"checkpoint", (dir / "checkpoint.dgck").string()}}), "",
            &err) != 0);
  CHECK(err.find("dims") != std::string::npos);

  CHECK(run("ablate", tiny_config(dir), "nonsense", &err) != 0);
  CHECK(run("launch", tiny_config(dir), "", &err) != 0);
}

TEST_CASE("validate_artifact rejects malformed files") {
  const auto dir = scratch_dir("validate");
  write(dir / "empty.csv", "");
  CHECK_THROWS(validate_artifact(dir / "empty.csv"));
  write(dir / "header_only.csv", "a,b\n");
  CHECK_THROWS(validate_artifact(dir / "header_only.csv"));
  write(dir / "ok.csv", "a,b\n1,2\n");
  CHECK_NOTHROW(validate_artifact(dir / "ok.csv"));
  write(dir / "bad.dgck", "DGCK");
  CHECK_THROWS_AS(validate_artifact(dir / "bad.dgck"), FormatError);
}

}  // TEST_SUITE
