#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "diffgap/commands.hpp"
#include "diffgap/config.hpp"
#include "diffgap/error.hpp"

int main(int argc, char** argv) {
  using namespace diffgap;

  CLI::App app{"Conditional diffusion on paired contrastive embeddings"};
  app.set_help_all_flag("--help-all");

  std::string command;
  std::string config_path;
  std::string seed, out, corpus, ckpt, steps, interval;
  std::string axis;
  std::vector<std::string> sets;
  bool list_keys = false;

  app.add_option("command", command, "gen-data | train | sample | eval-retrieval | eval-gen | grad-check | ablate")
      ->check(CLI::IsMember(command_names()));
  app.add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed (u64)");
  app.add_option("--out", out, "Output directory");
  app.add_option("--corpus", corpus, "DGC1 corpus file");
  app.add_option("--ckpt", ckpt, "DGCK checkpoint file");
  app.add_option("--steps", steps, "Sampling steps");
  app.add_option("--interval", interval, "Direction switch interval m (or inf)");
  app.add_option("--axis", axis, "Ablation axis")->check(CLI::IsMember({"steps", "interval"}));
  app.add_option("--set", sets, "Override a config key (key=value), repeatable");
  app.add_flag("--list-keys", list_keys, "Print every config key with its default and exit");

  CLI11_PARSE(app, argc, argv);

  if (list_keys) {
    std::cout << format_config(RunConfig{});
    return 0;
  }
  if (command.empty()) {
    std::cerr << "diffgap: error: a command is required (see --help)\n";
    return 1;
  }
  if (command == "ablate" && axis.empty()) {
    std::cerr << "diffgap ablate: error: --axis steps|interval is required\n";
    return 1;
  }

  Overrides overrides;
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "diffgap: error: --set expects key=value, got '" << kv << "'\n";
      return 1;
    }
    overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const std::pair<const char*, const std::string*> flags[] = {
      {"seed", &seed},   {"out", &out},           {"corpus", &corpus},
      {"checkpoint", &ckpt}, {"sample_steps", &steps}, {"interval", &interval}};
  for (const auto& [key, value] : flags) {
    if (!value->empty()) overrides.emplace_back(key, *value);
  }

  RunConfig cfg;
  try {
    cfg = parse_config(config_path.empty() ? std::nullopt
                                           : std::optional<std::filesystem::path>(config_path),
                       overrides);
  } catch (const std::exception& e) {
    std::cerr << "diffgap " << command << ": error: " << e.what() << '\n';
    return 1;
  }
  return run_command(command, cfg, axis, std::cout, std::cerr);
}
