#include "diffgap/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "diffgap/error.hpp"

namespace diffgap {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("invalid value '" + value + "' for key '" + key + "' (expected " + expected +
                    ")");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty() || !std::isfinite(out)) {
    bad_value(key, value, "a finite number");
  }
  return out;
}

std::uint64_t parse_interval(const std::string& key, const std::string& value) {
  if (value == "inf" || value == "never") return kNeverToggle;
  return parse_u64(key, value);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string fmt_interval(std::uint64_t v) {
  return v == kNeverToggle ? "inf" : std::to_string(v);
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DG_SIZE(name, member)                                                              \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& k, const std::string& v) {                   \
      c.member = parse_size(k, v);                                                         \
    },                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.member); }                        \
  }
#define DG_DOUBLE(name, member)                                                            \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& k, const std::string& v) {                   \
      c.member = parse_double(k, v);                                                       \
    },                                                                                     \
        [](const RunConfig& c) { return fmt_double(c.member); }                            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.seed = parse_u64(k, v);
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      DG_SIZE("train_count", train_count),
      DG_SIZE("eval_count", eval_count),
      DG_SIZE("concept_dim", concept_spec.concept_dim),
      DG_SIZE("dim_a", concept_spec.dim_a),
      DG_SIZE("dim_v", concept_spec.dim_v),
      DG_SIZE("raw_dim_a", concept_spec.raw_dim_a),
      DG_SIZE("raw_dim_v", concept_spec.raw_dim_v),
      DG_DOUBLE("sigma_a", concept_spec.sigma_a),
      DG_DOUBLE("sigma_v", concept_spec.sigma_v),
      DG_DOUBLE("alignment", concept_spec.alignment),
      DG_SIZE("contrastive_epochs", contrastive.epochs),
      DG_DOUBLE("temperature", contrastive.temperature),
      DG_SIZE("contrastive_batch_size", contrastive.batch_size),
      DG_DOUBLE("contrastive_lr", contrastive.learning_rate),
      DG_SIZE("time_embed_dim", train.time_embed_dim),
      DG_SIZE("hidden_dim", train.hidden_dim),
      DG_SIZE("hidden_layers", train.hidden_layers),
      Field{"residual",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.train.residual = parse_bool(k, v);
            },
            [](const RunConfig& c) { return std::string(c.train.residual ? "true" : "false"); }},
      DG_SIZE("schedule_steps", train.schedule.steps),
      DG_DOUBLE("beta_start", train.schedule.beta_start),
      DG_DOUBLE("beta_end", train.schedule.beta_end),
      DG_SIZE("batch_size", train.batch_size),
      DG_DOUBLE("learning_rate", train.learning_rate),
      DG_SIZE("epochs", train.epochs),
      Field{"interval",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.train.interval = parse_interval(k, v);
            },
            [](const RunConfig& c) { return fmt_interval(c.train.interval); }},
      Field{"interval_units",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v != "iterations" && v != "reference") {
                bad_value(k, v, "iterations or reference");
              }
              c.interval_units = v;
            },
            [](const RunConfig& c) { return c.interval_units; }},
      DG_SIZE("reference_total_iters", reference_total_iters),
      DG_DOUBLE("adam_beta1", train.adam_beta1),
      DG_DOUBLE("adam_beta2", train.adam_beta2),
      DG_DOUBLE("adam_eps", train.adam_eps),
      DG_SIZE("sample_steps", sample_steps),
      DG_DOUBLE("eta", eta),
      Field{"direction",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                c.direction = parse_direction(v);
              } catch (const ContractViolation&) {
                bad_value(k, v, "v2a or a2v");
              }
            },
            [](const RunConfig& c) { return std::string(direction_label(c.direction)); }},
      DG_SIZE("gradcheck_seeds", gradcheck_seeds),
      DG_SIZE("gradcheck_coords", gradcheck_coords),
      Field{"corpus",
            [](RunConfig& c, const std::string&, const std::string& v) { c.corpus = v; },
            [](const RunConfig& c) { return c.corpus.string(); }},
      Field{"checkpoint",
            [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; },
            [](const RunConfig& c) { return c.checkpoint.string(); }},
      Field{"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
            [](const RunConfig& c) { return c.out.string(); }},
  };
  return table;
}

#undef DG_SIZE
#undef DG_DOUBLE

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

}  // namespace

std::uint64_t RunConfig::total_iterations() const {
  return static_cast<std::uint64_t>(iterations_per_epoch(train_count, train.batch_size) *
                                    train.epochs);
}

std::uint64_t RunConfig::scale_interval(std::uint64_t reference_interval) const {
  if (reference_interval == kNeverToggle) return kNeverToggle;
  const double scaled = std::round(static_cast<double>(reference_interval) *
                                   static_cast<double>(total_iterations()) /
                                   static_cast<double>(reference_total_iters));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(scaled));
}

std::uint64_t RunConfig::effective_interval() const {
  return interval_units == "reference" ? scale_interval(train.interval) : train.interval;
}

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.interval = effective_interval();
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  try {
    ConceptSpec spec = concept_spec;
    spec.count = total_count();
    spec.seed = seed;
    spec.validate();
    if (contrastive.epochs > 0) contrastive.validate();
    resolved_train().validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  if (train_count == 0) throw ConfigError("train_count must be >= 1");
  if (eval_count == 0) throw ConfigError("eval_count must be >= 1");
  if (reference_total_iters == 0) throw ConfigError("reference_total_iters must be >= 1");
  if (sample_steps < 1 || sample_steps > train.schedule.steps) {
    throw ConfigError("sample_steps=" + std::to_string(sample_steps) + " must lie in 1.." +
                      std::to_string(train.schedule.steps) + " (schedule_steps)");
  }
  if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
  if (gradcheck_seeds == 0) throw ConfigError("gradcheck_seeds must be >= 1");
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ConfigError("unknown config key '" + key + "'");
  f->set(cfg, key, value);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                       const Overrides& overrides) {
  RunConfig cfg;
  if (const char* env = std::getenv("DIFFGAP_SEED"); env != nullptr && *env != '\0') {
    try {
      cfg.seed = parse_u64("seed", env);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("DIFFGAP_SEED: ") + e.what());
    }
  }
  if (file) {
    std::string text;
    try {
      const auto bytes = read_file_bytes(*file);
      text.assign(bytes.begin(), bytes.end());
    } catch (const std::exception& e) {
      throw ConfigError("cannot read config " + file->string() + ": " + e.what());
    }
    apply_config_text(cfg, text, file->string());
  }
  for (const auto& [key, value] : overrides) set_config_value(cfg, key, value);
  cfg.validate();
  return cfg;
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const Field& f : fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace diffgap
