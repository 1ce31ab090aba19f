#include <bit>
#include <cstring>
#include <map>

#include "json.hpp"

#include "diffgap/error.hpp"
#include "diffgap/trainer.hpp"

namespace diffgap {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'G', 'C', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n, const std::string& section) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(section, "truncated: need " + std::to_string(n) + " bytes at offset " +
                                     std::to_string(pos_) + ", file has " +
                                     std::to_string(bytes_.size()));
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32(const std::string& section) {
    const std::uint8_t* p = take(4, section);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64(const std::string& section) {
    const std::uint8_t* p = take(8, section);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

json denoiser_json(const DenoiserConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"cond_dim", c.cond_dim},
              {"time_embed_dim", c.time_embed_dim},
              {"hidden_dim", c.hidden_dim},
              {"hidden_layers", c.hidden_layers},
              {"residual", c.residual}};
}

DenoiserConfig denoiser_from_json(const json& j) {
  return DenoiserConfig{j.at("embed_dim").get<std::size_t>(), j.at("cond_dim").get<std::size_t>(),
                        j.at("time_embed_dim").get<std::size_t>(),
                        j.at("hidden_dim").get<std::size_t>(),
                        j.at("hidden_layers").get<std::size_t>(), j.at("residual").get<bool>()};
}

json header_json(const Checkpoint& ckpt) {
  const TrainConfig& t = ckpt.train;
  return json{
      {"format", "DGCK"},
      {"train",
       {{"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"epochs", t.epochs},
        {"interval", t.interval},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"seed", t.seed},
        {"time_embed_dim", t.time_embed_dim},
        {"hidden_dim", t.hidden_dim},
        {"hidden_layers", t.hidden_layers},
        {"residual", t.residual}}},
      {"schedule",
       {{"steps", t.schedule.steps},
        {"beta_start", t.schedule.beta_start},
        {"beta_end", t.schedule.beta_end}}},
      {"denoisers",
       {{"v2a", denoiser_json(ckpt.v2a.denoiser.config())},
        {"a2v", denoiser_json(ckpt.a2v.denoiser.config())}}},
      {"adam_steps", {{"v2a", ckpt.v2a.adam.t}, {"a2v", ckpt.a2v.adam.t}}},
      {"iteration", ckpt.iteration},
      {"direction", std::string(direction_label(ckpt.direction))},
      {"toggles", ckpt.toggles}};
}

// Record order is fixed so encoding is byte-stable.
std::vector<std::pair<std::string, const Tensor*>> tensor_records(const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (Direction d : {Direction::CondV_DenoiseA, Direction::CondA_DenoiseV}) {
    const DirectionModel& m = ckpt.model(d);
    const std::string prefix(direction_label(d));
    const ParamSet& params = m.denoiser.params();
    for (const Parameter& p : params) out.emplace_back(prefix + "/" + p.name, &p.value);
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.emplace_back(prefix + "/adam.m/" + params[i].name, &m.adam.m[i]);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.emplace_back(prefix + "/adam.v/" + params[i].name, &m.adam.v[i]);
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, Checkpoint::kVersion);
  const std::string header = header_json(ckpt).dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& [name, tensor] : tensor_records(ckpt)) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t d : tensor->shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double x : tensor->data()) put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(4, "magic"), kMagic, 4) != 0) {
    throw FormatError("magic", "expected \"DGCK\"");
  }
  const std::uint32_t version = in.u32("version");
  if (version != Checkpoint::kVersion) {
    throw FormatError("version", "unsupported checkpoint version " + std::to_string(version) +
                                     " (expected " + std::to_string(Checkpoint::kVersion) + ")");
  }
  const std::uint32_t header_len = in.u32("header length");
  const std::uint8_t* header_bytes = in.take(header_len, "header");
  json header;
  try {
    header = json::parse(header_bytes, header_bytes + header_len);
  } catch (const json::exception& e) {
    throw FormatError("header", std::string("invalid JSON: ") + e.what());
  }

  Checkpoint ckpt = [&] {
    try {
      TrainConfig t;
      const json& tj = header.at("train");
      t.batch_size = tj.at("batch_size").get<std::size_t>();
      t.learning_rate = tj.at("learning_rate").get<double>();
      t.epochs = tj.at("epochs").get<std::size_t>();
      t.interval = tj.at("interval").get<std::uint64_t>();
      t.adam_beta1 = tj.at("adam_beta1").get<double>();
      t.adam_beta2 = tj.at("adam_beta2").get<double>();
      t.adam_eps = tj.at("adam_eps").get<double>();
      t.seed = tj.at("seed").get<std::uint64_t>();
      t.time_embed_dim = tj.at("time_embed_dim").get<std::size_t>();
      t.hidden_dim = tj.at("hidden_dim").get<std::size_t>();
      t.hidden_layers = tj.at("hidden_layers").get<std::size_t>();
      t.residual = tj.at("residual").get<bool>();
      const json& sj = header.at("schedule");
      t.schedule = ScheduleParams{sj.at("steps").get<std::size_t>(),
                                  sj.at("beta_start").get<double>(),
                                  sj.at("beta_end").get<double>()};
      const DenoiserConfig cv2a = denoiser_from_json(header.at("denoisers").at("v2a"));
      const DenoiserConfig ca2v = denoiser_from_json(header.at("denoisers").at("a2v"));
      Denoiser v2a = Denoiser::zeros(cv2a);
      Denoiser a2v = Denoiser::zeros(ca2v);
      AdamState adam_v2a = AdamState::for_params(v2a.params());
      AdamState adam_a2v = AdamState::for_params(a2v.params());
      adam_v2a.t = header.at("adam_steps").at("v2a").get<std::uint64_t>();
      adam_a2v.t = header.at("adam_steps").at("a2v").get<std::uint64_t>();
      return Checkpoint{t,
                        header.at("iteration").get<std::uint64_t>(),
                        parse_direction(header.at("direction").get<std::string>()),
                        header.at("toggles").get<std::uint64_t>(),
                        DirectionModel{std::move(v2a), std::move(adam_v2a)},
                        DirectionModel{std::move(a2v), std::move(adam_a2v)}};
    } catch (const json::exception& e) {
      throw FormatError("header", std::string("missing or invalid field: ") + e.what());
    } catch (const ContractViolation& e) {
      throw FormatError("header", e.what());
    }
  }();

  std::map<std::string, Tensor> records;
  for (std::size_t k = 0; !in.done(); ++k) {
    const std::string where = "tensor record " + std::to_string(k);
    const std::uint32_t name_len = in.u32(where + " name length");
    const std::uint8_t* name_ptr = in.take(name_len, where + " name");
    std::string name(reinterpret_cast<const char*>(name_ptr), name_len);
    const std::string section = "tensor '" + name + "'";
    const std::uint32_t rank = in.u32(section + " rank");
    Shape shape(rank);
    for (auto& d : shape) d = in.u32(section + " dims");
    Tensor t(shape);
    const std::uint8_t* data = in.take(8 * t.numel(), section + " data");
    for (std::size_t i = 0; i < t.numel(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(data[8 * i + b]) << (8 * b);
      t[i] = std::bit_cast<double>(bits);
    }
    if (!records.emplace(name, std::move(t)).second) {
      throw FormatError(section, "duplicate tensor record");
    }
  }

  std::size_t used = 0;
  for (const auto& [name, target] : tensor_records(ckpt)) {
    auto it = records.find(name);
    if (it == records.end()) throw FormatError("tensor '" + name + "'", "missing (file truncated?)");
    if (it->second.shape() != target->shape()) {
      throw FormatError("tensor '" + name + "'", "shape " + shape_str(it->second.shape()) +
                                                    " does not match header config " +
                                                    shape_str(target->shape()));
    }
    *const_cast<Tensor*>(target) = std::move(it->second);
    ++used;
  }
  if (used != records.size()) throw FormatError("tensors", "unexpected extra tensor records");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace diffgap
