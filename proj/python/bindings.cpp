#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "diffgap/commands.hpp"
#include "diffgap/config.hpp"
#include "diffgap/contrastive.hpp"
#include "diffgap/denoiser.hpp"
#include "diffgap/diffusion.hpp"
#include "diffgap/error.hpp"
#include "diffgap/evalkit.hpp"
#include "diffgap/trainer.hpp"

namespace py = pybind11;
using namespace diffgap;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& arr) {
  if (arr.ndim() != 1 && arr.ndim() != 2) throw ContractViolation("expected a 1-D or 2-D array");
  Shape shape(arr.shape(), arr.shape() + arr.ndim());
  const double* p = arr.data();
  return Tensor(std::move(shape), std::vector<double>(p, p + arr.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

PairedCorpus to_corpus(const Array& a, const Array& v) { return PairedCorpus(to_tensor(a), to_tensor(v)); }

}  // namespace

PYBIND11_MODULE(_diffgap, m) {
  m.doc() = "Conditional diffusion between paired contrastive embeddings";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init([](std::size_t steps, double beta_start, double beta_end) {
             return NoiseSchedule::linear(steps, beta_start, beta_end);
           }),
           py::arg("steps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02)
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"))
      .def("beta", &NoiseSchedule::beta, py::arg("t"))
      .def("posterior_variance", &NoiseSchedule::posterior_variance, py::arg("t"))
      .def_property_readonly("alpha_bars", &NoiseSchedule::alpha_bars);

  py::class_<ConceptSpec>(m, "ConceptSpec")
      .def(py::init<>())
      .def_readwrite("concept_dim", &ConceptSpec::concept_dim)
      .def_readwrite("dim_a", &ConceptSpec::dim_a)
      .def_readwrite("dim_v", &ConceptSpec::dim_v)
      .def_readwrite("sigma_a", &ConceptSpec::sigma_a)
      .def_readwrite("sigma_v", &ConceptSpec::sigma_v)
      .def_readwrite("alignment", &ConceptSpec::alignment)
      .def_readwrite("count", &ConceptSpec::count)
      .def_readwrite("seed", &ConceptSpec::seed);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_property(
          "interval", [](const TrainConfig& c) -> py::object {
            if (c.interval == kNeverToggle) return py::none();
            return py::int_(c.interval);
          },
          [](TrainConfig& c, const py::object& v) {
            c.interval = v.is_none() ? kNeverToggle : v.cast<std::uint64_t>();
          },
          "Iterations between direction switches; None never switches.")
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("time_embed_dim", &TrainConfig::time_embed_dim)
      .def_readwrite("hidden_dim", &TrainConfig::hidden_dim)
      .def_readwrite("hidden_layers", &TrainConfig::hidden_layers)
      .def_readwrite("residual", &TrainConfig::residual);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("iteration", &Checkpoint::iteration)
      .def_readonly("toggles", &Checkpoint::toggles)
      .def_property_readonly("direction", [](const Checkpoint& c) { return std::string(direction_label(c.direction)); })
      .def_property_readonly("dim_a", &Checkpoint::dim_a)
      .def_property_readonly("dim_v", &Checkpoint::dim_v)
      .def("to_bytes", [](const Checkpoint& c) {
        const auto b = encode_checkpoint(c);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      });

  py::class_<RetrievalReport>(m, "RetrievalReport")
      .def_readonly("direction", &RetrievalReport::direction)
      .def_readonly("query_count", &RetrievalReport::query_count)
      .def_readonly("steps", &RetrievalReport::steps)
      .def_readonly("seed", &RetrievalReport::seed)
      .def_property_readonly("recall", [](const RetrievalReport& r) {
        py::dict d;
        for (std::size_t i = 0; i < kRecallKs.size(); ++i) d[py::int_(kRecallKs[i])] = r.recall[i];
        return d;
      })
      .def("r_at", &RetrievalReport::r_at, py::arg("k"));

  m.def(
      "param_count",
      [](std::size_t embed_dim, std::size_t cond_dim, std::size_t time_embed_dim, std::size_t hidden_dim,
         std::size_t hidden_layers) {
        DenoiserConfig c{embed_dim, cond_dim, time_embed_dim, hidden_dim, hidden_layers, true};
        return param_stats(c).param_count;
      },
      py::arg("embed_dim") = 512, py::arg("cond_dim") = 512, py::arg("time_embed_dim") = 128,
      py::arg("hidden_dim") = 512, py::arg("hidden_layers") = 2);

  m.def("time_embedding", &time_embedding, py::arg("n"), py::arg("dim"));
  m.def("ddim_timesteps", &ddim_timesteps, py::arg("total_steps"), py::arg("steps"));

  m.def(
      "contrastive_loss",
      [](const Array& a, const Array& v, double temperature) {
        return contrastive_loss(to_tensor(a), to_tensor(v), temperature);
      },
      py::arg("a"), py::arg("v"), py::arg("temperature") = 0.07);

  m.def(
      "generate_corpus",
      [](const ConceptSpec& spec) {
        const PairedCorpus c = generate_corpus(spec);
        return py::make_tuple(to_array(c.a()), to_array(c.v()));
      },
      py::arg("spec"), "Returns unit-norm (a, v) arrays of shape [count, dim].");

  m.def(
      "save_corpus",
      [](const Array& a, const Array& v, const std::filesystem::path& path) { save_corpus(to_corpus(a, v), path); },
      py::arg("a"), py::arg("v"), py::arg("path"));
  m.def(
      "load_corpus",
      [](const std::filesystem::path& path) {
        const PairedCorpus c = load_corpus(path);
        return py::make_tuple(to_array(c.a()), to_array(c.v()));
      },
      py::arg("path"));

  m.def(
      "train",
      [](const Array& a, const Array& v, const TrainConfig& cfg) {
        py::gil_scoped_release release;
        return train(to_corpus(a, v), cfg).checkpoint;
      },
      py::arg("a"), py::arg("v"), py::arg("config"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("checkpoint"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "generate",
      [](const Checkpoint& ckpt, const std::string& direction, const Array& cond, std::size_t steps, double eta,
         std::uint64_t seed) {
        return to_array(generate(ckpt, parse_direction(direction), to_tensor(cond), steps, eta, seed));
      },
      py::arg("checkpoint"), py::arg("direction"), py::arg("cond"), py::arg("steps") = 50, py::arg("eta") = 0.0,
      py::arg("seed") = 0);

  m.def(
      "cosine_retrieval",
      [](const Array& queries, const Array& candidates, const std::string& direction) {
        return cosine_retrieval(to_tensor(queries), to_tensor(candidates), direction);
      },
      py::arg("queries"), py::arg("candidates"), py::arg("direction") = "v2a");
  m.def(
      "diffgap_retrieval",
      [](const Checkpoint& ckpt, const std::string& direction, const Array& queries, const Array& candidates,
         std::size_t steps, std::uint64_t seed) {
        return diffgap_retrieval(ckpt, parse_direction(direction), to_tensor(queries), to_tensor(candidates), steps,
                                 seed);
      },
      py::arg("checkpoint"), py::arg("direction"), py::arg("queries"), py::arg("candidates"), py::arg("steps") = 50,
      py::arg("seed") = 0);

  m.def(
      "recall_at_k",
      [](const std::vector<std::size_t>& truth, const std::vector<std::vector<std::size_t>>& rankings,
         std::size_t k) { return recall_at_k(truth, rankings, k); },
      py::arg("truth"), py::arg("rankings"), py::arg("k"));

  m.def(
      "run",
      [](const std::string& command, const std::map<std::string, std::string>& overrides,
         const std::optional<std::filesystem::path>& config, const std::string& axis) {
        Overrides o(overrides.begin(), overrides.end());
        std::ostringstream out, err;
        const RunConfig cfg = parse_config(config, o);
        const int code = run_command(command, cfg, axis, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("command"), py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("config") = std::nullopt, py::arg("axis") = "",
      "Runs a CLI command in-process; returns (exit_code, stdout, stderr).");
}
