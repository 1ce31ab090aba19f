#include "diffgap/contrastive.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "diffgap/adam.hpp"
#include "diffgap/error.hpp"
#include "diffgap/rng.hpp"

namespace diffgap {

namespace {

constexpr int kMaxRedraws = 100;

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor m(Shape{rows, cols});
  for (double& x : m.data()) x = stddev * rng.normal();
  return m;
}

// Writes normalize(map * z + sigma * noise) into out; false if the vector was zero.
bool observe(const Tensor& map, const std::vector<double>& z, double sigma, Rng& rng,
             std::span<double> out) {
  double norm2 = 0.0;
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) s += map.at(r, k) * z[k];
    out[r] = s + sigma * rng.normal();
    norm2 += out[r] * out[r];
  }
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) return false;
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : out) x *= inv;
  return true;
}

PairedCorpus generate_at(const ConceptSpec& spec, std::size_t dim_a, std::size_t dim_v,
                         std::string_view stream) {
  const ModalityMaps maps = modality_maps(spec, dim_a, dim_v);
  Tensor a(Shape{spec.count, dim_a});
  Tensor v(Shape{spec.count, dim_v});
  std::vector<double> z(spec.concept_dim);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = Rng::substream(spec.seed, stream, i);
    for (double& x : z) x = rng.normal();
    int tries = 0;
    while (!observe(maps.a, z, spec.sigma_a, rng, a.row(i))) {
      if (++tries >= kMaxRedraws) throw ContractViolation("generate_corpus: degenerate modality A");
    }
    tries = 0;
    while (!observe(maps.v, z, spec.sigma_v, rng, v.row(i))) {
      if (++tries >= kMaxRedraws) throw ContractViolation("generate_corpus: degenerate modality B");
    }
  }
  return PairedCorpus(std::move(a), std::move(v));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  const std::size_t w = t.dim(1);
  Tensor out(Shape{idx.size(), w});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(t.ptr() + idx[r] * w, w, out.ptr() + r * w);
  }
  return out;
}

Tensor encode(const Tensor& weight, const Tensor& raw) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(raw.dim(0));
  const auto in = static_cast<Eigen::Index>(raw.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  Tensor y(Shape{raw.dim(0), weight.dim(0)});
  Eigen::Map<RowMat>(y.ptr(), n, out).noalias() =
      Eigen::Map<const RowMat>(raw.ptr(), n, in) * Eigen::Map<const RowMat>(weight.ptr(), out, in).transpose();
  return y;
}

}  // namespace

void ConceptSpec::validate() const {
  if (concept_dim == 0 || dim_a == 0 || dim_v == 0 || raw_dim_a == 0 || raw_dim_v == 0) {
    throw ContractViolation("concept spec: dimensions must be >= 1");
  }
  if (!(sigma_a >= 0.0) || !(sigma_v >= 0.0)) {
    throw ContractViolation("concept spec: noise scales must be >= 0");
  }
  if (!(alignment >= -1.0 && alignment <= 1.0)) {
    throw ContractViolation("concept spec: alignment must lie in [-1, 1]");
  }
}

ModalityMaps modality_maps(const ConceptSpec& spec, std::size_t dim_a, std::size_t dim_v) {
  spec.validate();
  // Unit expected squared signal per coordinate.
  const double stddev = 1.0 / std::sqrt(static_cast<double>(spec.concept_dim));
  Rng shared_rng = Rng::substream(spec.seed, "maps/shared");
  Rng private_rng = Rng::substream(spec.seed, "maps/v");
  const Tensor shared = gaussian_matrix(std::max(dim_a, dim_v), spec.concept_dim, stddev, shared_rng);
  const Tensor own = gaussian_matrix(dim_v, spec.concept_dim, stddev, private_rng);

  ModalityMaps maps{Tensor(Shape{dim_a, spec.concept_dim}), Tensor(Shape{dim_v, spec.concept_dim})};
  std::copy_n(shared.ptr(), maps.a.numel(), maps.a.ptr());
  const double c = spec.alignment;
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  for (std::size_t i = 0; i < maps.v.numel(); ++i) maps.v[i] = c * shared[i] + s * own[i];
  return maps;
}

PairedCorpus generate_corpus(const ConceptSpec& spec) {
  spec.validate();
  return generate_at(spec, spec.dim_a, spec.dim_v, "corpus/item");
}

Var contrastive_loss(Tape& tape, Var fa, Var fv, double temperature) {
  if (!(temperature > 0.0)) throw ContractViolation("contrastive_loss: temperature must be > 0");
  const Tensor& a = tape.value(fa);
  const Tensor& v = tape.value(fv);
  if (a.rank() != 2 || v.rank() != 2 || a.shape() != v.shape()) {
    throw ContractViolation("contrastive_loss: expected two [B, D] batches of equal shape, got " +
                            shape_str(a.shape()) + " and " + shape_str(v.shape()));
  }
  if (a.dim(0) < 2) throw ContractViolation("contrastive_loss: batch size must be >= 2");
  Var logits = scale(tape, matmul_nt(tape, normalize_rows(tape, fa), normalize_rows(tape, fv)),
                     1.0 / temperature);
  return mean(tape, sub(tape, logsumexp(tape, logits), diagonal(tape, logits)));
}

double contrastive_loss(const Tensor& fa, const Tensor& fv, double temperature) {
  Tape tape(false);
  return tape.value(contrastive_loss(tape, tape.constant(fa), tape.constant(fv), temperature)).item();
}

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw ContractViolation("contrastive config: temperature must be > 0");
  if (batch_size < 2) throw ContractViolation("contrastive config: batch size must be >= 2");
  if (!(learning_rate > 0.0)) throw ContractViolation("contrastive config: learning rate must be > 0");
}

ContrastiveResult train_contrastive(const ConceptSpec& spec, const ContrastiveConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (spec.count < 2) throw ContractViolation("train_contrastive: need at least 2 items");
  const PairedCorpus raw = generate_at(spec, spec.raw_dim_a, spec.raw_dim_v, "corpus/raw");

  ContrastiveResult result;
  Rng init = Rng::substream(spec.seed, "contrastive/init");
  auto add_encoder = [&](const char* name, std::size_t out, std::size_t in) {
    Tensor w(Shape{out, in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : w.data()) x = init.uniform(-bound, bound);
    result.encoders.add(name, std::move(w));
  };
  add_encoder("encoder_a.weight", spec.dim_a, spec.raw_dim_a);
  add_encoder("encoder_v.weight", spec.dim_v, spec.raw_dim_v);
  if (spec.dim_a != spec.dim_v) {
    throw ContractViolation("train_contrastive: cosine similarity needs dim_a == dim_v");
  }

  auto batch_loss = [&](std::span<const std::size_t> idx, bool train) {
    Tape tape(train);
    Var fa = matmul_nt(tape, tape.constant(gather_rows(raw.a(), idx)),
                       tape.param(result.encoders.get("encoder_a.weight")));
    Var fv = matmul_nt(tape, tape.constant(gather_rows(raw.v(), idx)),
                       tape.param(result.encoders.get("encoder_v.weight")));
    Var loss = contrastive_loss(tape, fa, fv, cfg.temperature);
    const double value = tape.value(loss).item();
    if (!std::isfinite(value)) {
      throw DivergenceError("train_contrastive: non-finite loss");
    }
    if (train) tape.backward(loss);
    return value;
  };

  auto batches = [&](const std::vector<std::size_t>& order) {
    std::vector<std::span<const std::size_t>> out;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - b);
      if (n >= 2) out.emplace_back(order.data() + b, n);
    }
    return out;
  };

  std::vector<std::size_t> identity(spec.count);
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  {
    double total = 0.0;
    const auto bs = batches(identity);
    for (auto idx : bs) total += batch_loss(idx, false);
    result.epoch_losses.push_back(total / static_cast<double>(bs.size()));
  }

  AdamState adam = AdamState::for_params(result.encoders);
  const AdamHyper hyper{cfg.learning_rate, 0.9, 0.999, 1e-8};
  Rng shuffle = Rng::substream(spec.seed, "contrastive/shuffle");
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(spec.count, shuffle);
    const auto bs = batches(order);
    double total = 0.0;
    for (auto idx : bs) {
      result.encoders.zero_grad();
      total += batch_loss(idx, true);
      adam_step(result.encoders, adam, hyper);
    }
    result.epoch_losses.push_back(total / static_cast<double>(bs.size()));
  }
  result.encoders.zero_grad();

  result.corpus = PairedCorpus(encode(result.encoders.get("encoder_a.weight").value, raw.a()),
                               encode(result.encoders.get("encoder_v.weight").value, raw.v()))
                      .normalized();
  return result;
}

double in_batch_accuracy(const Tensor& fa, const Tensor& fv) {
  const std::size_t n = fa.dim(0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0, na = 0.0, nv = 0.0;
      for (std::size_t c = 0; c < fa.dim(1); ++c) {
        s += fa.at(i, c) * fv.at(j, c);
        na += fa.at(i, c) * fa.at(i, c);
        nv += fv.at(j, c) * fv.at(j, c);
      }
      const double score = s / std::sqrt(na * nv);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

}  // namespace diffgap
