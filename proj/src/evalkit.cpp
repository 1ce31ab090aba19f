#include "diffgap/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "diffgap/error.hpp"

namespace diffgap {

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractViolation("cosine_similarity: length mismatch");
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (!(nx > 0.0) || !(ny > 0.0)) throw ContractViolation("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

std::vector<std::size_t> retrieve(std::span<const double> query, const Tensor& candidates,
                                  std::size_t k) {
  if (candidates.rank() != 2 || candidates.dim(0) == 0) {
    throw ContractViolation("retrieve: no candidates");
  }
  if (k > candidates.dim(0)) {
    throw ContractViolation("retrieve: k=" + std::to_string(k) + " exceeds " +
                            std::to_string(candidates.dim(0)) + " candidates");
  }
  std::vector<double> scores(candidates.dim(0));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = cosine_similarity(query, candidates.row(i));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  order.resize(k);
  return order;
}

double recall_at_k(std::span<const std::size_t> truth,
                   const std::vector<std::vector<std::size_t>>& rankings, std::size_t k) {
  if (truth.size() != rankings.size()) throw ContractViolation("recall_at_k: count mismatch");
  if (truth.empty()) throw ContractViolation("recall_at_k: no queries");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    if (k > rankings[q].size()) {
      throw ContractViolation("recall_at_k: k=" + std::to_string(k) + " exceeds ranking length " +
                              std::to_string(rankings[q].size()));
    }
    if (std::find(rankings[q].begin(), rankings[q].begin() + static_cast<std::ptrdiff_t>(k),
                  truth[q]) != rankings[q].begin() + static_cast<std::ptrdiff_t>(k)) {
      ++hits;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

double RetrievalReport::r_at(std::size_t k) const {
  for (std::size_t i = 0; i < kRecallKs.size(); ++i) {
    if (kRecallKs[i] == k) return recall[i];
  }
  throw ContractViolation("RetrievalReport: no recall stored for k=" + std::to_string(k));
}

RetrievalReport report_from_rankings(std::string direction,
                                     const std::vector<std::vector<std::size_t>>& rankings,
                                     std::size_t candidate_count) {
  RetrievalReport report;
  report.direction = std::move(direction);
  report.query_count = rankings.size();
  std::vector<std::size_t> truth(rankings.size());
  std::iota(truth.begin(), truth.end(), std::size_t{0});
  for (std::size_t i = 0; i < kRecallKs.size(); ++i) {
    report.recall[i] = recall_at_k(truth, rankings, std::min(kRecallKs[i], candidate_count));
  }
  return report;
}

namespace {

std::vector<std::vector<std::size_t>> rank_all(const Tensor& queries, const Tensor& candidates) {
  if (queries.rank() != 2 || candidates.rank() != 2 || queries.dim(1) != candidates.dim(1)) {
    throw ContractViolation("retrieval: queries " + shape_str(queries.shape()) +
                            " and candidates " + shape_str(candidates.shape()) +
                            " must share their width");
  }
  const std::size_t depth = std::min(kRecallKs.back(), candidates.dim(0));
  std::vector<std::vector<std::size_t>> rankings(queries.dim(0));
  for (std::size_t q = 0; q < queries.dim(0); ++q) {
    rankings[q] = retrieve(queries.row(q), candidates, depth);
  }
  return rankings;
}

}  // namespace

RetrievalReport cosine_retrieval(const Tensor& queries, const Tensor& candidates,
                                 std::string direction) {
  return report_from_rankings(std::move(direction), rank_all(queries, candidates),
                              candidates.dim(0));
}

Tensor generate(const Checkpoint& ckpt, Direction direction, const Tensor& cond,
                std::size_t steps, double eta, std::uint64_t seed) {
  const Denoiser& d = ckpt.model(direction).denoiser;
  if (cond.rank() != 2 || cond.dim(1) != d.config().cond_dim) {
    throw ContractViolation("generate: condition " + shape_str(cond.shape()) + " does not match " +
                            std::string(direction_label(direction)) + " denoiser cond_dim " +
                            std::to_string(d.config().cond_dim));
  }
  const std::size_t dim = d.config().embed_dim;
  Tensor z(Shape{cond.dim(0), dim});
  for (std::size_t q = 0; q < cond.dim(0); ++q) {
    Rng rng = Rng::substream(seed, "eval/query", q);
    for (double& x : z.row(q)) x = rng.normal();
  }
  Rng noise = Rng::substream(seed, "eval/ddim-noise");
  const NoiseSchedule sched = NoiseSchedule::linear(ckpt.train.schedule);
  return ddim_sample_from(noise_fn(d), std::move(z), to_diffusion_space(normalized_rows(cond)),
                          sched, steps, eta, noise);
}

RetrievalReport diffgap_retrieval(const Checkpoint& ckpt, Direction direction,
                                  const Tensor& queries, const Tensor& candidates,
                                  std::size_t steps, std::uint64_t seed) {
  const Denoiser& d = ckpt.model(direction).denoiser;
  if (candidates.rank() != 2 || candidates.dim(1) != d.config().embed_dim) {
    throw ContractViolation("diffgap_retrieval: candidates " + shape_str(candidates.shape()) +
                            " do not match the " + std::string(direction_label(direction)) +
                            " denoiser output width " + std::to_string(d.config().embed_dim));
  }
  const Tensor generated = generate(ckpt, direction, queries, steps, 0.0, seed);
  RetrievalReport report = report_from_rankings(std::string(direction_label(direction)),
                                                rank_all(generated, candidates), candidates.dim(0));
  report.steps = steps;
  report.seed = seed;
  return report;
}

GenerationMetrics generation_metrics(const Tensor& generated, const Tensor& reference) {
  if (generated.shape() != reference.shape() || generated.rank() != 2) {
    throw ContractViolation("generation_metrics: generated " + shape_str(generated.shape()) +
                            " and reference " + shape_str(reference.shape()) + " differ");
  }
  GenerationMetrics m;
  m.count = generated.dim(0);
  if (m.count == 0) throw ContractViolation("generation_metrics: empty sets");
  double cos_sum = 0.0, se_sum = 0.0;
  for (std::size_t i = 0; i < m.count; ++i) {
    cos_sum += cosine_similarity(generated.row(i), reference.row(i));
    auto g = generated.row(i);
    auto r = reference.row(i);
    double se = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) se += (g[c] - r[c]) * (g[c] - r[c]);
    se_sum += se / static_cast<double>(g.size());
  }
  m.mean_cosine = cos_sum / static_cast<double>(m.count);
  m.mse = se_sum / static_cast<double>(m.count);
  return m;
}

std::string retrieval_csv(const std::vector<RetrievalReport>& reports) {
  std::ostringstream os;
  os.precision(10);
  os << "direction,k,recall,query_count,steps,seed\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < kRecallKs.size(); ++i) {
      os << r.direction << ',' << kRecallKs[i] << ',' << r.recall[i] << ',' << r.query_count << ','
         << r.steps << ',' << r.seed << '\n';
    }
  }
  return os.str();
}

}  // namespace diffgap
