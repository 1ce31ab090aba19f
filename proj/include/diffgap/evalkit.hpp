#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffgap/tensor.hpp"
#include "diffgap/trainer.hpp"

namespace diffgap {

inline constexpr std::array<std::size_t, 3> kRecallKs = {1, 5, 10};

double cosine_similarity(std::span<const double> x, std::span<const double> y);

// Top-k candidate rows by descending cosine similarity; ties go to the lower index.
std::vector<std::size_t> retrieve(std::span<const double> query, const Tensor& candidates,
                                  std::size_t k);

// Percentage of queries whose true index is within the first k ranked entries.
double recall_at_k(std::span<const std::size_t> truth,
                   const std::vector<std::vector<std::size_t>>& rankings, std::size_t k);

struct RetrievalReport {
  std::string direction;
  std::size_t query_count = 0;
  std::size_t steps = 0;  // 0 for the raw-cosine baseline
  std::uint64_t seed = 0;
  std::array<double, kRecallKs.size()> recall{};  // R@1, R@5, R@10

  double r_at(std::size_t k) const;
};

// Query i's partner is candidate i. Rankings are truncated at min(10, candidates).
RetrievalReport report_from_rankings(std::string direction,
                                     const std::vector<std::vector<std::size_t>>& rankings,
                                     std::size_t candidate_count);

// Baseline: rank candidates by cosine with the raw query embedding.
RetrievalReport cosine_retrieval(const Tensor& queries, const Tensor& candidates,
                                 std::string direction);

// Generates one target-modality embedding per condition row with deterministic
// DDIM (per-row z_N drawn from the "eval/query" substream of `seed`).
Tensor generate(const Checkpoint& ckpt, Direction direction, const Tensor& cond,
                std::size_t steps, double eta, std::uint64_t seed);

// Generate-then-rank: each query is mapped through the direction's denoiser
// and candidates are ranked by cosine with the generated embedding.
RetrievalReport diffgap_retrieval(const Checkpoint& ckpt, Direction direction,
                                  const Tensor& queries, const Tensor& candidates,
                                  std::size_t steps, std::uint64_t seed);

struct GenerationMetrics {
  double mean_cosine = 0.0;
  double mse = 0.0;
  std::size_t count = 0;
};

GenerationMetrics generation_metrics(const Tensor& generated, const Tensor& reference);

std::string retrieval_csv(const std::vector<RetrievalReport>& reports);

}  // namespace diffgap
