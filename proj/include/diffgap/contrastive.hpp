#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "diffgap/corpus.hpp"
#include "diffgap/tape.hpp"

namespace diffgap {

// Generative description of a synthetic two-modality embedding space. Each
// item draws a latent concept z ~ N(0, I_K); modality x observes
// normalize(M_x z + sigma_x * noise). The modality maps share a common part:
// M_v = alignment * G + sqrt(1 - alignment^2) * H_v, with M_a = G.
struct ConceptSpec {
  std::size_t concept_dim = 16;
  std::size_t dim_a = 512;
  std::size_t dim_v = 512;
  // Raw feature widths consumed by train_contrastive's encoders.
  std::size_t raw_dim_a = 512;
  std::size_t raw_dim_v = 512;
  double sigma_a = 0.7;
  double sigma_v = 0.7;
  double alignment = 0.25;
  std::size_t count = 5500;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mixing maps for the given output widths, [dim_a, K] and [dim_v, K].
struct ModalityMaps {
  Tensor a;
  Tensor v;
};
ModalityMaps modality_maps(const ConceptSpec& spec, std::size_t dim_a, std::size_t dim_v);

PairedCorpus generate_corpus(const ConceptSpec& spec);

// Contrastive loss from modality A to modality B with temperature tau:
//   -1/B sum_b log softmax_m(cos(a_b, v_m) / tau)[b]
// Rows are cosine-normalized internally.
Var contrastive_loss(Tape& tape, Var fa, Var fv, double temperature);
double contrastive_loss(const Tensor& fa, const Tensor& fv, double temperature);

struct ContrastiveConfig {
  double temperature = 0.07;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;

  void validate() const;
};

struct ContrastiveResult {
  ParamSet encoders;  // "encoder_a.weight" [dim_a, raw_dim_a], "encoder_v.weight" [dim_v, raw_dim_v]
  PairedCorpus corpus;
  // Entry 0 is the loss before training; entry e is the mean batch loss of epoch e.
  std::vector<double> epoch_losses;
};

// Fits one linear encoder per modality on raw features (generated at raw
// widths) by minimizing contrastive_loss with Adam, then encodes every item.
ContrastiveResult train_contrastive(const ConceptSpec& spec, const ContrastiveConfig& cfg);

// Fraction of in-batch queries whose nearest cross-modal neighbour is the partner.
double in_batch_accuracy(const Tensor& fa, const Tensor& fv);

}  // namespace diffgap
