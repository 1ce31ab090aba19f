#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffgap/tensor.hpp"

namespace diffgap {

// Index-aligned embeddings from two modalities ("a" and "v"). Either side may
// have width zero (generated-sample files carry only modality A).
class PairedCorpus {
 public:
  PairedCorpus() : a_(Shape{0, 0}), v_(Shape{0, 0}) {}
  PairedCorpus(Tensor a, Tensor v);

  std::size_t count() const noexcept { return a_.dim(0); }
  std::size_t dim_a() const noexcept { return a_.dim(1); }
  std::size_t dim_v() const noexcept { return v_.dim(1); }

  const Tensor& a() const noexcept { return a_; }
  const Tensor& v() const noexcept { return v_; }

  // Items [begin, end).
  PairedCorpus slice(std::size_t begin, std::size_t end) const;
  // Rows rescaled to unit norm (zero-width sides are left alone).
  PairedCorpus normalized() const;
  double max_norm_deviation() const;

  friend bool operator==(const PairedCorpus&, const PairedCorpus&) = default;

 private:
  Tensor a_;
  Tensor v_;
};

// DGC1 on-disk format: "DGC1", u32 count, u32 dim_a, u32 dim_v (little-endian),
// then count*dim_a f32 values for A followed by count*dim_v f32 values for B.
std::vector<std::uint8_t> encode_corpus(const PairedCorpus& corpus);
PairedCorpus decode_corpus(const std::vector<std::uint8_t>& bytes);

void save_corpus(const PairedCorpus& corpus, const std::filesystem::path& path);
PairedCorpus load_corpus(const std::filesystem::path& path);

// Shared little-endian helpers.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace diffgap
