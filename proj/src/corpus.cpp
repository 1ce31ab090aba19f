#include "diffgap/corpus.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "diffgap/error.hpp"

namespace diffgap {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ContractViolation(std::string("corpus ") + what + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

PairedCorpus::PairedCorpus(Tensor a, Tensor v) : a_(std::move(a)), v_(std::move(v)) {
  if (a_.rank() != 2 || v_.rank() != 2 || a_.dim(0) != v_.dim(0)) {
    throw ContractViolation("corpus: modalities must be [count, dim] with equal counts, got " +
                            shape_str(a_.shape()) + " and " + shape_str(v_.shape()));
  }
}

PairedCorpus PairedCorpus::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > count()) throw ContractViolation("corpus slice out of range");
  auto take = [&](const Tensor& t) {
    const std::size_t w = t.dim(1);
    std::vector<double> values(t.data().begin() + static_cast<std::ptrdiff_t>(begin * w),
                               t.data().begin() + static_cast<std::ptrdiff_t>(end * w));
    return Tensor::matrix(end - begin, w, std::move(values));
  };
  return PairedCorpus(take(a_), take(v_));
}

PairedCorpus PairedCorpus::normalized() const {
  auto norm = [](Tensor t) {
    if (t.dim(1) == 0) return t;
    for (std::size_t r = 0; r < t.dim(0); ++r) {
      auto row = t.row(r);
      double s = 0.0;
      for (double x : row) s += x * x;
      if (!(s > 0.0)) throw ContractViolation("corpus: zero embedding at row " + std::to_string(r));
      const double inv = 1.0 / std::sqrt(s);
      for (double& x : row) x *= inv;
    }
    return t;
  };
  return PairedCorpus(norm(a_), norm(v_));
}

double PairedCorpus::max_norm_deviation() const {
  double worst = 0.0;
  for (const Tensor* t : {&a_, &v_}) {
    if (t->dim(1) == 0) continue;
    for (std::size_t r = 0; r < t->dim(0); ++r) {
      double s = 0.0;
      for (double x : t->row(r)) s += x * x;
      worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
    }
  }
  return worst;
}

std::vector<std::uint8_t> encode_corpus(const PairedCorpus& corpus) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * (corpus.a().numel() + corpus.v().numel()));
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, checked_u32(corpus.count(), "count"));
  put_u32(out, checked_u32(corpus.dim_a(), "dim_a"));
  put_u32(out, checked_u32(corpus.dim_v(), "dim_v"));
  for (double x : corpus.a().data()) put_f32(out, x);
  for (double x : corpus.v().data()) put_f32(out, x);
  return out;
}

PairedCorpus decode_corpus(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw FormatError("magic", "file shorter than 4 bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("magic", "expected \"DGC1\"");
  if (bytes.size() < 16) throw FormatError("header", "truncated before count/dim_a/dim_v");
  const std::size_t count = get_u32(bytes.data() + 4);
  const std::size_t dim_a = get_u32(bytes.data() + 8);
  const std::size_t dim_v = get_u32(bytes.data() + 12);

  std::size_t offset = 16;
  auto read_block = [&](std::size_t dim, const char* section) {
    const std::size_t n = count * dim;
    if ((bytes.size() - offset) / 4 < n) {
      throw FormatError(section, "truncated: expected " + std::to_string(n) + " f32 values");
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i, offset += 4) {
      values[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + offset)));
    }
    return Tensor::matrix(count, dim, std::move(values));
  };
  Tensor a = read_block(dim_a, "modality_a");
  Tensor v = read_block(dim_v, "modality_b");
  if (offset != bytes.size()) {
    throw FormatError("trailer", std::to_string(bytes.size() - offset) + " unexpected trailing bytes");
  }
  if (!a.all_finite() || !v.all_finite()) throw FormatError("values", "non-finite embedding value");
  return PairedCorpus(std::move(a), std::move(v));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("file", "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void save_corpus(const PairedCorpus& corpus, const std::filesystem::path& path) {
  write_file_bytes(path, encode_corpus(corpus));
}

PairedCorpus load_corpus(const std::filesystem::path& path) {
  return decode_corpus(read_file_bytes(path));
}

}  // namespace diffgap
