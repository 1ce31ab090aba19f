#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "diffgap/diffusion.hpp"
#include "diffgap/rng.hpp"
#include "diffgap/tensor.hpp"

namespace diffgap::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (double& x : t.data()) x = scale * rng.normal();
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double row_norm(const Tensor& t, std::size_t r) {
  double s = 0.0;
  for (double x : t.row(r)) s += x * x;
  return std::sqrt(s);
}

// Predicts zero noise everywhere.
inline NoiseFn zero_noise_fn() {
  return [](const Tensor& z, std::size_t, const Tensor&) { return Tensor(z.shape()); };
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("diffgap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace diffgap::testing
