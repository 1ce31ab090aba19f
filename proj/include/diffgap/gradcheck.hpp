#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffgap/tape.hpp"

namespace diffgap {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  // Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t coords_per_tensor = 0;
  // Relative error denominators never drop below this magnitude.
  double denominator_floor = 1e-8;
  // Also floor denominators at eps*|L|/(step*tolerance), so a coordinate passes
  // when it agrees to within the resolution of the difference quotient of a
  // double-valued loss L.
  bool resolution_floor = false;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  // Coordinates whose denominator was the floor rather than a gradient.
  std::size_t floored = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  double loss = 0.0;
  double effective_floor = 0.0;
  bool passed = false;

  std::string summary() const;
};

// Builds a scalar loss on the given tape, binding parameters via tape.param().
using LossBuilder = std::function<Var(Tape&)>;

// Compares reverse-mode gradients with central finite differences. Parameter
// values are restored before returning.
GradCheckReport grad_check(const LossBuilder& build_loss, ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace diffgap
