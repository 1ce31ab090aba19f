#include "diffgap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "diffgap/rng.hpp"

namespace diffgap {

namespace {

double evaluate(const LossBuilder& build_loss) {
  Tape tape(false);
  return tape.value(build_loss(tape)).item();
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t want, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (want == 0 || want >= n) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i, n - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << std::scientific << max_rel_error
     << " tol=" << tolerance << " loss=" << loss << " floor=" << effective_floor << '\n';
  for (const auto& e : entries) {
    os << "  " << e.name << " checked=" << e.checked << " floored=" << e.floored
       << " max_rel_error=" << e.max_rel_error
       << " (index " << e.worst_index << ": analytic " << e.analytic << ", numeric " << e.numeric
       << ")\n";
  }
  return os.str();
}

GradCheckReport grad_check(const LossBuilder& build_loss, ParamSet& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  GradCheckReport report;
  {
    Tape tape;
    Var loss = build_loss(tape);
    report.loss = tape.value(loss).item();
    tape.backward(loss);
  }

  report.tolerance = options.tolerance;
  report.effective_floor = options.denominator_floor;
  if (options.resolution_floor) {
    const double resolution = std::numeric_limits<double>::epsilon() * std::abs(report.loss) /
                              (options.step * options.tolerance);
    report.effective_floor = std::max(report.effective_floor, resolution);
  }
  Rng rng = Rng::substream(options.seed, "gradcheck");
  for (Parameter& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    for (std::size_t i : pick_coords(p.value.numel(), options.coords_per_tensor, rng)) {
      const double saved = p.value[i];
      p.value[i] = saved + options.step;
      const double up = evaluate(build_loss);
      p.value[i] = saved - options.step;
      const double down = evaluate(build_loss);
      p.value[i] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p.grad[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), report.effective_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++entry.checked;
      if (denom == report.effective_floor) ++entry.floored;
      if (rel > entry.max_rel_error || !std::isfinite(rel)) {
        entry.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  params.zero_grad();
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace diffgap
