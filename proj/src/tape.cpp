#include "diffgap/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "diffgap/error.hpp"

namespace diffgap {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
  }
}

void require_rank12(const Tensor& t, const char* op) {
  if (t.rank() != 1 && t.rank() != 2) {
    throw ContractViolation(std::string(op) + ": expected rank 1 or 2, got " + shape_str(t.shape()));
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu_value(double x) { return x * sigmoid(x); }

// ---- ParamSet ----------------------------------------------------------------

Parameter& ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ContractViolation("duplicate parameter name " + name);
  Tensor grad(value.shape(), 0.0);
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

Parameter& ParamSet::get(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractViolation("no parameter named " + std::string(name));
}

const Parameter& ParamSet::get(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractViolation("no parameter named " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) {
    if (!same_layout(p.grad, p.value)) p.grad = Tensor(p.value.shape(), 0.0);
    p.grad.fill(0.0);
  }
}

// ---- Tape --------------------------------------------------------------------

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
}

Tape::Tape(bool record_grad) : id_(next_tape_id.fetch_add(1)), record_grad_(record_grad) {}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var(id_, nodes_.size() - 1);
}

Var Tape::param(Parameter& param) {
  nodes_.push_back(Node{{}, {}, {}, {}, &param, record_grad_});
  return Var(id_, nodes_.size() - 1);
}

void Tape::check_owned(Var v, const char* op) const {
  if (v.tape_id() != id_ || v.index() >= nodes_.size()) {
    throw ContractViolation(std::string(op) + ": variable is not attached to this tape");
  }
}

const Tensor& Tape::value_at(std::size_t i) const {
  const Node& n = nodes_[i];
  return n.param ? n.param->value : n.value;
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return value_at(v.index());
}

Tensor Tape::grad(Var v) const {
  check_owned(v, "grad");
  const Tensor& val = value_at(v.index());
  const Tensor& g = nodes_[v.index()].grad;
  if (!same_layout(g, val)) return Tensor(val.shape(), 0.0);
  return g;
}

Tensor& Tape::grad_acc(std::size_t i) {
  Node& n = nodes_[i];
  const Tensor& val = value_at(i);
  if (!same_layout(n.grad, val)) n.grad = Tensor(val.shape(), 0.0);
  return n.grad;
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  if (record_grad_) {
    for (std::size_t i : inputs) needs = needs || nodes_[i].needs_grad;
  }
  if (!needs) fn = nullptr;
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(fn), nullptr, needs});
  return Var(id_, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  check_owned(loss, "backward");
  if (!record_grad_) throw ContractViolation("backward: tape was built without gradient recording");
  if (backward_done_) throw ContractViolation("backward: already called on this tape");
  if (value_at(loss.index()).numel() != 1) {
    throw ContractViolation("backward: loss must be a scalar, got shape " +
                            shape_str(value_at(loss.index()).shape()));
  }
  backward_done_ = true;
  grad_acc(loss.index()).fill(1.0);
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
  for (Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    Tensor& acc = n.param->grad;
    if (!same_layout(acc, n.param->value)) acc = Tensor(n.param->value.shape(), 0.0);
    for (std::size_t k = 0; k < acc.numel(); ++k) acc[k] += n.grad[k];
  }
}

// ---- ops ---------------------------------------------------------------------

Var affine(Tape& tape, Var weight, Var bias, Var x) {
  tape.check_owned(weight, "affine");
  tape.check_owned(bias, "affine");
  tape.check_owned(x, "affine");
  const Tensor& w = tape.value(weight);
  const Tensor& b = tape.value(bias);
  const Tensor& xv = tape.value(x);
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw ContractViolation("affine: weight " + shape_str(w.shape()) + " and bias " +
                            shape_str(b.shape()) + " do not conform");
  }
  require_rank12(xv, "affine");
  const std::size_t out = w.dim(0), in = w.dim(1);
  if (xv.cols() != in) {
    throw ContractViolation("affine: input " + shape_str(xv.shape()) + " does not match weight " +
                            shape_str(w.shape()));
  }
  const std::size_t batch = xv.rows();
  Tensor y(xv.rank() == 1 ? Shape{out} : Shape{batch, out});
  auto ym = as_matrix(y, batch, out);
  ym.noalias() = as_matrix(xv, batch, in) * as_matrix(w, out, in).transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.ptr(), static_cast<Eigen::Index>(out));

  return tape.record(std::move(y), {weight.index(), bias.index(), x.index()},
                     [out, in, batch](Tape& t, std::size_t self) {
                       const auto gy = as_matrix(t.grad_at(self), batch, out);
                       const std::size_t wi = t.input(self, 0), bi = t.input(self, 1),
                                         xi = t.input(self, 2);
                       if (t.needs_grad(wi)) {
                         as_matrix(t.grad_acc(wi), out, in).noalias() +=
                             gy.transpose() * as_matrix(t.value_at(xi), batch, in);
                       }
                       if (t.needs_grad(bi)) {
                         Eigen::Map<Eigen::RowVectorXd>(t.grad_acc(bi).ptr(),
                                                        static_cast<Eigen::Index>(out)) +=
                             gy.colwise().sum();
                       }
                       if (t.needs_grad(xi)) {
                         as_matrix(t.grad_acc(xi), batch, in).noalias() +=
                             gy * as_matrix(t.value_at(wi), out, in);
                       }
                     });
}

Var silu(Tape& tape, Var x) {
  tape.check_owned(x, "silu");
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = silu_value(xv[i]);
  return tape.record(std::move(y), {x.index()}, [](Tape& t, std::size_t self) {
    const std::size_t xi = t.input(self, 0);
    const Tensor& xv = t.value_at(xi);
    const Tensor& gy = t.grad_at(self);
    Tensor& gx = t.grad_acc(xi);
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      const double s = sigmoid(xv[i]);
      gx[i] += gy[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

Var concat(Tape& tape, const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractViolation("concat: empty input list");
  for (Var v : xs) tape.check_owned(v, "concat");
  const std::size_t rank = tape.value(xs.front()).rank();
  if (rank != 1 && rank != 2) throw ContractViolation("concat: expected rank-1 or rank-2 inputs");
  const std::size_t rows = rank == 1 ? 1 : tape.value(xs.front()).dim(0);
  std::vector<std::size_t> widths, inputs;
  std::size_t total = 0;
  for (Var v : xs) {
    const Tensor& t = tape.value(v);
    if (t.rank() != rank || (rank == 2 && t.dim(0) != rows)) {
      throw ContractViolation("concat: incompatible segment shape " + shape_str(t.shape()));
    }
    widths.push_back(t.shape().back());
    inputs.push_back(v.index());
    total += widths.back();
  }
  Tensor y(rank == 1 ? Shape{total} : Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& t = tape.value(xs[k]);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(t.ptr() + r * widths[k], widths[k], y.ptr() + r * total + offset);
    }
    offset += widths[k];
  }
  return tape.record(std::move(y), std::move(inputs),
                     [widths, rows, total](Tape& t, std::size_t self) {
                       const Tensor& gy = t.grad_at(self);
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         const std::size_t xi = t.input(self, k);
                         if (t.needs_grad(xi) && widths[k] > 0) {
                           Tensor& gx = t.grad_acc(xi);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < widths[k]; ++c) {
                               gx[r * widths[k] + c] += gy[r * total + offset + c];
                             }
                           }
                         }
                         offset += widths[k];
                       }
                     });
}

Var mse(Tape& tape, Var pred, Var target) {
  tape.check_owned(pred, "mse");
  tape.check_owned(target, "mse");
  const Tensor& p = tape.value(pred);
  const Tensor& q = tape.value(target);
  require_same_shape(p, q, "mse");
  if (p.numel() == 0) throw ContractViolation("mse: empty input");
  // Neumaier compensated sum keeps the result within about one ulp.
  double acc = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = p[i] - q[i];
    const double term = d * d;
    const double next = acc + term;
    comp += std::abs(acc) >= term ? (acc - next) + term : (term - next) + acc;
    acc = next;
  }
  const double n = static_cast<double>(p.numel());
  return tape.record(Tensor::scalar((acc + comp) / n), {pred.index(), target.index()},
                     [n](Tape& t, std::size_t self) {
                       const double g = t.grad_at(self)[0];
                       const std::size_t pi = t.input(self, 0), qi = t.input(self, 1);
                       const Tensor& p = t.value_at(pi);
                       const Tensor& q = t.value_at(qi);
                       const double c = 2.0 * g / n;
                       if (t.needs_grad(pi)) {
                         Tensor& gp = t.grad_acc(pi);
                         for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] += c * (p[i] - q[i]);
                       }
                       if (t.needs_grad(qi)) {
                         Tensor& gq = t.grad_acc(qi);
                         for (std::size_t i = 0; i < gq.numel(); ++i) gq[i] -= c * (p[i] - q[i]);
                       }
                     });
}

Var logsumexp(Tape& tape, Var x) {
  tape.check_owned(x, "logsumexp");
  const Tensor& xv = tape.value(x);
  require_rank12(xv, "logsumexp");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (cols == 0) throw ContractViolation("logsumexp: empty input");
  Tensor y(xv.rank() == 1 ? Shape{} : Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = xv.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    y[r] = m + std::log(s);
  }
  return tape.record(std::move(y), {x.index()}, [rows, cols](Tape& t, std::size_t self) {
    const std::size_t xi = t.input(self, 0);
    const Tensor& xv = t.value_at(xi);
    const Tensor& yv = t.value_at(self);
    const Tensor& gy = t.grad_at(self);
    Tensor& gx = t.grad_acc(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += gy[r] * std::exp(xv[r * cols + c] - yv[r]);
      }
    }
  });
}

namespace {

Var elementwise_sum(Tape& tape, Var a, Var b, double sign, const char* op) {
  tape.check_owned(a, op);
  tape.check_owned(b, op);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, op);
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] + sign * bv[i];
  return tape.record(std::move(y), {a.index(), b.index()}, [sign](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad_at(self);
    const std::size_t ai = t.input(self, 0), bi = t.input(self, 1);
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad_acc(ai);
      for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gy[i];
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad_acc(bi);
      for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += sign * gy[i];
    }
  });
}

}  // namespace

Var add(Tape& tape, Var a, Var b) { return elementwise_sum(tape, a, b, 1.0, "add"); }

Var sub(Tape& tape, Var a, Var b) { return elementwise_sum(tape, a, b, -1.0, "sub"); }

Var scale(Tape& tape, Var x, double factor) {
  tape.check_owned(x, "scale");
  Tensor y = tape.value(x);
  for (double& v : y.data()) v *= factor;
  return tape.record(std::move(y), {x.index()}, [factor](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad_at(self);
    Tensor& gx = t.grad_acc(t.input(self, 0));
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += factor * gy[i];
  });
}

Var mean(Tape& tape, Var x) {
  tape.check_owned(x, "mean");
  const Tensor& xv = tape.value(x);
  if (xv.numel() == 0) throw ContractViolation("mean: empty input");
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const double n = static_cast<double>(xv.numel());
  return tape.record(Tensor::scalar(s / n), {x.index()}, [n](Tape& t, std::size_t self) {
    const double g = t.grad_at(self)[0] / n;
    Tensor& gx = t.grad_acc(t.input(self, 0));
    for (double& v : gx.data()) v += g;
  });
}

Var matmul_nt(Tape& tape, Var a, Var b) {
  tape.check_owned(a, "matmul_nt");
  tape.check_owned(b, "matmul_nt");
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
    throw ContractViolation("matmul_nt: shapes " + shape_str(av.shape()) + " and " +
                            shape_str(bv.shape()) + " do not conform");
  }
  const std::size_t n = av.dim(0), m = bv.dim(0), d = av.dim(1);
  Tensor y(Shape{n, m});
  as_matrix(y, n, m).noalias() = as_matrix(av, n, d) * as_matrix(bv, m, d).transpose();
  return tape.record(std::move(y), {a.index(), b.index()}, [n, m, d](Tape& t, std::size_t self) {
    const auto gy = as_matrix(t.grad_at(self), n, m);
    const std::size_t ai = t.input(self, 0), bi = t.input(self, 1);
    if (t.needs_grad(ai)) {
      as_matrix(t.grad_acc(ai), n, d).noalias() += gy * as_matrix(t.value_at(bi), m, d);
    }
    if (t.needs_grad(bi)) {
      as_matrix(t.grad_acc(bi), m, d).noalias() += gy.transpose() * as_matrix(t.value_at(ai), n, d);
    }
  });
}

Var diagonal(Tape& tape, Var x) {
  tape.check_owned(x, "diagonal");
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.dim(0) != xv.dim(1)) {
    throw ContractViolation("diagonal: expected a square matrix, got " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(0);
  Tensor y(Shape{n});
  for (std::size_t i = 0; i < n; ++i) y[i] = xv.at(i, i);
  return tape.record(std::move(y), {x.index()}, [n](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad_at(self);
    Tensor& gx = t.grad_acc(t.input(self, 0));
    for (std::size_t i = 0; i < n; ++i) gx[i * n + i] += gy[i];
  });
}

Var normalize_rows(Tape& tape, Var x) {
  tape.check_owned(x, "normalize_rows");
  const Tensor& xv = tape.value(x);
  require_rank12(xv, "normalize_rows");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor y(xv.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v * v;
    norms[r] = std::sqrt(s);
    if (!(norms[r] > 0.0)) throw ContractViolation("normalize_rows: zero-norm row");
    auto out = y.row(r);
    auto in = xv.row(r);
    for (std::size_t c = 0; c < cols; ++c) out[c] = in[c] / norms[r];
  }
  return tape.record(std::move(y), {x.index()},
                     [rows, cols, norms = std::move(norms)](Tape& t, std::size_t self) {
                       const Tensor& yv = t.value_at(self);
                       const Tensor& gy = t.grad_at(self);
                       Tensor& gx = t.grad_acc(t.input(self, 0));
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           dot += yv[r * cols + c] * gy[r * cols + c];
                         }
                         for (std::size_t c = 0; c < cols; ++c) {
                           const std::size_t i = r * cols + c;
                           gx[i] += (gy[i] - yv[i] * dot) / norms[r];
                         }
                       }
                     });
}

}  // namespace diffgap
