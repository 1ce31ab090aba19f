#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "diffgap/tensor.hpp"

namespace diffgap {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Ordered registry of named trainable tensors with gradient accumulators.
class ParamSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

 private:
  // deque keeps references returned by add() valid as more are added.
  std::deque<Parameter> params_;
};

class Tape;

// Handle to a node on a specific tape.
class Var {
 public:
  Var() = default;
  std::size_t index() const noexcept { return index_; }
  std::uint64_t tape_id() const noexcept { return tape_id_; }
  bool valid() const noexcept { return tape_id_ != 0; }

 private:
  friend class Tape;
  Var(std::uint64_t tape_id, std::size_t index) : tape_id_(tape_id), index_(index) {}
  std::uint64_t tape_id_ = 0;
  std::size_t index_ = 0;
};

// Records executed ops in order; backward() replays them in reverse.
// A tape built with record_grad=false keeps values only (inference).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record_grad = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  // Leaf bound to an external parameter; backward() accumulates into param.grad.
  Var param(Parameter& param);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() loss w.r.t. v (zeros if v was not reached).
  Tensor grad(Var v) const;

  void backward(Var loss);
  bool backward_done() const noexcept { return backward_done_; }
  bool records_grad() const noexcept { return record_grad_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-author interface.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  void check_owned(Var v, const char* op) const;
  const Tensor& value_at(std::size_t i) const;
  const Tensor& grad_at(std::size_t i) const { return nodes_[i].grad; }
  bool needs_grad(std::size_t i) const { return nodes_[i].needs_grad; }
  // Zero-initialized on first access.
  Tensor& grad_acc(std::size_t i);
  std::size_t input(std::size_t node, std::size_t k) const { return nodes_[node].inputs[k]; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::uint64_t id_;
  bool record_grad_;
  bool backward_done_ = false;
};

// ---- ops -----------------------------------------------------------------
// x may be [in] or a batch [B, in]; rows are independent.
Var affine(Tape& tape, Var weight, Var bias, Var x);
Var silu(Tape& tape, Var x);
// Concatenates rank-1 tensors, or rank-2 tensors with equal row counts along
// their last axis.
Var concat(Tape& tape, const std::vector<Var>& xs);
Var mse(Tape& tape, Var pred, Var target);
// Rank-1 input gives a scalar; rank-2 input gives one value per row.
Var logsumexp(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var mean(Tape& tape, Var x);
// a [B, d], b [M, d] -> a b^T [B, M]
Var matmul_nt(Tape& tape, Var a, Var b);
// x [B, B] -> [B]
Var diagonal(Tape& tape, Var x);
// Rows scaled to unit Euclidean norm.
Var normalize_rows(Tape& tape, Var x);

// Values-only helpers.
double silu_value(double x);
double sigmoid(double x);

}  // namespace diffgap
