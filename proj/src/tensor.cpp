#include "diffgap/tensor.hpp"

#include <cmath>
#include <sstream>

#include "diffgap/error.hpp"

namespace diffgap {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_numel(shape_) != data_.size()) {
    throw ContractViolation("tensor shape " + shape_str(shape_) + " does not match " +
                            std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  std::vector<double> values;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ContractViolation("ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return matrix(rows.size(), cols, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return shape_[0];
  throw ContractViolation("rows() needs a rank-1 or rank-2 tensor, got " + shape_str(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw ContractViolation("cols() needs a rank-1 or rank-2 tensor, got " + shape_str(shape_));
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractViolation("item() on tensor with shape " + shape_str(shape_));
  }
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Tensor(Shape{0, 0});
  const std::size_t dim = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * dim);
  for (const auto& r : rows) {
    if (r.size() != dim) throw ContractViolation("stack_rows: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor::matrix(rows.size(), dim, std::move(values));
}

}  // namespace diffgap
