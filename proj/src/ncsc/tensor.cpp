#include "ncsc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "ncsc/errors.hpp"

namespace ncsc {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ValidationError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  values_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw ValidationError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (numel(shape_) != values_.size()) {
    throw ValidationError("shape " + shape_string(shape_) + " needs " +
                          std::to_string(numel(shape_)) + " values, got " +
                          std::to_string(values_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> row_major) {
  return Tensor({rows, cols}, std::vector<double>(row_major));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ValidationError("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != values_.size()) {
    throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin >= end || end > t.dim(0)) {
    throw ValidationError("bad row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                          ") of " + shape_string(t.shape()));
  }
  const std::size_t stride = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = end - begin;
  std::vector<double> values(t.values().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                             t.values().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(values));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() == 0 || rows.empty()) throw ValidationError("gather_rows needs rank >= 1 and rows");
  const std::size_t stride = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.dim(0)) throw ValidationError("gather_rows index out of range");
    std::copy_n(t.data() + rows[i] * stride, stride, out.data() + i * stride);
  }
  return out;
}

Tensor transpose2d(const Tensor& t) {
  if (t.rank() != 2) throw ValidationError("transpose needs rank 2, got " + shape_string(t.shape()));
  const std::size_t r = t.dim(0), c = t.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = t.at(i, j);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ValidationError("shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ncsc
