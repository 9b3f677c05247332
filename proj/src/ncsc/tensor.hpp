#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ncsc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. A rank-0 tensor (empty shape) is a scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> row_major);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // rank-2 access
  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  // Value of a tensor holding exactly one element.
  double item() const;

  Tensor reshaped(Shape shape) const;
  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Rows [begin, end) of a rank >= 1 tensor along axis 0.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
// Gather rows by index along axis 0.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);
Tensor transpose2d(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace ncsc
