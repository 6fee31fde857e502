#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "icl/errors.hpp"

namespace icl::numerics {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit floats. Immutable once constructed;
// copies share the underlying buffer. Construction rejects NaN/Inf and
// shape/data length mismatches.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}, 0.0) {}  // rank-0 zero scalar

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value) { return full({}, value); }
  // Takes ownership of `data`; validates length and finiteness.
  static Tensor from(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_->size()); }
  std::int64_t dim(int axis) const { return shape_[static_cast<size_t>(axis)]; }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  const double* raw() const { return data_->data(); }

  double at(std::int64_t flat) const { return (*data_)[static_cast<size_t>(flat)]; }
  double operator()(std::int64_t i) const { return at(i); }
  double operator()(std::int64_t i, std::int64_t j) const {
    return at(i * shape_[1] + j);
  }
  double operator()(std::int64_t i, std::int64_t j, std::int64_t l) const {
    return at((i * shape_[1] + j) * shape_[2] + l);
  }

  // Scalar value of a single-element tensor.
  double item() const;

  // Same data, new shape (element count must match). O(1), shares buffer.
  Tensor reshaped(Shape shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool equals(const Tensor& other) const;  // bitwise data + shape equality

 private:
  Tensor(Shape shape, double fill);
  Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

// Throws NonFiniteError if any element is NaN or Inf.
void check_finite(std::span<const double> values, const char* context);

}  // namespace icl::numerics
