#include "icl/tensor.hpp"

#include <malloc.h>

#include <Eigen/Core>
#include <cmath>
#include <mutex>
#include <sstream>

namespace icl::numerics {

namespace {

// Large activation buffers churn every step; keeping them on the heap
// instead of per-allocation mmaps avoids repeated page faulting.
void tune_allocator_once() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

void check_finite(std::span<const double> values, const char* context) {
  Eigen::Map<const Eigen::ArrayXd> v(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
  if (!v.allFinite()) {
    throw NonFiniteError(std::string("non-finite value in ") + context);
  }
}

Tensor::Tensor(Shape shape, double fill) {
  tune_allocator_once();
  auto n = shape_numel(shape);
  if (!std::isfinite(fill)) throw NonFiniteError("non-finite fill value");
  shape_ = std::move(shape);
  data_ = std::make_shared<const std::vector<double>>(static_cast<size_t>(n), fill);
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  return Tensor(std::move(shape), value);
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  tune_allocator_once();
  auto n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " expects " +
                         std::to_string(n) + " elements, got " +
                         std::to_string(data.size()));
  }
  check_finite(data, "tensor data");
  auto holder = std::make_shared<const std::vector<double>>(std::move(data));
  return Tensor(std::move(shape), std::move(holder));
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() requires a single-element tensor, shape is " +
                        shape_str(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " +
                         shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::equals(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return *data_ == *other.data_;
}

}  // namespace icl::numerics
