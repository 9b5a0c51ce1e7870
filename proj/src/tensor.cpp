#include "seqgrad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqgrad {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.empty() || dims.size() > 2) {
    throw std::invalid_argument("tensor rank must be 1 or 2, got " +
                                std::to_string(dims.size()));
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw std::invalid_argument("tensor dimensions must be positive");
    dims_[i] = dims[i];
  }
  rank_ = dims.size();
}

std::size_t Shape::numel() const {
  if (rank_ == 0) return 0;
  return rank_ == 1 ? dims_[0] : dims_[0] * dims_[1];
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_.str());
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

double Tensor::item() const {
  if (!shape_.is_scalar()) throw std::logic_error("item() on non-scalar tensor " + shape_.str());
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::axpy(double scale, const Tensor& other) {
  if (!(other.shape_ == shape_)) {
    throw std::invalid_argument("axpy shape mismatch " + shape_.str() + " vs " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

}  // namespace seqgrad
