#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace seqgrad {

/// Dense shape of rank 1 or 2. Scalars are rank-1 tensors of length 1.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;
  bool is_scalar() const { return rank_ == 1 && dims_[0] == 1; }
  bool is_vector() const { return rank_ == 1; }
  bool is_matrix() const { return rank_ == 2; }
  std::vector<std::size_t> dims() const { return {dims_.begin(), dims_.begin() + rank_}; }
  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && a.dims_ == b.dims_;
  }

 private:
  std::array<std::size_t, 2> dims_{0, 0};
  std::size_t rank_ = 0;
};

/// Row-major 64-bit tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }
  static Tensor vector(std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double item() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;
  void fill(double v);
  /// this += scale * other (same shape)
  void axpy(double scale, const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace seqgrad
