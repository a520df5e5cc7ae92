#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stochnet/error.hpp"

namespace stochnet {

// Dimensions of a tensor, 1 to 4 entries, each >= 1. Four dims are read as
// batch x channels x height x width.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::span<const std::size_t> dims() const noexcept { return dims_; }
  std::size_t numel() const noexcept { return numel_; }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  void validate();

  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

// Dense row-major array of doubles (last dimension fastest).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // NCHW accessors; valid only for rank-4 tensors.
  std::size_t offset(std::size_t n, std::size_t c, std::size_t h,
                     std::size_t w) const noexcept {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class ElementwiseOp { kAdd, kSub, kMul };

Tensor zeros(const Shape& shape);
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& t, const Shape& new_shape);
Tensor flatten(const Tensor& t);  // [n, ...] -> [n, prod(...)]; rank-1 unchanged
double sum(const Tensor& t);

// Multi-index <-> flat row-major offset, for any rank.
std::size_t flat_index(const Shape& shape, std::span<const std::size_t> coord);
std::vector<std::size_t> unravel_index(const Shape& shape, std::size_t flat);

}  // namespace stochnet
