#include "stochnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "stochnet/kernels.hpp"

namespace stochnet {

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() {
  if (dims_.empty() || dims_.size() > kMaxRank)
    throw ShapeError("shape rank must be 1..4, got " + std::to_string(dims_.size()));
  numel_ = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("shape dims must be >= 1: " + str());
    if (numel_ > std::numeric_limits<std::size_t>::max() / d)
      throw ShapeError("shape element count overflows: " + str());
    numel_ *= d;
  }
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.numel(), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel())
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  for (double v : data_)
    if (!std::isfinite(v)) throw ValueError("tensor entries must be finite");
}

namespace {

void require_finite(const Tensor& t, const char* what) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw ValueError(std::string(what) + " produced a non-finite entry");
}

}  // namespace

Tensor zeros(const Shape& shape) { return Tensor(shape); }

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("elementwise shape mismatch: " + a.shape().str() + " vs " +
                     b.shape().str());
  Tensor out(a.shape());
  auto o = out.data();
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    switch (op) {
      case ElementwiseOp::kAdd: o[i] = x[i] + y[i]; break;
      case ElementwiseOp::kSub: o[i] = x[i] - y[i]; break;
      case ElementwiseOp::kMul: o[i] = x[i] * y[i]; break;
    }
  }
  require_finite(out, "elementwise");
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kMul, a, b); }

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * factor;
  require_finite(out, "scale");
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2)
    throw ShapeError("matmul needs rank-2 operands, got " + a.shape().str() + " and " +
                     b.shape().str());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul inner dims disagree: " + a.shape().str() + " x " +
                     b.shape().str());
  Tensor out(Shape{m, n});
  kernels::parallel::gemm(m, n, k, a.data().data(), b.data().data(), out.data().data());
  require_finite(out, "matmul");
  return out;
}

Tensor reshape(const Tensor& t, const Shape& new_shape) {
  if (new_shape.numel() != t.numel())
    throw ShapeError("cannot reshape " + t.shape().str() + " (" + std::to_string(t.numel()) +
                     " elements) to " + new_shape.str());
  // Copied without the finiteness check so overflow can surface downstream.
  Tensor out(new_shape);
  std::copy(t.data().begin(), t.data().end(), out.data().begin());
  return out;
}

Tensor flatten(const Tensor& t) {
  if (t.shape().rank() == 1) return t;
  return reshape(t, Shape{t.dim(0), t.numel() / t.dim(0)});
}

double sum(const Tensor& t) {
  return std::accumulate(t.data().begin(), t.data().end(), 0.0);
}

std::size_t flat_index(const Shape& shape, std::span<const std::size_t> coord) {
  if (coord.size() != shape.rank()) throw ShapeError("coordinate rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < coord.size(); ++i) {
    if (coord[i] >= shape[i]) throw ShapeError("coordinate out of range");
    flat = flat * shape[i] + coord[i];
  }
  return flat;
}

std::vector<std::size_t> unravel_index(const Shape& shape, std::size_t flat) {
  if (flat >= shape.numel()) throw ShapeError("flat index out of range");
  std::vector<std::size_t> coord(shape.rank());
  for (std::size_t i = shape.rank(); i-- > 0;) {
    coord[i] = flat % shape[i];
    flat /= shape[i];
  }
  return coord;
}

}  // namespace stochnet
