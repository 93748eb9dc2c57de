#include "heteroiot/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "heteroiot/errors.hpp"

namespace hiot {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

static void check_extents(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  check_extents(shape);
  impl_->values.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, Buffer values)
    : impl_(std::make_shared<TensorImpl>()) {
  check_extents(shape);
  if (shape_numel(shape) != values.size())
    throw ShapeError("shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

Tensor::Tensor(Shape shape, const std::vector<double>& values)
    : Tensor(std::move(shape), Buffer(values.begin(), values.end())) {}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), Buffer(values)) {}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, Buffer{v}); }

Tensor Tensor::vector(std::initializer_list<double> v) {
  return Tensor(Shape{v.size()}, Buffer(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  Buffer vals;
  vals.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged matrix literal");
    vals.insert(vals.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), cols}, std::move(vals));
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(numel(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(numel(), 0.0); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->values); }

}  // namespace hiot
