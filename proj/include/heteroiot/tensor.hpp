#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hiot {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

/// Numeric storage. The fixed over-alignment keeps Eigen's vectorized
/// reductions on the same code path every run, so results are bitwise
/// reproducible regardless of where the allocator places a buffer.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

/// Storage behind a Tensor handle. Values are row-major doubles; `grad` is
/// empty until a backward pass (or zero_grad) allocates it.
struct TensorImpl {
  Shape shape;
  Buffer values;
  Buffer grad;
  bool requires_grad = false;
  // Producing node on `graph`, valid only while graph generation matches.
  const Graph* graph = nullptr;
  std::uint64_t generation = 0;
  std::size_t node = 0;
};

/// Shared handle to a dense n-dimensional array of doubles with optional
/// gradient tracking. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, Buffer values);
  Tensor(Shape shape, const std::vector<double>& values);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::initializer_list<double> v);
  /// Rows of equal width form a 2-D tensor.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  /// Direct write access, for parameter updates and test fixtures only.
  std::span<double> mutable_values() { return impl_->values; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->values[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  /// Deep copy of values with no gradient tracking.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  TensorImpl* impl() const noexcept { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const noexcept { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

}  // namespace hiot
