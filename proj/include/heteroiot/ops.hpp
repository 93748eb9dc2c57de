#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "heteroiot/tensor.hpp"

/// Differentiable tensor primitives. Every op records a node on
/// Graph::current() when an input requires grad, and throws NonFiniteError
/// if its output contains NaN/Inf.
namespace hiot::ops {

/// Elementwise ops accept equal shapes or the leading-1 rule: after dropping
/// leading unit extents, one operand's shape must be a suffix of the other's.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double alpha);

/// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Joins tensors that agree on every axis except `axis`.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Picks one index along `axis` and drops that axis.
Tensor select(const Tensor& a, std::size_t axis, std::size_t index);
/// Stacks equal-shape tensors along a new axis.
Tensor stack(std::span<const Tensor> parts, std::size_t axis);

/// Throws NonFiniteError naming `op` if any value is NaN/Inf.
void check_finite(std::string_view op, std::span<const double> values);

}  // namespace hiot::ops
