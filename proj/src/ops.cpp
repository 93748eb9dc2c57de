#include "heteroiot/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "heteroiot/errors.hpp"
#include "heteroiot/graph.hpp"

namespace hiot::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

Shape strip_leading_ones(const Shape& s) {
  auto it = std::find_if(s.begin(), s.end(), [](std::size_t d) { return d != 1; });
  return Shape(it, s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (is_suffix(strip_leading_ones(b), a) && shape_numel(a) >= shape_numel(b)) return a;
  if (is_suffix(strip_leading_ones(a), b)) return b;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

Tensor finish(std::string_view op, Tensor out) {
  check_finite(op, out.values());
  return out;
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, Fwd fwd, GradA ga,
              GradB gb) {
  Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel(), nb = b.numel();
  Buffer vals(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) vals[i] = fwd(av[i % na], bv[i % nb]);
  Tensor out = finish(op, Tensor(std::move(out_shape), std::move(vals)));

  Graph& g = Graph::current();
  if (g.should_record({&a, &b})) {
    g.record(op, {a, b}, out,
             [a, b, n, na, nb, ga, gb](std::span<const double> gout,
                                       std::span<const std::span<double>> gin) {
               auto av = a.values();
               auto bv = b.values();
               if (!gin[0].empty())
                 for (std::size_t i = 0; i < n; ++i)
                   gin[0][i % na] += gout[i] * ga(av[i % na], bv[i % nb]);
               if (!gin[1].empty())
                 for (std::size_t i = 0; i < n; ++i)
                   gin[1][i % nb] += gout[i] * gb(av[i % na], bv[i % nb]);
             });
  }
  return out;
}

template <typename Fwd, typename Deriv>
Tensor unary(std::string_view op, const Tensor& a, Fwd fwd, Deriv deriv) {
  Buffer vals(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = fwd(av[i]);
  Tensor out = finish(op, Tensor(a.shape(), std::move(vals)));

  Graph& g = Graph::current();
  if (g.should_record({&a})) {
    // deriv sees (input, output)
    g.record(op, {a}, out,
             [a, out_vals = out.shared_impl(), deriv](std::span<const double> gout,
                                                     std::span<const std::span<double>> gin) {
               auto av = a.values();
               const auto& ov = out_vals->values;
               for (std::size_t i = 0; i < gout.size(); ++i)
                 gin[0][i] += gout[i] * deriv(av[i], ov[i]);
             });
  }
  return out;
}

}  // namespace

void check_finite(std::string_view op, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw NonFiniteError(std::string(op) + ": non-finite output at flat index " +
                           std::to_string(i));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double alpha) {
  return unary(
      "scale", a, [alpha](double x) { return alpha * x; },
      [alpha](double, double) { return alpha; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor out(Shape{a.dim(0), b.dim(1)});
  Map(out.mutable_values().data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  check_finite("matmul", out.values());

  Graph& g = Graph::current();
  if (g.should_record({&a, &b})) {
    g.record("matmul", {a, b}, out,
             [a, b, m, k, n](std::span<const double> gout,
                             std::span<const std::span<double>> gin) {
               ConstMap go(gout.data(), m, n);
               if (!gin[0].empty())
                 Map(gin[0].data(), m, k).noalias() +=
                     go * ConstMap(b.values().data(), k, n).transpose();
               if (!gin[1].empty())
                 Map(gin[1].data(), k, n).noalias() +=
                     ConstMap(a.values().data(), m, k).transpose() * go;
             });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = finish("sum", Tensor::scalar(s));
  Graph& g = Graph::current();
  if (g.should_record({&a})) {
    g.record("sum", {a}, out,
             [](std::span<const double> gout, std::span<const std::span<double>> gin) {
               for (double& x : gin[0]) x += gout[0];
             });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  Tensor out(std::move(shape), Buffer(a.values().begin(), a.values().end()));
  Graph& g = Graph::current();
  if (g.should_record({&a})) {
    g.record("reshape", {a}, out,
             [](std::span<const double> gout, std::span<const std::span<double>> gin) {
               for (std::size_t i = 0; i < gout.size(); ++i) gin[0][i] += gout[i];
             });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d)
      if (d != axis && s[d] != first[d]) ok = false;
    if (!ok)
      throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " +
                       shape_str(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_chunk = out_shape[axis] * inner;

  Tensor out(out_shape);
  auto ov = out.mutable_values();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.dim(axis) * inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * chunk, chunk, ov.begin() + o * out_chunk + off);
    off += chunk;
  }

  Graph& g = Graph::current();
  if (g.should_record(parts)) {
    std::vector<std::size_t> chunks;
    for (const auto& p : parts) chunks.push_back(p.dim(axis) * inner);
    g.record("concat", std::vector<Tensor>(parts.begin(), parts.end()), out,
             [outer, out_chunk, offsets, chunks](std::span<const double> gout,
                                                 std::span<const std::span<double>> gin) {
               for (std::size_t k = 0; k < gin.size(); ++k) {
                 if (gin[k].empty()) continue;
                 for (std::size_t o = 0; o < outer; ++o)
                   for (std::size_t i = 0; i < chunks[k]; ++i)
                     gin[k][o * chunks[k] + i] += gout[o * out_chunk + offsets[k] + i];
               }
             });
  }
  return out;
}

Tensor select(const Tensor& a, std::size_t axis, std::size_t index) {
  const Shape& s = a.shape();
  if (axis >= s.size() || index >= s[axis])
    throw ShapeError("select: index " + std::to_string(index) + " on axis " +
                     std::to_string(axis) + " out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != axis) out_shape.push_back(s[d]);
  if (out_shape.empty()) out_shape.push_back(1);

  const std::size_t stride = s[axis] * inner;
  Tensor out(out_shape);
  auto ov = out.mutable_values();
  auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(av.begin() + o * stride + index * inner, inner, ov.begin() + o * inner);

  Graph& g = Graph::current();
  if (g.should_record({&a})) {
    g.record("select", {a}, out,
             [outer, inner, stride, index](std::span<const double> gout,
                                           std::span<const std::span<double>> gin) {
               for (std::size_t o = 0; o < outer; ++o)
                 for (std::size_t i = 0; i < inner; ++i)
                   gin[0][o * stride + index * inner + i] += gout[o * inner + i];
             });
  }
  return out;
}

Tensor stack(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape())
      throw ShapeError("stack: incompatible shapes " + shape_str(parts[0].shape()) +
                       " and " + shape_str(p.shape()));
    if (axis > p.rank()) throw ShapeError("stack: axis out of range");
    Shape s = p.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

}  // namespace hiot::ops
