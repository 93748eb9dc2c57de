#include "heteroiot/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "heteroiot/errors.hpp"
#include "heteroiot/graph.hpp"

namespace hiot {

namespace {

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> wrt,
                                  double tol, const GradCheckOptions& opts) {
  GradCheckReport report;
  report.tol = tol;

  std::vector<std::vector<double>> analytic;
  {
    Graph graph;
    GraphScope scope(graph);
    for (auto& t : wrt) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tensor y = f();
    if (y.numel() != 1)
      throw GraphError("finite_diff_check: f must be scalar-valued, got shape " +
                       shape_str(y.shape()));
    graph.backward(y);
    for (auto& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  NoGradGuard no_grad;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto vals = wrt[ti].mutable_values();
    std::vector<std::size_t> idx(vals.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (opts.max_entries_per_tensor && idx.size() > opts.max_entries_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double orig = vals[i];
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      vals[i] = orig + h;
      const double fp = f().item();
      vals[i] = orig - h;
      const double fm = f().item();
      vals[i] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[ti][i];
      double rel = rel_error(a, numeric, opts.rel_floor);
      ++report.checked;
      if (rel > tol && opts.kink_aware) {
        const double f0 = f().item();
        const double right = (fp - f0) / h;
        const double left = (f0 - fm) / h;
        const double r_right = rel_error(a, right, opts.rel_floor);
        const double r_left = rel_error(a, left, opts.rel_floor);
        if (rel_error(left, right, opts.rel_floor) > tol && std::min(r_left, r_right) <= tol) {
          ++report.kinks;
          rel = std::min(r_left, r_right);
          numeric = r_left <= r_right ? left : right;
        }
      }
      if (rel > tol) ++report.flagged;
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = rel;
        report.worst_tensor = ti;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                  double tol, const GradCheckOptions& opts) {
  Tensor wrt[] = {x};
  return finite_diff_check([&] { return f(x); }, wrt, tol, opts);
}

}  // namespace hiot
