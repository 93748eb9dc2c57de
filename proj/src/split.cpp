#include "heteroiot/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "heteroiot/errors.hpp"

namespace hiot {

namespace {

std::size_t floor_share(double fraction, std::size_t n) {
  // Guard against 0.7 * 10 landing a hair under 7.
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

SplitIndices split_indices(std::span<const int> labels, std::size_t num_classes,
                           const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ConfigError("split: train fraction must lie in (0, 1)");
  std::mt19937_64 rng(spec.seed);
  const std::size_t N = labels.size();
  SplitIndices out;

  if (!spec.stratified) {
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_train = floor_share(spec.train_fraction, N);
    out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  } else {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < N; ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
        throw ConfigError("split: label out of range");
      by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    std::vector<std::size_t> quota(num_classes);
    std::vector<double> frac(num_classes);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      const std::size_t n = by_class[c].size();
      if (n < 2)
        throw ConfigError("split: class " + std::to_string(c) + " has " + std::to_string(n) +
                          " sample(s); stratification needs at least 2");
      quota[c] = std::max<std::size_t>(1, floor_share(spec.train_fraction, n));
      frac[c] = spec.train_fraction * static_cast<double>(n) - static_cast<double>(quota[c]);
      assigned += quota[c];
    }
    const auto target = static_cast<std::size_t>(
        std::floor(spec.train_fraction * static_cast<double>(N) + 0.5));
    std::vector<std::size_t> order(num_classes);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t c : order) {
      if (assigned >= target) break;
      if (quota[c] + 1 < by_class[c].size()) {
        quota[c] += 1;
        assigned += 1;
      }
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto& rows = by_class[c];
      std::shuffle(rows.begin(), rows.end(), rng);
      out.train.insert(out.train.end(), rows.begin(),
                       rows.begin() + static_cast<std::ptrdiff_t>(quota[c]));
      out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(quota[c]),
                      rows.end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec) {
  auto idx = split_indices(ds.labels, ds.num_classes(), spec);
  return {ds.subset(idx.train), ds.subset(idx.test)};
}

}  // namespace hiot
