#include "heteroiot/augment.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace hiot {

Dataset augment_timeseries(const Dataset& train, const AugmentPolicy& policy) {
  if (!policy.enabled) return train;
  Dataset out = train;
  std::mt19937_64 rng(policy.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> buf(train.length);
  const double n = static_cast<double>(train.length);

  for (std::size_t i = 0; i < train.size(); ++i) {
    auto r = train.row(i);
    const double mu = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    const double sigma = policy.jitter_ratio * std::sqrt(var / n);

    for (std::size_t t = 0; t < r.size(); ++t) buf[t] = r[t] + sigma * normal(rng);
    out.push_back(train.ids[i] + "-jitter", train.labels[i], buf);

    const double factor = 1.0 + policy.scale_sigma * normal(rng);
    for (std::size_t t = 0; t < r.size(); ++t) buf[t] = r[t] * factor;
    out.push_back(train.ids[i] + "-scale", train.labels[i], buf);
  }
  out.build_params["augment"] = {{"jitter_ratio", policy.jitter_ratio},
                                 {"scale_sigma", policy.scale_sigma},
                                 {"seed", policy.seed}};
  return out;
}

}  // namespace hiot
