#include "heteroiot/smote.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "heteroiot/errors.hpp"

namespace hiot {

namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Indices of the `count` candidates nearest to `query` (ties by index).
std::vector<std::size_t> nearest(const Dataset& ds, std::size_t query,
                                 const std::vector<std::size_t>& candidates, std::size_t count) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(candidates.size());
  for (std::size_t j : candidates)
    if (j != query) d.emplace_back(sq_distance(ds.row(query), ds.row(j)), j);
  count = std::min(count, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(count), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(d[i].second);
  return out;
}

}  // namespace

SmoteResult bsmote_oversample(const Dataset& train, const SmoteConfig& cfg) {
  if (cfg.k < 1 || cfg.m < 1) throw ConfigError("bsmote: k and m must be positive");
  if (!train.missing.empty() && train.missing_count() > 0)
    throw ConfigError("bsmote: impute missing values first");

  SmoteResult res;
  res.data = train;
  res.roles.assign(train.size(), SampleRole::NotMinority);

  const auto counts = train.class_counts();
  const std::size_t target = *std::max_element(counts.begin(), counts.end());
  std::vector<std::vector<std::size_t>> members(train.num_classes());
  for (std::size_t i = 0; i < train.size(); ++i)
    members[static_cast<std::size_t>(train.labels[i])].push_back(i);
  std::vector<std::size_t> everyone(train.size());
  std::iota(everyone.begin(), everyone.end(), 0);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> synth(train.length);

  for (std::size_t c = 0; c < train.num_classes(); ++c) {
    const auto& cls = members[c];
    if (cls.empty() || cls.size() >= target) continue;
    const std::size_t need = target - cls.size();
    const std::string& name = train.class_names[c];

    std::vector<std::size_t> danger, safe;
    for (std::size_t p : cls) {
      const auto nn = nearest(train, p, everyone, cfg.m);
      const auto foreign = static_cast<std::size_t>(std::count_if(
          nn.begin(), nn.end(), [&](std::size_t j) { return train.labels[j] != train.labels[p]; }));
      SampleRole role = SampleRole::Safe;
      if (foreign == nn.size() && !nn.empty())
        role = SampleRole::Noise;
      else if (2 * foreign >= cfg.m)
        role = SampleRole::Danger;
      res.roles[p] = role;
      if (role == SampleRole::Danger) danger.push_back(p);
      if (role == SampleRole::Safe) safe.push_back(p);
    }

    auto duplicate = [&](const std::vector<std::size_t>& pool) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t n = 0; n < need; ++n) {
        const std::size_t p = pool[pick(rng)];
        res.data.push_back("bsmote-" + name + "-" + std::to_string(n),
                           static_cast<int>(c), train.row(p));
        res.origins.push_back({p, p, 0.0, true});
      }
    };

    if (cls.size() < cfg.k + 1) {
      res.warnings.push_back("bsmote: class '" + name + "' has " + std::to_string(cls.size()) +
                             " samples (< k+1 = " + std::to_string(cfg.k + 1) +
                             "); padded by duplication");
      duplicate(cls);
      continue;
    }
    const std::vector<std::size_t>* seeds = &danger;
    if (danger.empty()) {
      if (safe.empty()) {
        res.warnings.push_back("bsmote: every sample of class '" + name +
                               "' is noise; padded by duplication");
        duplicate(cls);
        continue;
      }
      res.warnings.push_back("bsmote: class '" + name +
                             "' has no borderline samples; seeding from safe samples");
      seeds = &safe;
    }

    std::uniform_int_distribution<std::size_t> pick_seed(0, seeds->size() - 1);
    std::uniform_int_distribution<std::size_t> pick_nn(0, cfg.k - 1);
    std::vector<std::vector<std::size_t>> knn_cache(train.size());
    for (std::size_t n = 0; n < need; ++n) {
      const std::size_t p = (*seeds)[pick_seed(rng)];
      if (knn_cache[p].empty()) knn_cache[p] = nearest(train, p, cls, cfg.k);
      const std::size_t q = knn_cache[p][pick_nn(rng)];
      const double gap = unit(rng);
      auto rp = train.row(p);
      auto rq = train.row(q);
      for (std::size_t t = 0; t < train.length; ++t) synth[t] = rp[t] + gap * (rq[t] - rp[t]);
      res.data.push_back("bsmote-" + name + "-" + std::to_string(n), static_cast<int>(c), synth);
      res.origins.push_back({p, q, gap, false});
    }
  }
  res.data.build_params["bsmote"] = {{"k", cfg.k}, {"m", cfg.m}, {"seed", cfg.seed}};
  return res;
}

}  // namespace hiot
