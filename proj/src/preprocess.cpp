#include "heteroiot/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "heteroiot/errors.hpp"

namespace hiot {

Dataset impute_mean(const Dataset& ds, const ImputeOptions& opts) {
  Dataset out = ds;
  if (ds.missing.empty()) return out;

  const std::size_t L = ds.num_classes();
  const std::size_t T = ds.length;
  std::vector<std::size_t> rows;
  if (opts.statistics_rows) {
    rows = *opts.statistics_rows;
  } else {
    rows.resize(ds.size());
    std::iota(rows.begin(), rows.end(), 0);
  }

  std::vector<double> slot_sum(L * T, 0.0), class_sum(L, 0.0);
  std::vector<std::size_t> slot_n(L * T, 0), class_n(L, 0);
  for (std::size_t i : rows) {
    const auto c = static_cast<std::size_t>(ds.labels.at(i));
    auto r = ds.row(i);
    for (std::size_t t = 0; t < T; ++t) {
      if (ds.is_missing(i, t)) continue;
      slot_sum[c * T + t] += r[t];
      slot_n[c * T + t] += 1;
      class_sum[c] += r[t];
      class_n[c] += 1;
    }
  }

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    auto r = out.row(i);
    for (std::size_t t = 0; t < T; ++t) {
      if (!ds.is_missing(i, t)) continue;
      if (slot_n[c * T + t] > 0)
        r[t] = slot_sum[c * T + t] / static_cast<double>(slot_n[c * T + t]);
      else if (class_n[c] > 0)
        r[t] = class_sum[c] / static_cast<double>(class_n[c]);
      else
        r[t] = 0.0;
    }
  }
  out.missing.clear();
  return out;
}

Dataset truncate_to_min(const RaggedSeries& series) {
  if (series.sequences.empty()) throw ConfigError("truncate_to_min: no sequences");
  if (series.labels.size() != series.sequences.size())
    throw ConfigError("truncate_to_min: label count does not match sequence count");
  std::size_t t = series.sequences.front().size();
  for (const auto& s : series.sequences) t = std::min(t, s.size());
  if (t == 0) throw ConfigError("truncate_to_min: empty sequence");

  Dataset ds;
  ds.length = t;
  ds.class_names = series.class_names;
  ds.source = "truncated";
  ds.build_params = {{"truncated_length", t}};
  for (std::size_t i = 0; i < series.sequences.size(); ++i) {
    std::string id = i < series.ids.size() ? series.ids[i] : std::to_string(i);
    ds.push_back(std::move(id), series.labels[i],
                 std::span<const double>(series.sequences[i].data(), t));
  }
  return ds;
}

Dataset zscore_per_sequence(const Dataset& ds) {
  Dataset out = ds;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto r = out.row(i);
    const double n = static_cast<double>(r.size());
    const double mu = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    const double sd = std::sqrt(var / n);
    for (double& v : r) v = sd > 0.0 ? (v - mu) / sd : 0.0;
  }
  return out;
}

}  // namespace hiot
