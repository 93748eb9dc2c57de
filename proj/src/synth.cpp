#include "heteroiot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "heteroiot/errors.hpp"

namespace hiot {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gauss(Rng& rng, double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }

void air_temperature(Rng& rng, std::vector<double>& y) {
  const double level = uniform(rng, 0.0, 30.0);
  const double amp = uniform(rng, 4.0, 8.0);
  const double phase = uniform(rng, 0.0, kTwoPi);
  const double trend = uniform(rng, -0.02, 0.02);
  for (std::size_t t = 0; t < y.size(); ++t)
    y[t] = level + amp * std::sin(kTwoPi * t / 24.0 + phase) + trend * t + gauss(rng, 0.5);
}

void dew_point(Rng& rng, std::vector<double>& y) {
  double drift = 0.0;
  const double level = uniform(rng, -5.0, 20.0);
  const double amp = uniform(rng, 0.5, 2.0);
  const double phase = uniform(rng, 0.0, kTwoPi);
  for (std::size_t t = 0; t < y.size(); ++t) {
    drift = 0.97 * drift + gauss(rng, 0.6);
    y[t] = level + drift + amp * std::sin(kTwoPi * t / 24.0 + phase) + gauss(rng, 0.3);
  }
}

void relative_humidity(Rng& rng, std::vector<double>& y) {
  const double amp = uniform(rng, 10.0, 20.0);
  const double phase = uniform(rng, 0.0, kTwoPi);
  const double base = uniform(rng, 60.0, 80.0);
  for (std::size_t t = 0; t < y.size(); ++t)
    y[t] = std::clamp(base - amp * std::sin(kTwoPi * t / 24.0 + phase) + gauss(rng, 2.0), 5.0,
                      100.0);
}

void wind_direction(Rng& rng, std::vector<double>& y) {
  double angle = uniform(rng, 0.0, 360.0);
  for (auto& v : y) {
    angle = std::fmod(angle + gauss(rng, 20.0) + 360.0, 360.0);
    v = std::round(angle / 10.0) * 10.0;
  }
}

void pressure_altimeter(Rng& rng, std::vector<double>& y) {
  const double level = uniform(rng, 29.6, 30.4);
  const double period = uniform(rng, 60.0, 120.0);
  const double amp = uniform(rng, 0.1, 0.3);
  const double phase = uniform(rng, 0.0, kTwoPi);
  for (std::size_t t = 0; t < y.size(); ++t)
    y[t] = level + amp * std::sin(kTwoPi * t / period + phase) + gauss(rng, 0.01);
}

void visibility(Rng& rng, std::vector<double>& y) {
  bool reduced = uniform(rng, 0.0, 1.0) < 0.3;
  double low = uniform(rng, 1.0, 6.0);
  for (auto& v : y) {
    if (uniform(rng, 0.0, 1.0) < 0.04) {
      reduced = !reduced;
      if (reduced) low = uniform(rng, 1.0, 6.0);
    }
    v = reduced ? std::max(0.1, low + gauss(rng, 0.3)) : 10.0;
  }
}

void wind_gust(Rng& rng, std::vector<double>& y) {
  std::size_t burst = 0;
  double peak = 0.0;
  for (auto& v : y) {
    if (burst == 0 && uniform(rng, 0.0, 1.0) < 0.05) {
      burst = 1 + static_cast<std::size_t>(uniform(rng, 0.0, 6.0));
      peak = uniform(rng, 15.0, 35.0);
    }
    if (burst > 0) {
      v = peak + gauss(rng, 2.0);
      --burst;
    } else {
      v = 0.0;
    }
  }
}

void apparent_temperature(Rng& rng, std::vector<double>& y) {
  const double level = uniform(rng, 0.0, 30.0);
  const double amp = uniform(rng, 4.0, 8.0);
  const double phase = uniform(rng, 0.0, kTwoPi);
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double s = std::sin(kTwoPi * t / 24.0 + phase);
    y[t] = level + amp * std::tanh(4.0 * s) + gauss(rng, 0.5);
  }
}

using Generator = void (*)(Rng&, std::vector<double>&);

constexpr Generator kGenerators[] = {air_temperature, dew_point,  relative_humidity,
                                     wind_direction,  pressure_altimeter, visibility,
                                     wind_gust,       apparent_temperature};

}  // namespace

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names{
      "air_temperature",    "dew_point",  "relative_humidity", "wind_direction",
      "pressure_altimeter", "visibility", "wind_gust",         "apparent_temperature"};
  return names;
}

Dataset synth_benchmark(std::size_t classes, std::size_t n_per_class, std::size_t length,
                        std::uint64_t seed) {
  if (classes < 2 || classes > std::size(kGenerators))
    throw ConfigError("synth: classes must be in [2, 8]");
  if (n_per_class < 4) throw ConfigError("synth: n_per_class must be >= 4");
  if (length < 1) throw ConfigError("synth: length must be >= 1");

  Dataset ds;
  ds.length = length;
  ds.class_names.assign(synth_class_names().begin(),
                        synth_class_names().begin() + static_cast<std::ptrdiff_t>(classes));
  ds.source = "synthetic";
  ds.build_params = {{"classes", classes},
                     {"per_class", n_per_class},
                     {"length", length},
                     {"seed", seed}};
  Rng rng(seed);
  std::vector<double> y(length);
  // Interleave classes so any prefix of the file is roughly balanced.
  for (std::size_t i = 0; i < n_per_class; ++i)
    for (std::size_t c = 0; c < classes; ++c) {
      kGenerators[c](rng, y);
      ds.push_back("synth-" + std::to_string(c) + "-" + std::to_string(i), static_cast<int>(c),
                   y);
    }
  return ds;
}

}  // namespace hiot
