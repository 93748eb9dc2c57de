#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heteroiot/dataset.hpp"

namespace hiot {

/// Names of the generator families, in class-index order.
const std::vector<std::string>& synth_class_names();

/// Seeded stand-in for a heterogeneous sensor corpus. Each class is one
/// generator family (hourly steps, daily period 24):
///   0 air_temperature      level U(0,30) + sine of amplitude U(4,8), random phase
///   1 dew_point            level U(-5,20) + smooth AR(1) drift + weak daily sine
///   2 relative_humidity    70 - sine of amplitude U(10,20), clipped to [5,100]
///   3 wind_direction       random walk in degrees, wrapped to [0,360)
///   4 pressure_altimeter   U(29.6,30.4) inHg + slow multi-day swing, tiny noise
///   5 visibility           regime switching between 10 and a reduced level
///   6 wind_gust            zero floor with sparse bursts of 15-35
///   7 apparent_temperature level U(0,30) + square-ish daily wave, random phase
/// `classes` selects the first families (2..8). Throws ConfigError if
/// n_per_class < 4.
Dataset synth_benchmark(std::size_t classes, std::size_t n_per_class, std::size_t length,
                        std::uint64_t seed);

}  // namespace hiot
