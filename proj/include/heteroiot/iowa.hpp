#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "heteroiot/dataset.hpp"

namespace hiot {

/// One ASOS variable column and the class it becomes.
struct AsosVariable {
  std::string column;
  std::string class_name;
};

/// tmpf, dwpf, relh, drct, alti, vsby, gust, feel in that class order.
const std::vector<AsosVariable>& asos_variables();

struct IowaOptions {
  std::size_t window = 168;
  /// Windows with more than this share of missing hours are dropped.
  double max_missing_fraction = 0.5;
};

/// Hourly series for one station, indexed from `first_hour` (hours since
/// the Unix epoch). NaN marks an hour with no usable reading.
struct StationSeries {
  long long first_hour = 0;
  std::map<std::string, std::vector<double>> variables;
};

/// Parses IEM ASOS download text (`station,valid,...`; '#' comment lines;
/// "M" or empty for missing). Readings are bucketed by the hour of `valid`
/// and the last observed value inside each hour wins. Unknown columns are
/// ignored; a warning is appended for each. Throws ParseError.
std::map<std::string, StationSeries> read_asos(std::istream& is, const std::string& name,
                                               std::vector<std::string>& warnings);

struct IowaBuild {
  Dataset dataset;  // missing mask populated; impute before training
  std::vector<std::string> warnings;
  /// windows[station][class_name] -> kept window count.
  std::map<std::string, std::map<std::string, std::size_t>> windows;
  std::size_t dropped_windows = 0;
};

/// Cuts non-overlapping windows per station and variable starting at each
/// station's first hour. The class table lists only variables that yielded
/// at least one window.
IowaBuild build_iowa_asos(const std::map<std::string, StationSeries>& stations,
                          const IowaOptions& opts = {});

/// Reads every *.csv / *.txt file under `raw` (a file or directory), merging
/// stations across files, then builds the dataset.
IowaBuild build_iowa_asos(const std::filesystem::path& raw, const IowaOptions& opts = {});

}  // namespace hiot
