#include "heteroiot/iowa.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "heteroiot/errors.hpp"

namespace hiot {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& s, std::size_t pos, std::size_t len) {
  int v = 0;
  const char* first = s.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, v);
  if (ec != std::errc() || ptr != first + len) throw std::invalid_argument("bad int");
  return v;
}

/// "YYYY-MM-DD HH:MM" -> hours since 1970-01-01 00:00 (UTC).
long long parse_hour(const std::string& s) {
  if (s.size() < 13 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T'))
    throw std::invalid_argument("bad timestamp");
  using namespace std::chrono;
  const year_month_day ymd{year{parse_int(s, 0, 4)},
                           month{static_cast<unsigned>(parse_int(s, 5, 2))},
                           day{static_cast<unsigned>(parse_int(s, 8, 2))}};
  if (!ymd.ok()) throw std::invalid_argument("bad date");
  const int hour = parse_int(s, 11, 2);
  if (hour < 0 || hour > 23) throw std::invalid_argument("bad hour");
  return static_cast<long long>(sys_days{ymd}.time_since_epoch().count()) * 24 + hour;
}

bool parse_reading(const std::string& cell, double& out) {
  const std::string s = trim(cell);
  if (s.empty() || s == "M") return false;
  const char* first = s.data();
  auto [ptr, ec] = std::from_chars(first, first + s.size(), out);
  return ec == std::errc() && ptr == first + s.size() && std::isfinite(out);
}

struct Reading {
  long long hour;
  double value;
};

}  // namespace

const std::vector<AsosVariable>& asos_variables() {
  static const std::vector<AsosVariable> vars{
      {"tmpf", "Air Temperature"},    {"dwpf", "Dew Point Temperature"},
      {"relh", "Relative Humidity"},  {"drct", "Wind Direction"},
      {"alti", "Pressure Altimeter"}, {"vsby", "Visibility"},
      {"gust", "Wind Gust"},          {"feel", "Apparent Temperature"}};
  return vars;
}

std::map<std::string, StationSeries> read_asos(std::istream& is, const std::string& name,
                                               std::vector<std::string>& warnings) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    header = split_commas(line);
    break;
  }
  if (header.empty()) throw ParseError(name, lineno, "no header row");
  for (auto& h : header) h = trim(h);
  if (header.size() < 2 || header[0] != "station" || header[1] != "valid")
    throw ParseError(name, lineno, "header must start with station,valid");

  std::vector<int> var_of_col(header.size(), -1);
  const auto& vars = asos_variables();
  for (std::size_t c = 2; c < header.size(); ++c) {
    auto it = std::find_if(vars.begin(), vars.end(),
                           [&](const AsosVariable& v) { return v.column == header[c]; });
    if (it != vars.end())
      var_of_col[c] = static_cast<int>(it - vars.begin());
    else
      warnings.push_back(name + ": ignoring column '" + header[c] + "'");
  }

  // station -> variable -> readings in file order
  std::map<std::string, std::vector<std::vector<Reading>>> raw;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw ParseError(name, lineno,
                       "expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(cells.size()));
    long long hour = 0;
    try {
      hour = parse_hour(trim(cells[1]));
    } catch (const std::invalid_argument&) {
      throw ParseError(name, lineno, "unparseable timestamp '" + cells[1] + "'");
    }
    auto& per_var = raw[trim(cells[0])];
    per_var.resize(vars.size());
    for (std::size_t c = 2; c < cells.size(); ++c) {
      double v = 0.0;
      if (var_of_col[c] >= 0 && parse_reading(cells[c], v))
        per_var[static_cast<std::size_t>(var_of_col[c])].push_back({hour, v});
    }
  }

  std::map<std::string, StationSeries> out;
  for (auto& [station, per_var] : raw) {
    long long lo = std::numeric_limits<long long>::max();
    long long hi = std::numeric_limits<long long>::min();
    for (const auto& rs : per_var)
      for (const auto& r : rs) {
        lo = std::min(lo, r.hour);
        hi = std::max(hi, r.hour);
      }
    if (lo > hi) continue;  // station with no usable readings at all
    StationSeries series;
    series.first_hour = lo;
    const auto span = static_cast<std::size_t>(hi - lo + 1);
    for (std::size_t v = 0; v < vars.size(); ++v) {
      if (per_var[v].empty()) continue;
      std::vector<double> hourly(span, kNaN);
      // Readings arrive in file order, so the last one in each hour wins.
      for (const auto& r : per_var[v]) hourly[static_cast<std::size_t>(r.hour - lo)] = r.value;
      series.variables[vars[v].column] = std::move(hourly);
    }
    out[station] = std::move(series);
  }
  return out;
}

IowaBuild build_iowa_asos(const std::map<std::string, StationSeries>& stations,
                          const IowaOptions& opts) {
  if (opts.window < 1) throw ConfigError("iowa: window must be >= 1");
  const auto& vars = asos_variables();
  IowaBuild build;

  struct Window {
    std::string id;
    std::size_t var;
    std::vector<double> values;
  };
  std::vector<Window> kept;
  for (const auto& [station, series] : stations) {
    for (std::size_t v = 0; v < vars.size(); ++v) {
      auto it = series.variables.find(vars[v].column);
      if (it == series.variables.end()) continue;
      const auto& hourly = it->second;
      const std::size_t count = hourly.size() / opts.window;
      for (std::size_t w = 0; w < count; ++w) {
        std::vector<double> vals(hourly.begin() + static_cast<std::ptrdiff_t>(w * opts.window),
                                 hourly.begin() +
                                     static_cast<std::ptrdiff_t>((w + 1) * opts.window));
        const auto miss = static_cast<std::size_t>(
            std::count_if(vals.begin(), vals.end(), [](double x) { return std::isnan(x); }));
        if (static_cast<double>(miss) > opts.max_missing_fraction * static_cast<double>(opts.window)) {
          ++build.dropped_windows;
          continue;
        }
        kept.push_back({station + "-" + vars[v].column + "-w" + std::to_string(w), v,
                        std::move(vals)});
        ++build.windows[station][vars[v].class_name];
      }
    }
  }

  std::vector<int> class_of_var(vars.size(), -1);
  Dataset& ds = build.dataset;
  ds.length = opts.window;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const bool present =
        std::any_of(kept.begin(), kept.end(), [&](const Window& w) { return w.var == v; });
    if (present) {
      class_of_var[v] = static_cast<int>(ds.class_names.size());
      ds.class_names.push_back(vars[v].class_name);
    } else {
      build.warnings.push_back("no windows for variable '" + vars[v].column + "'");
    }
  }

  std::vector<std::uint8_t> mask;
  bool any_missing = false;
  for (auto& w : kept) {
    for (auto& x : w.values) {
      const bool m = std::isnan(x);
      mask.push_back(m ? 1 : 0);
      any_missing = any_missing || m;
      if (m) x = 0.0;
    }
    ds.push_back(w.id, class_of_var[w.var], w.values);
  }
  if (any_missing) ds.missing = std::move(mask);

  ds.source = "iowa-asos";
  ds.build_params = {{"window", opts.window},
                     {"window_policy", "non-overlapping"},
                     {"max_missing_fraction", opts.max_missing_fraction},
                     {"hourly_bucketing", "last observation in hour"},
                     {"stations", stations.size()},
                     {"dropped_windows", build.dropped_windows}};
  return build;
}

IowaBuild build_iowa_asos(const std::filesystem::path& raw, const IowaOptions& opts) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(raw)) {
    for (const auto& e : fs::recursive_directory_iterator(raw)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".csv" || ext == ".txt")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(raw)) {
    files.push_back(raw);
  } else {
    throw ConfigError("iowa: no such file or directory: " + raw.string());
  }
  if (files.empty()) throw ConfigError("iowa: no .csv/.txt files under " + raw.string());

  std::vector<std::string> warnings;
  std::map<std::string, StationSeries> stations;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw ConfigError("iowa: cannot open " + f.string());
    for (auto& [name, series] : read_asos(in, f.string(), warnings)) {
      if (stations.count(name))
        throw ConfigError("iowa: station " + name + " appears in more than one file");
      stations[name] = std::move(series);
    }
  }
  IowaBuild build = build_iowa_asos(stations, opts);
  build.warnings.insert(build.warnings.begin(), warnings.begin(), warnings.end());
  build.dataset.build_params["files"] = files.size();
  return build;
}

}  // namespace hiot
