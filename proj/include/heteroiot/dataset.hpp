#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hiot {

/// N univariate sequences of a common length with integer labels.
struct Dataset {
  std::size_t length = 0;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  /// size() * length readings, row-major.
  std::vector<double> values;
  /// Parallel to `values`, 1 marks a missing reading; empty when none are.
  std::vector<std::uint8_t> missing;
  /// Where the data came from and how it was built.
  std::string source = "unknown";
  nlohmann::json build_params = nlohmann::json::object();

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * length, length};
  }
  std::span<double> row(std::size_t i) { return {values.data() + i * length, length}; }
  bool is_missing(std::size_t i, std::size_t t) const {
    return !missing.empty() && missing[i * length + t] != 0;
  }
  std::size_t missing_count() const;
  std::vector<std::size_t> class_counts() const;

  /// Structural checks; `require_every_class` also demands >= 1 sample per
  /// class and `require_complete` forbids missing cells. Throws ConfigError.
  void validate(bool require_every_class = true, bool require_complete = false) const;

  /// Rows in the given order, same class table.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Appends a sample; `values` must have `length` entries.
  void push_back(std::string id, int label, std::span<const double> seq);
};

/// Reads `id,label,v0..v{t-1}`. Empty cells become missing; labels are
/// interned to class indices in first-seen order.
Dataset load_csv(const std::filesystem::path& path);
Dataset read_csv(std::istream& is, const std::string& name = "<stream>");
/// Writes the same layout with shortest round-trip number formatting.
void write_csv(std::ostream& os, const Dataset& ds);
void write_csv(const std::filesystem::path& path, const Dataset& ds);

/// Hex SHA-256 of the canonical CSV serialization plus the class table.
std::string content_hash(const Dataset& ds);

/// Manifest JSON: provenance, t, N, L, class names, build parameters, hash.
nlohmann::json make_manifest(const Dataset& ds, const std::string& csv_file);
/// Writes <dir>/dataset.csv and <dir>/manifest.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
/// Accepts a directory written by save_dataset, a manifest file, or a bare
/// CSV. A manifest's hash is verified against the CSV contents.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace hiot
