#include "heteroiot/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "heteroiot/errors.hpp"

namespace hiot {

std::size_t Dataset::missing_count() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), 1));
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (int l : labels) counts.at(static_cast<std::size_t>(l)) += 1;
  return counts;
}

void Dataset::validate(bool require_every_class, bool require_complete) const {
  if (length == 0) throw ConfigError("dataset: sequence length is zero");
  if (values.size() != size() * length)
    throw ConfigError("dataset: " + std::to_string(values.size()) + " values for " +
                      std::to_string(size()) + " sequences of length " + std::to_string(length));
  if (ids.size() != size()) throw ConfigError("dataset: id count does not match label count");
  if (!missing.empty() && missing.size() != values.size())
    throw ConfigError("dataset: missing mask size mismatch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes())
      throw ConfigError("dataset: label " + std::to_string(l) + " has no class name");
  if (require_every_class) {
    auto counts = class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] == 0) throw ConfigError("dataset: class '" + class_names[c] + "' is empty");
  }
  if (require_complete && missing_count() > 0)
    throw ConfigError("dataset: " + std::to_string(missing_count()) + " readings are missing");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.length = length;
  out.class_names = class_names;
  out.source = source;
  out.build_params = build_params;
  out.values.reserve(indices.size() * length);
  if (!missing.empty()) out.missing.reserve(indices.size() * length);
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("dataset subset index out of range");
    out.ids.push_back(ids[i]);
    out.labels.push_back(labels[i]);
    auto r = row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    if (!missing.empty())
      out.missing.insert(out.missing.end(), missing.begin() + i * length,
                         missing.begin() + (i + 1) * length);
  }
  return out;
}

void Dataset::push_back(std::string id, int label, std::span<const double> seq) {
  if (seq.size() != length)
    throw ConfigError("dataset: appended sequence has length " + std::to_string(seq.size()) +
                      ", expected " + std::to_string(length));
  ids.push_back(std::move(id));
  labels.push_back(label);
  values.insert(values.end(), seq.begin(), seq.end());
  if (!missing.empty()) missing.insert(missing.end(), length, 0);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

Dataset read_csv(std::istream& is, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw ParseError(name, 1, "empty file");
  ++lineno;
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw ParseError(name, lineno, "header must be id,label,v0,...");
  const std::size_t t = header.size() - 2;
  for (std::size_t i = 0; i < t; ++i)
    if (header[i + 2] != "v" + std::to_string(i))
      throw ParseError(name, lineno, "expected column v" + std::to_string(i) + ", found '" +
                                         header[i + 2] + "'");

  Dataset ds;
  ds.length = t;
  ds.source = "csv";
  std::map<std::string, int> label_index;
  std::vector<std::uint8_t> mask;
  bool any_missing = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    const std::string row_id = cells.empty() ? std::string() : trim(cells[0]);
    if (cells.size() != t + 2)
      throw ParseError(name, lineno, "row '" + row_id + "' has " +
                                         std::to_string(cells.size() >= 2 ? cells.size() - 2 : 0) +
                                         " values, expected " + std::to_string(t));
    const std::string label = trim(cells[1]);
    auto [it, inserted] = label_index.try_emplace(label, static_cast<int>(ds.class_names.size()));
    if (inserted) ds.class_names.push_back(label);
    ds.ids.push_back(row_id);
    ds.labels.push_back(it->second);
    for (std::size_t j = 0; j < t; ++j) {
      const std::string cell = trim(cells[j + 2]);
      if (cell.empty()) {
        ds.values.push_back(0.0);
        mask.push_back(1);
        any_missing = true;
        continue;
      }
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw ParseError(name, lineno, "row '" + row_id + "', column v" + std::to_string(j) +
                                           ": not a number: '" + cell + "'");
      ds.values.push_back(v);
      mask.push_back(0);
    }
  }
  if (ds.size() == 0) throw ParseError(name, lineno, "no data rows");
  if (any_missing) ds.missing = std::move(mask);
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open dataset " + path.string());
  Dataset ds = read_csv(is, path.string());
  ds.build_params = {{"file", path.filename().string()}};
  return ds;
}

void write_csv(std::ostream& os, const Dataset& ds) {
  std::string buf = "id,label";
  for (std::size_t j = 0; j < ds.length; ++j) buf += ",v" + std::to_string(j);
  buf += '\n';
  os << buf;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    buf = quote_if_needed(ds.ids[i]);
    buf += ',';
    buf += quote_if_needed(ds.class_names.at(static_cast<std::size_t>(ds.labels[i])));
    auto r = ds.row(i);
    for (std::size_t j = 0; j < ds.length; ++j) {
      buf += ',';
      if (!ds.is_missing(i, j)) append_number(buf, r[j]);
    }
    buf += '\n';
    os << buf;
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  write_csv(os, ds);
  if (!os) throw ConfigError("error writing " + path.string());
}

std::string content_hash(const Dataset& ds) {
  std::ostringstream os;
  write_csv(os, ds);
  os << "#classes";
  for (const auto& c : ds.class_names) os << ',' << quote_if_needed(c);
  const std::string bytes = os.str();

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

nlohmann::json make_manifest(const Dataset& ds, const std::string& csv_file) {
  return {{"format", "heteroiot-dataset"},
          {"format_version", 1},
          {"csv", csv_file},
          {"provenance", {{"source", ds.source}, {"build_params", ds.build_params}}},
          {"length", ds.length},
          {"samples", ds.size()},
          {"labels", ds.num_classes()},
          {"class_names", ds.class_names},
          {"class_counts", ds.class_counts()},
          {"missing_cells", ds.missing_count()},
          {"content_hash", content_hash(ds)}};
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  write_csv(dir / "dataset.csv", ds);
  std::ofstream os(dir / "manifest.json");
  if (!os) throw ConfigError("cannot write " + (dir / "manifest.json").string());
  os << make_manifest(ds, "dataset.csv").dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  fs::path manifest_path;
  if (fs::is_directory(path))
    manifest_path = path / "manifest.json";
  else if (path.extension() == ".json")
    manifest_path = path;
  else
    return load_csv(path);

  std::ifstream is(manifest_path);
  if (!is) throw ConfigError("cannot open manifest " + manifest_path.string());
  nlohmann::json m;
  try {
    is >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string(), 0, e.what());
  }
  const fs::path csv = manifest_path.parent_path() / m.value("csv", "dataset.csv");
  Dataset ds = load_csv(csv);
  if (m.contains("provenance")) {
    ds.source = m["provenance"].value("source", ds.source);
    ds.build_params = m["provenance"].value("build_params", nlohmann::json::object());
  }
  // Re-impose the manifest's class order; first-seen order may differ.
  if (m.contains("class_names")) {
    auto names = m["class_names"].get<std::vector<std::string>>();
    std::vector<int> remap(ds.class_names.size(), -1);
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
      auto it = std::find(names.begin(), names.end(), ds.class_names[c]);
      if (it == names.end())
        throw ConfigError("dataset label '" + ds.class_names[c] + "' missing from manifest");
      remap[c] = static_cast<int>(it - names.begin());
    }
    for (int& l : ds.labels) l = remap[static_cast<std::size_t>(l)];
    ds.class_names = std::move(names);
  }
  if (m.contains("content_hash") && m["content_hash"].get<std::string>() != content_hash(ds))
    throw ConfigError("dataset " + csv.string() + " does not match its manifest hash");
  return ds;
}

}  // namespace hiot
