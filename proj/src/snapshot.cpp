#include "heteroiot/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "heteroiot/errors.hpp"

namespace hiot {

static_assert(std::endian::native == std::endian::little,
              "snapshot I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("snapshot: unexpected end of data");
  return v;
}

}  // namespace

void write_snapshot(std::ostream& os, const Snapshot& snap) {
  os.write(kSnapshotMagic, sizeof(kSnapshotMagic));
  put<std::uint32_t>(os, kSnapshotVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(snap.size()));
  for (const auto& [name, t] : snap) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
}

Snapshot read_snapshot(std::istream& is) {
  char magic[sizeof(kSnapshotMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0)
    throw std::runtime_error("snapshot: bad magic header");
  const auto version = get<std::uint32_t>(is);
  if (version != kSnapshotVersion)
    throw std::runtime_error("snapshot: unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is);
  Snapshot snap;
  snap.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("snapshot: truncated name");
    const auto rank = get<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    Buffer vals(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * sizeof(double))))
      throw std::runtime_error("snapshot: truncated values for " + name);
    snap.push_back({std::move(name), Tensor(std::move(shape), std::move(vals))});
  }
  return snap;
}

void save_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write snapshot " + path.string());
  write_snapshot(os, snap);
  if (!os) throw std::runtime_error("error writing snapshot " + path.string());
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open snapshot " + path.string());
  return read_snapshot(is);
}

Snapshot copy_snapshot(const Snapshot& snap) {
  Snapshot out;
  out.reserve(snap.size());
  for (const auto& [name, t] : snap) out.push_back({name, t.detach()});
  return out;
}

}  // namespace hiot
