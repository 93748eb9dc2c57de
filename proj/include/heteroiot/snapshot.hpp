#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "heteroiot/tensor.hpp"

namespace hiot {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered name -> tensor mapping; the unit of checkpointing.
using Snapshot = std::vector<NamedTensor>;

/// Binary layout, little-endian:
///   "HIOTSNAP" | u32 version | u32 count |
///   count x { u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[] }
inline constexpr char kSnapshotMagic[8] = {'H', 'I', 'O', 'T', 'S', 'N', 'A', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

void write_snapshot(std::ostream& os, const Snapshot& snap);
Snapshot read_snapshot(std::istream& is);
void save_snapshot(const std::filesystem::path& path, const Snapshot& snap);
Snapshot load_snapshot(const std::filesystem::path& path);

/// Deep copy, so later parameter updates do not alias the snapshot.
Snapshot copy_snapshot(const Snapshot& snap);

}  // namespace hiot
