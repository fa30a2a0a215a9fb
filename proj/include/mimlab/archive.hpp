#pragma once

// Bit-exact binary store for named f32 tensors: model weights, optimizer
// state, checkpoints, and cached teacher targets all go through this.
//
// Layout (all integers little-endian):
//   magic "CAET" | version u32 | entry_count u64
//   entry table, sorted by name:
//     name_len u32 | name bytes | dtype u8 (0 = f32) | rank u8 |
//     extents u64[rank] | payload_offset u64 | payload_bytes u64
//   payloads: little-endian f32, each starting at a 64-byte-aligned offset.

#include <string>

#include "mimlab/tensor.hpp"

namespace mimlab {

inline constexpr char kArchiveMagic[4] = {'C', 'A', 'E', 'T'};
inline constexpr uint32_t kArchiveVersion = 1;

struct ArchiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_archive(const std::string& path, const ParamMap<float>& entries);
ParamMap<float> read_archive(const std::string& path);

// Names present in the archive without loading payloads.
std::vector<std::string> archive_entry_names(const std::string& path);

}  // namespace mimlab
