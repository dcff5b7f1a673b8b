#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "firn/model.hpp"

namespace firn {

// Checkpoint file: little-endian binary.
//
//   char[4]  magic "FRCK"
//   u32      format version (1)
//   u32+utf8 model kind ("gcn_lstm", "gcn", "lstm")
//   i32 x 6  in_channels, hidden, dense, outputs, cheb_order, steps
//   u8       stacked flag
//   f64      dropout probability
//   f64      target mean, f64 target scale
//   u32      tensor count
//   per tensor:
//     u32+utf8 name, u32 rank (2), u32 rows, u32 cols, f64[rows*cols] row-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Parameters& params);
Parameters decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Parameters& params);
Parameters load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the checkpoint encoding; cheap identity for "did it change".
std::uint64_t parameter_hash(const Parameters& params);

}  // namespace firn
