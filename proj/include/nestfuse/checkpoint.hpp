#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nestfuse/network.hpp"

// Binary checkpoint container, all integers and floats little-endian:
//
//   header   "NESTFUSE1"  u32 version  u8 deep_supervision  f64 lambda
//            u32 stem_channels  u32 block_width  u32 scale_channels[4]
//            u32 entry_count  u32 crc32(all preceding header bytes)
//   entry    u32 name_len  name  u32 ndim  u32 dims[ndim]  u8 dtype (1 = f32)
//            u64 byte_len  data  u32 crc32(entry bytes from name_len to data)
//
// Every convolution contributes "<layer>.weight" (out, in, k, k) and
// "<layer>.bias" (out).
namespace nestfuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkState state;
  double lambda = 0.0;  // training trade-off the weights were produced with
};

std::vector<std::uint8_t> serialize_checkpoint(const NetworkState& state, double lambda);

/// Throws Error with kBadMagic, kVersionMismatch, kChecksum (also for
/// truncation) or kCheckpointTopology.
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic write of serialize_checkpoint.
void save_checkpoint(const NetworkState& state, double lambda, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nestfuse
