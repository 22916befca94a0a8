#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "sphperf/model.hpp"

namespace sphperf {

inline constexpr int kWarpSize = 32;

/// Per-multiprocessor limits of a CUDA compute capability.
struct DeviceSpec {
  std::string capability;
  int max_threads_per_block = 0;
  int max_blocks_per_sm = 0;
  int max_warps_per_sm = 0;
  int max_threads_per_sm = 0;
  int registers_per_sm = 0;
};

/// Tags: "1.0", "1.1", "1.2", "1.3", "2.x" (also "2.0", "2.1").
inline DeviceSpec device_spec(std::string_view capability) {
  if (capability == "1.0" || capability == "1.1")
    return {std::string(capability), 512, 8, 24, 768, 8 * 1024};
  if (capability == "1.2" || capability == "1.3")
    return {std::string(capability), 512, 8, 32, 1024, 16 * 1024};
  if (capability == "2.x" || capability == "2.0" || capability == "2.1")
    return {"2.x", 1024, 8, 48, 1536, 32 * 1024};
  throw ConfigError("capability", "unknown compute capability '" + std::string(capability) + "'");
}

inline int resident_blocks(int registers_per_thread, int threads_per_block, const DeviceSpec& dev) {
  if (registers_per_thread < 1) throw ConfigError("registers", "registers per thread must be >= 1");
  if (threads_per_block < kWarpSize || threads_per_block % kWarpSize != 0 ||
      threads_per_block > dev.max_threads_per_block)
    throw ConfigError("threads_per_block", "invalid block size " + std::to_string(threads_per_block));
  const long long regs_per_block = static_cast<long long>(registers_per_thread) * threads_per_block;
  const long long by_regs = dev.registers_per_sm / regs_per_block;
  const long long by_threads = dev.max_threads_per_sm / threads_per_block;
  return static_cast<int>(std::min<long long>({dev.max_blocks_per_sm, by_regs, by_threads}));
}

/// Active warps over the hardware maximum, with register allocation taken as
/// a plain product (no allocation granularity).
inline double occupancy(int registers_per_thread, int threads_per_block, const DeviceSpec& dev) {
  const int blocks = resident_blocks(registers_per_thread, threads_per_block, dev);
  return static_cast<double>(blocks * (threads_per_block / kWarpSize)) / dev.max_warps_per_sm;
}

struct BlockChoice {
  int threads_per_block = 0;
  double occupancy = 0.0;
};

/// Smallest block size (multiple of 32) with the highest occupancy.
inline BlockChoice best_block_size(int registers_per_thread, const DeviceSpec& dev) {
  if (registers_per_thread < 1) throw ConfigError("registers", "registers per thread must be >= 1");
  BlockChoice best{kWarpSize, 0.0};
  for (int tpb = kWarpSize; tpb <= dev.max_threads_per_block; tpb += kWarpSize) {
    const double occ = occupancy(registers_per_thread, tpb, dev);
    if (occ > best.occupancy) best = {tpb, occ};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Neighbour-structure memory
// ---------------------------------------------------------------------------

/// Bytes of one stored range: two 8-byte particle indices.
inline constexpr std::uint64_t kRangeBytes = 16;

inline std::uint64_t ranges_per_cell(int n_subdiv) {
  if (n_subdiv != 1 && n_subdiv != 2) throw ConfigError("n_subdiv", "memory estimate supports n = 1 or 2");
  const std::uint64_t side = 2 * static_cast<std::uint64_t>(n_subdiv) + 1;
  return side * side;
}

inline std::uint64_t range_bytes_per_cell(int n_subdiv) { return ranges_per_cell(n_subdiv) * kRangeBytes; }

/// `base_cells` is the cell count at cell size 2h; at n = 2 the same domain
/// holds 8x as many cells.
inline std::uint64_t estimate_range_memory(std::uint64_t base_cells, int n_subdiv) {
  const std::uint64_t n = static_cast<std::uint64_t>(n_subdiv);
  return base_cells * n * n * n * range_bytes_per_cell(n_subdiv);
}

struct DeviceMemory {
  std::string tag;
  std::uint64_t usable_bytes;
};

/// Usable memory of the two GPUs the estimate is usually compared against.
inline DeviceMemory device_memory(std::string_view tag) {
  if (tag == "gtx480") return {"gtx480", 1400ull * 1000 * 1000};
  if (tag == "tesla1060") return {"tesla1060", 4000ull * 1000 * 1000};
  throw ConfigError("device", "unknown device '" + std::string(tag) + "'");
}

}  // namespace sphperf
