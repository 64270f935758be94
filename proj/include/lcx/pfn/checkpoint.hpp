// SPDX-License-Identifier: Apache-2.0
//
// Binary layout (little-endian):
//   "LCXPFN\0\0"  u32 version  u32 tensor count
//   per tensor: u32 name length, name bytes, u64 element count, f32 values
// A JSON sidecar at <path>.json carries the model config, bucket edges and
// training seed.
#pragma once

#include <cstdint>
#include <string>

#include "lcx/pfn/bin_grid.hpp"
#include "lcx/pfn/model.hpp"

namespace lcx::pfn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams<float> params;
  BinGrid grid;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws an io Error on unreadable / malformed files or a shape mismatch
/// between the sidecar config and the stored tensors.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lcx::pfn
