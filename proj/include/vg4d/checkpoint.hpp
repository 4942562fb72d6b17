// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vg4d/common.hpp"

namespace vg4d {

/// One named tensor as stored on disk (always 32-bit floats).
struct RawTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// Checkpoint layout: magic "VG4DCKPT", then per tensor a u32-length-prefixed
/// UTF-8 name, u32 rank, rank u32 dims, and row-major little-endian f32
/// values, repeated until end of file.
void write_checkpoint(const std::string& path, const std::vector<RawTensor>& tensors);
std::vector<RawTensor> read_checkpoint(const std::string& path);

}  // namespace vg4d
