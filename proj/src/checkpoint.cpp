// SPDX-License-Identifier: Apache-2.0
#include "vg4d/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "vg4d/binio.hpp"

namespace vg4d {

namespace {
constexpr char kMagic[] = "VG4DCKPT";
}

void write_checkpoint(const std::string& path, const std::vector<RawTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  binio::put_bytes(os, kMagic);
  for (const RawTensor& t : tensors) {
    if (t.name.empty()) throw ArgumentError("write_checkpoint: unnamed tensor");
    if (numel(t.shape) != static_cast<Eigen::Index>(t.data.size()))
      throw DimensionError("write_checkpoint: " + t.name + " has " + std::to_string(t.data.size()) +
                           " values for shape " + shape_str(t.shape));
    binio::put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    binio::put_bytes(os, t.name);
    binio::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (Eigen::Index d : t.shape) binio::put_u32(os, static_cast<std::uint32_t>(d));
    for (float v : t.data) binio::put_f32(os, v);
  }
  if (!os) throw DataError("write failure on " + path);
}

std::vector<RawTensor> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  binio::expect_magic(is, kMagic, path);
  std::vector<RawTensor> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    RawTensor t;
    const std::uint32_t name_len = binio::get_u32(is, path + " name length");
    if (name_len == 0 || name_len > 4096) throw FormatError(path + ": implausible name length");
    t.name = binio::get_bytes(is, name_len, path + " tensor name");
    const std::uint32_t rank = binio::get_u32(is, path + " rank of " + t.name);
    if (rank > 8) throw FormatError(path + ": implausible rank for " + t.name);
    Eigen::Index count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t d = binio::get_u32(is, path + " dim of " + t.name);
      t.shape.push_back(static_cast<Eigen::Index>(d));
      count *= static_cast<Eigen::Index>(d);
    }
    if (count < 0 || count > (Eigen::Index(1) << 30)) throw FormatError(path + ": implausible size for " + t.name);
    t.data.resize(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i)
      t.data[static_cast<std::size_t>(i)] = binio::get_f32(is, path + " values of " + t.name);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace vg4d
