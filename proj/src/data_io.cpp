// SPDX-License-Identifier: Apache-2.0
#include "vg4d/data.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vg4d/binio.hpp"

namespace vg4d {

namespace {
constexpr char kMagic[] = "PCVD0001";
}

void save_pcv(const std::string& path, const PointCloudVideo<float>& pcv) {
  if (pcv.frames.empty()) throw ArgumentError("save_pcv: video has no frames");
  if (pcv.label < 0) throw ArgumentError("save_pcv: negative label");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  binio::put_bytes(os, kMagic);
  binio::put_u32(os, static_cast<std::uint32_t>(pcv.frames.size()));
  binio::put_u32(os, static_cast<std::uint32_t>(pcv.label));
  binio::put_u32(os, static_cast<std::uint32_t>(pcv.sample_id.size()));
  binio::put_bytes(os, pcv.sample_id);
  for (const auto& fr : pcv.frames) {
    if (fr.coords.rows() < 1) throw ArgumentError("save_pcv: empty frame");
    binio::put_u32(os, static_cast<std::uint32_t>(fr.coords.rows()));
    for (Eigen::Index i = 0; i < fr.coords.rows(); ++i)
      for (int d = 0; d < 3; ++d) binio::put_f32(os, fr.coords(i, d));
  }
  if (!os) throw DataError("write failure on " + path);
}

PointCloudVideo<float> load_pcv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  binio::expect_magic(is, kMagic, path);
  PointCloudVideo<float> pcv;
  const std::uint32_t num_frames = binio::get_u32(is, path + " frame count");
  if (num_frames == 0) throw FormatError(path + ": zero frames");
  pcv.label = static_cast<int>(binio::get_u32(is, path + " label"));
  const std::uint32_t id_len = binio::get_u32(is, path + " id length");
  if (id_len > 4096) throw FormatError(path + ": implausible id length");
  pcv.sample_id = binio::get_bytes(is, id_len, path + " sample id");
  pcv.frames.resize(num_frames);
  for (std::uint32_t t = 0; t < num_frames; ++t) {
    const std::uint32_t n = binio::get_u32(is, path + " point count of frame " + std::to_string(t));
    if (n == 0) throw FormatError(path + ": frame " + std::to_string(t) + " is empty");
    FrameCloud<float>& fr = pcv.frames[t];
    fr.frame_index = static_cast<int>(t);
    fr.coords.resize(static_cast<Eigen::Index>(n), 3);
    for (std::uint32_t i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d)
        fr.coords(static_cast<Eigen::Index>(i), d) =
            binio::get_f32(is, path + " coords of frame " + std::to_string(t));
  }
  is.peek();
  if (!is.eof()) throw FormatError(path + ": trailing bytes after last frame");
  return pcv;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["path"] = e.path;
    j["label"] = e.label;
    j["split"] = e.split;
    os << j.dump() << "\n";
  }
  if (!os) throw DataError("write failure on " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    ManifestEntry entry;
    try {
      entry.id = j.at("id").get<std::string>();
      entry.path = j.at("path").get<std::string>();
      entry.label = j.at("label").get<int>();
      entry.split = j.at("split").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": missing manifest field: " + e.what());
    }
    if (entry.split != "train" && entry.split != "test")
      throw FormatError(path + ":" + std::to_string(lineno) + ": split must be train or test");
    out.push_back(std::move(entry));
  }
  return out;
}

std::string resolve_manifest_path(const std::string& manifest_path, const std::string& rel) {
  const std::filesystem::path p(rel);
  if (p.is_absolute()) return rel;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

}  // namespace vg4d
