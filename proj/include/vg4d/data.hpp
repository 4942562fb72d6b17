// SPDX-License-Identifier: Apache-2.0
//
// Point-cloud-video containers, depth back-projection, frame sampling, point
// budgeting, and the seeded synthetic motion dataset.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vg4d/common.hpp"
#include "vg4d/geom.hpp"

namespace vg4d {

template <typename Scalar>
struct PointCloudVideo {
  Video<Scalar> frames;
  std::string sample_id;
  int label = 0;
};

struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // row-major meters, 0 marks an invalid pixel
  double fx = 0, fy = 0, cx = 0, cy = 0;
};

struct SynthSpec {
  int num_classes = 8;
  int samples_per_class = 1;
  int frames_per_video = 8;
  int points_per_frame = 64;
  double noise_sigma = 0.0;
  std::uint64_t rng_seed = 0;
};

enum class SampleMode { kTrain, kTest };

/// Back-projects valid pixels through the pinhole model:
/// (x,y,z) = ((u-cx)z/fx, (v-cy)z/fy, z).
template <typename Scalar>
FrameCloud<Scalar> depth_to_points(const DepthFrame& frame) {
  if (frame.width <= 0 || frame.height <= 0 ||
      static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height) != frame.depth.size())
    throw ArgumentError("depth_to_points: inconsistent frame dimensions");
  if (!(frame.fx > 0) || !(frame.fy > 0)) throw ArgumentError("depth_to_points: invalid intrinsics");
  std::vector<Scalar> pts;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      const double z = frame.depth[static_cast<std::size_t>(v) * static_cast<std::size_t>(frame.width) +
                                   static_cast<std::size_t>(u)];
      if (!(z >= 0) || !std::isfinite(z)) throw ArgumentError("depth_to_points: negative or non-finite depth");
      if (z == 0) continue;
      pts.push_back(static_cast<Scalar>((u - frame.cx) * z / frame.fx));
      pts.push_back(static_cast<Scalar>((v - frame.cy) * z / frame.fy));
      pts.push_back(static_cast<Scalar>(z));
    }
  }
  if (pts.empty()) throw DegenerateInputError("depth_to_points: no valid pixels");
  FrameCloud<Scalar> out;
  out.coords = Eigen::Map<const Cloud<Scalar>>(pts.data(), static_cast<Eigen::Index>(pts.size() / 3), 3);
  return out;
}

/// Exactly points_per_frame points: uniform subsample without replacement
/// when the cloud is larger, resample with replacement when smaller, and the
/// unchanged cloud on an exact fit (no rng reads).
template <typename Scalar>
FrameCloud<Scalar> budget_points(const FrameCloud<Scalar>& frame, int points_per_frame, Rng& rng) {
  check_cloud(frame.coords, "budget_points");
  if (points_per_frame < 1) throw ArgumentError("budget_points: budget must be >= 1");
  const int n = static_cast<int>(frame.coords.rows());
  FrameCloud<Scalar> out;
  out.frame_index = frame.frame_index;
  if (n == points_per_frame) {
    out.coords = frame.coords;
    return out;
  }
  out.coords.resize(points_per_frame, 3);
  if (n > points_per_frame) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    for (int i = 0; i < points_per_frame; ++i) out.coords.row(i) = frame.coords.row(idx[static_cast<std::size_t>(i)]);
  } else {
    for (int i = 0; i < points_per_frame; ++i)
      out.coords.row(i) = frame.coords.row(static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n))));
  }
  return out;
}

/// Splits the video into T contiguous segments with sizes differing by at
/// most one; train mode picks uniformly inside each segment, test mode takes
/// seg_start + floor(seg_len/2). Test mode reads no randomness.
inline std::vector<int> segment_sample(int total_frames, int num_segments, SampleMode mode, Rng& rng) {
  if (num_segments < 1 || total_frames < num_segments)
    throw ArgumentError("segment_sample: need total_frames >= T >= 1, got total=" +
                        std::to_string(total_frames) + " T=" + std::to_string(num_segments));
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(num_segments));
  for (int s = 0; s < num_segments; ++s) {
    const int start = static_cast<int>((static_cast<long long>(s) * total_frames) / num_segments);
    const int end = static_cast<int>((static_cast<long long>(s + 1) * total_frames) / num_segments);
    const int len = end - start;
    if (mode == SampleMode::kTest) {
      out.push_back(start + len / 2);
    } else {
      out.push_back(start + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(len))));
    }
  }
  return out;
}

inline std::vector<int> strided_clip(int total_frames, int clip_len, int stride, int start) {
  if (clip_len < 1 || stride < 1 || start < 0)
    throw ArgumentError("strided_clip: clip_len and stride must be >= 1, start >= 0");
  const long long last = static_cast<long long>(start) + static_cast<long long>(clip_len - 1) * stride;
  if (last >= total_frames)
    throw ArgumentError("strided_clip: clip [start=" + std::to_string(start) + ", len=" +
                        std::to_string(clip_len) + ", stride=" + std::to_string(stride) +
                        "] exceeds " + std::to_string(total_frames) + " frames");
  std::vector<int> out(static_cast<std::size_t>(clip_len));
  for (int i = 0; i < clip_len; ++i) out[static_cast<std::size_t>(i)] = start + i * stride;
  return out;
}

inline constexpr int kMotionBankSize = 8;
inline constexpr double kTranslateStep = 0.05;  // meters per frame
inline constexpr double kRotateStep = 0.1;      // radians per frame
inline constexpr double kScaleStep = 0.05;      // fractional growth per frame

inline const char* motion_class_name(int cls) {
  static const char* names[kMotionBankSize] = {"translate+x", "translate-x", "translate+y", "translate-y",
                                               "rotate-cw",   "rotate-ccw",  "expand",      "contract"};
  if (cls < 0 || cls >= kMotionBankSize) throw ArgumentError("motion_class_name: class out of range");
  return names[cls];
}

/// Position of a base point at frame t under motion class cls. Rotations are
/// about the world z axis, scalings about the origin.
template <typename Scalar>
RowVec3<Scalar> apply_motion(int cls, int t, const RowVec3<Scalar>& p) {
  const double ft = static_cast<double>(t);
  RowVec3<Scalar> q = p;
  switch (cls) {
    case 0: q(0) += Scalar(kTranslateStep * ft); break;
    case 1: q(0) -= Scalar(kTranslateStep * ft); break;
    case 2: q(1) += Scalar(kTranslateStep * ft); break;
    case 3: q(1) -= Scalar(kTranslateStep * ft); break;
    case 4:
    case 5: {
      const double a = (cls == 4 ? -1.0 : 1.0) * kRotateStep * ft;
      const Scalar ca = Scalar(std::cos(a)), sa = Scalar(std::sin(a));
      const Scalar x = p(0), y = p(1);
      q(0) = ca * x - sa * y;
      q(1) = sa * x + ca * y;
      break;
    }
    case 6:
    case 7: {
      const double s = std::pow(cls == 6 ? 1.0 + kScaleStep : 1.0 - kScaleStep, ft);
      q = p * Scalar(s);
      break;
    }
    default:
      throw ArgumentError("apply_motion: class " + std::to_string(cls) + " outside motion bank");
  }
  return q;
}

/// Deterministic synthetic dataset: each sample is a random blob moved by its
/// class motion with per-point Gaussian noise. The blob center keeps
/// ||c_xy|| >= 0.1 so rotation and scaling displace the centroid measurably.
template <typename Scalar>
std::vector<PointCloudVideo<Scalar>> generate_synthetic(const SynthSpec& spec) {
  if (spec.num_classes < 1 || spec.num_classes > kMotionBankSize)
    throw ArgumentError("generate_synthetic: num_classes must be in [1," +
                        std::to_string(kMotionBankSize) + "]");
  if (spec.samples_per_class < 1 || spec.frames_per_video < 1 || spec.points_per_frame < 1)
    throw ArgumentError("generate_synthetic: all counts must be >= 1");
  if (spec.noise_sigma < 0) throw ArgumentError("generate_synthetic: noise_sigma must be >= 0");

  std::vector<PointCloudVideo<Scalar>> out;
  out.reserve(static_cast<std::size_t>(spec.num_classes) * static_cast<std::size_t>(spec.samples_per_class));
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      const std::uint64_t stream =
          static_cast<std::uint64_t>(cls) * static_cast<std::uint64_t>(spec.samples_per_class) +
          static_cast<std::uint64_t>(s);
      Rng rng(Rng::mix(spec.rng_seed, stream));

      RowVec3<double> center;
      do {
        center(0) = rng.uniform() * 0.8 - 0.4;
        center(1) = rng.uniform() * 0.8 - 0.4;
        center(2) = rng.uniform() * 0.8 - 0.4;
      } while (std::sqrt(center(0) * center(0) + center(1) * center(1)) < 0.1);

      // Anisotropic extents give every blob a visible orientation, so motion
      // direction is recoverable from shape dynamics and not only from the
      // centroid track.
      RowVec3<double> half;
      for (int d = 0; d < 3; ++d) half(d) = 0.05 + rng.uniform() * 0.2;
      Cloud<double> base(spec.points_per_frame, 3);
      for (int i = 0; i < spec.points_per_frame; ++i)
        for (int d = 0; d < 3; ++d)
          base(i, d) = center(d) + (rng.uniform() * 2.0 - 1.0) * half(d);

      PointCloudVideo<Scalar> pcv;
      pcv.label = cls;
      pcv.sample_id = std::string(motion_class_name(cls)) + "_" + std::to_string(s);
      pcv.frames.resize(static_cast<std::size_t>(spec.frames_per_video));
      for (int t = 0; t < spec.frames_per_video; ++t) {
        FrameCloud<Scalar>& fr = pcv.frames[static_cast<std::size_t>(t)];
        fr.frame_index = t;
        fr.coords.resize(spec.points_per_frame, 3);
        for (int i = 0; i < spec.points_per_frame; ++i) {
          const RowVec3<double> moved = apply_motion<double>(cls, t, base.row(i));
          for (int d = 0; d < 3; ++d)
            fr.coords(i, d) = static_cast<Scalar>(moved(d) + spec.noise_sigma * rng.gaussian());
        }
      }
      out.push_back(std::move(pcv));
    }
  }
  return out;
}

// --- PCVD container format and dataset manifest (compiled in data_io.cpp) ---

void save_pcv(const std::string& path, const PointCloudVideo<float>& pcv);
PointCloudVideo<float> load_pcv(const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  int label = 0;
  std::string split;  // "train" or "test"
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Joins the manifest's directory with a relative sample path.
std::string resolve_manifest_path(const std::string& manifest_path, const std::string& rel);

}  // namespace vg4d
