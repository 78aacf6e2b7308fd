#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "a4g/tensor.hpp"

namespace a4g {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Binary tensor container (.a4gt): magic "A4GT", u16 LE version = 1,
// u16 LE ndim, ndim x u32 LE dims, then row-major f64 LE payload.
// Write/read round trips are bit-exact.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Per-frame patch-feature block produced by encoders.
struct FeatureMap {
  int64_t frames = 0;
  int64_t grid_h = 0;
  int64_t grid_w = 0;
  int64_t channels = 0;
  Tensor values;  // [T, h, w, c]

  static FeatureMap from_tensor(Tensor t);
  /// All patch tokens pooled over frames, [T*h*w, c], frame-major row-major.
  Tensor tokens() const;
};

enum class EncoderKind { Lowpass, Highpass, Projection };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string to_string(EncoderKind k);

/// Deterministic synthetic feature extractor. Applied frame-wise with no
/// cross-frame state; a pure function of (seed, input).
struct OracleEncoder {
  EncoderKind kind = EncoderKind::Projection;
  uint64_t seed = 0;
  int64_t out_channels = 8;
  int64_t stride = 2;
};

FeatureMap encode(const OracleEncoder& enc, const Tensor& clip /* [T,H,W,C] */);

/// Rows orthonormal when out <= in, columns orthonormal otherwise;
/// deterministic in seed. Shared by the oracle encoders.
Tensor orthonormal_projection(uint64_t seed, int64_t out_dim, int64_t in_dim);

enum class MotionKind { Static, Linear, ClassConditional };

MotionKind motion_kind_from_string(const std::string& s);
std::string to_string(MotionKind k);

struct SyntheticDatasetConfig {
  uint64_t seed = 0;
  int64_t n_clips = 8;
  int64_t frames = 4;
  int64_t height = 8;
  int64_t width = 8;
  int64_t channels = 4;
  MotionKind motion = MotionKind::Linear;
  int64_t num_classes = 0;  // required >= 1 for ClassConditional
  double blob_sigma = 1.2;
  double blob_amplitude = 2.0;
  int64_t speed = 1;  // integer pixels per frame so motion is argmax-locatable
};

struct SyntheticClip {
  Tensor video;  // [T, H, W, C]
  int class_id = 0;
};

std::vector<SyntheticClip> make_synthetic_dataset(const SyntheticDatasetConfig& cfg);

/// Mean over the spatial grid per frame: [T, c]. Used as the clip-level
/// embedding series for evaluation protocols.
Tensor framewise_mean_embedding(const FeatureMap& fm);

// ---- manifests (JSON documents listing tensor files) ----

struct ManifestItem {
  std::string path;  // relative to the manifest's directory
  int class_id = 0;
  int seed_index = -1;  // set for generated clips
};

struct Manifest {
  std::vector<ManifestItem> items;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

/// Writes clips + manifest.json into `dir`; returns the manifest.
Manifest write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticClip>& clips);

}  // namespace a4g
