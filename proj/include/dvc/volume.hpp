#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dvc/errors.hpp"
#include "dvc/vec3.hpp"

namespace dvc {

enum class Dtype : std::uint8_t { U8, U16, F32 };

const char* dtype_name(Dtype dt);
Dtype dtype_from_name(const std::string& name);
std::int64_t dtype_bytes(Dtype dt);

// 3D scalar grayscale image. Voxels are stored x-fastest, then y, then z.
// Gray values are kept in native units (never rescaled); arithmetic on them
// is done in double precision regardless of the storage dtype.
// Immutable after construction.
class Volume {
 public:
  Volume() = default;
  Volume(Vec3i dims, Dtype dtype, std::vector<float> data, Vec3d spacing = {1.0, 1.0, 1.0});

  static Volume zeros(Vec3i dims, Dtype dtype = Dtype::F32);

  Vec3i dims() const { return dims_; }
  Dtype dtype() const { return dtype_; }
  Vec3d spacing() const { return spacing_; }
  std::int64_t voxel_count() const { return dims_.x * dims_.y * dims_.z; }

  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return (z * dims_.y + y) * dims_.x + x;
  }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[std::size_t(index(x, y, z))];
  }
  bool contains(Vec3i p) const {
    return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < dims_.x && p.y < dims_.y && p.z < dims_.z;
  }

  std::span<const float> data() const { return data_; }

 private:
  Vec3i dims_{0, 0, 0};
  Dtype dtype_ = Dtype::F32;
  Vec3d spacing_{1.0, 1.0, 1.0};
  std::vector<float> data_;
};

// Per-voxel component ids from multi-threshold segmentation.
// 0 = excluded/background, 1..K = components. Same layout as Volume.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Vec3i dims, std::vector<std::uint8_t> labels);

  Vec3i dims() const { return dims_; }
  std::int64_t voxel_count() const { return dims_.x * dims_.y * dims_.z; }
  std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return labels_[std::size_t((z * dims_.y + y) * dims_.x + x)];
  }
  std::span<const std::uint8_t> labels() const { return labels_; }

 private:
  Vec3i dims_{0, 0, 0};
  std::vector<std::uint8_t> labels_;
};

// Half-open gray interval [lo, hi) mapped to one component label.
struct GrayInterval {
  double lo = 0.0;
  double hi = 0.0;
  int label = 0;
};

// ---- File format -----------------------------------------------------------
// Raw little-endian payload at <name>.vol plus a JSON sidecar <name>.vol.json:
//   {"dims":[nx,ny,nz],"dtype":"u8|u16|f32","spacing":[sx,sy,sz]}

struct VolumeHeader {
  Vec3i dims{0, 0, 0};
  Dtype dtype = Dtype::F32;
  Vec3d spacing{1.0, 1.0, 1.0};
};

VolumeHeader parse_volume_header(const std::string& json_text);
std::string volume_header_json(const VolumeHeader& h);
std::int64_t expected_payload_bytes(const VolumeHeader& h);

Volume load_volume(const std::filesystem::path& payload_path);
void save_volume(const Volume& vol, const std::filesystem::path& payload_path);

// Labels stored as a u8 volume in the same format.
LabelVolume load_labels(const std::filesystem::path& payload_path);
void save_labels(const LabelVolume& labels, const std::filesystem::path& payload_path);

// ---- Sampling --------------------------------------------------------------

enum class SampleMode : std::uint8_t { Trilinear, Tricubic };

// Valid sampling region: trilinear covers [0, n-1] per axis; tricubic
// (Catmull-Rom) needs a one-voxel margin, [1, n-2].
bool sample_domain_contains(const Volume& vol, Vec3d p, SampleMode mode);

// Interpolated gray at a continuous coordinate. Reproduces stored voxel
// values exactly at integer coordinates. Throws DomainError outside the
// mode's valid region.
double sample(const Volume& vol, Vec3d p, SampleMode mode);

// Central-difference gray gradient at an integer coordinate, at least one
// voxel inside the domain. Units: gray per voxel.
Vec3d gradient(const Volume& vol, Vec3i p);

// ---- Statistics and segmentation -------------------------------------------

// Uniform bins over the dtype range (u8: [0,256), u16: [0,65536); f32: the
// data's [min, max], last bin inclusive). Counts sum to the voxel count.
std::vector<std::int64_t> histogram(const Volume& vol, int bins);
std::vector<double> histogram_edges(const Volume& vol, int bins);

// Voxels with gray in [lo, hi) get that interval's label, others 0.
// Intervals must be pairwise disjoint.
LabelVolume threshold_segment(const Volume& vol, std::span<const GrayInterval> intervals);

// Arithmetic mean gray over voxels carrying label k. Errors if the component
// is empty.
double component_mean(const Volume& vol, const LabelVolume& labels, int k);

}  // namespace dvc
