#pragma once

#include <cstdint>
#include <string>
#include <array>
#include <vector>

#include "dvc/errors.hpp"
#include "dvc/vec3.hpp"

namespace dvc {

// Regular grid of points of interest in reference-volume voxel coordinates.
struct GridSpec {
  Vec3i origin{0, 0, 0};
  std::int64_t step = 10;
  Vec3i counts{0, 0, 0};

  std::int64_t node_count() const { return counts.x * counts.y * counts.z; }
  std::int64_t index(std::int64_t ix, std::int64_t iy, std::int64_t iz) const {
    return (iz * counts.y + iy) * counts.x + ix;
  }
  Vec3i node(std::int64_t ix, std::int64_t iy, std::int64_t iz) const {
    return {origin.x + ix * step, origin.y + iy * step, origin.z + iz * step};
  }
  Vec3i node_index(std::int64_t flat) const {
    const std::int64_t iz = flat / (counts.x * counts.y);
    const std::int64_t r = flat % (counts.x * counts.y);
    return {r % counts.x, r / counts.x, iz};
  }
  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.origin == b.origin && a.step == b.step && a.counts == b.counts;
  }
};

enum class NodeStatus : std::uint8_t {
  Converged,
  IntegerOnly,
  Diverged,
  OutOfBounds,
  LowCorrelation,
  Repaired,
};

const char* node_status_name(NodeStatus s);
NodeStatus node_status_from_name(const std::string& name);

// Larger = better measurement quality; compose keeps the weaker of two.
int node_status_strength(NodeStatus s);

inline bool node_usable(NodeStatus s) {
  return s == NodeStatus::Converged || s == NodeStatus::Repaired;
}

// Grid of displacement vectors with per-node match quality and status.
struct DisplacementField {
  GridSpec grid;
  std::vector<Vec3d> disp;
  std::vector<double> zncc;
  std::vector<NodeStatus> status;
  std::vector<int> iterations;

  static DisplacementField zeros(const GridSpec& grid);
  void validate() const;
};

// Small-strain tensor per node; eeq is the equivalent (octahedral) strain.
struct StrainField {
  GridSpec grid;
  // per node: ex, ey, ez, exy, eyz, ezx
  std::vector<std::array<double, 6>> strain;
  std::vector<double> eeq;
};

}  // namespace dvc
