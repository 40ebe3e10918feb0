#pragma once

#include <array>
#include <optional>
#include <span>

#include "dvc/field.hpp"
#include "dvc/volume.hpp"

namespace dvc {

// Cubic subvolume of (2*half_size+1)^3 voxels centered on a point of interest.
struct PoiSpec {
  Vec3i center{0, 0, 0};
  int half_size = 70;
};

// First-order shape-function parameters:
// (u, ux, uy, uz, v, vx, vy, vz, w, wx, wy, wz).
struct WarpParams {
  std::array<double, 12> p{};

  static WarpParams translation(Vec3d t) {
    WarpParams w;
    w.p[0] = t.x;
    w.p[4] = t.y;
    w.p[8] = t.z;
    return w;
  }
  Vec3d displacement() const { return {p[0], p[4], p[8]}; }
  bool finite() const {
    for (double v : p)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

struct MatchResult {
  WarpParams warp;
  double zncc = -1.0;
  int iterations = 0;
  NodeStatus status = NodeStatus::OutOfBounds;
};

struct DvcParams {
  std::int64_t grid_step = 10;
  int subvolume_half_size = 70;
  int search_radius = 5;
  int max_iterations = 30;
  double convergence_tol = 1e-3;
  double zncc_accept = 0.8;

  void validate() const;
};

// Zero-mean normalized cross-correlation of two equally sized sample sets.
double zncc(std::span<const double> a, std::span<const double> b);

struct IntegerSearchResult {
  Vec3i offset{0, 0, 0};
  double zncc = -1.0;
};

// Exhaustive ZNCC argmax over integer offsets in init + [-radius, radius]^3.
// Candidates whose subvolume leaves the deformed volume are skipped; ties are
// broken toward the lexicographically smallest (dz, dy, dx) offset.
IntegerSearchResult integer_search(const Volume& ref, const Volume& def, const PoiSpec& poi,
                                   int radius, Vec3i init);

// First-order inverse-compositional Gauss-Newton refinement of a subvolume
// match, minimizing the zero-mean-normalized SSD (equivalently maximizing
// ZNCC). Deformed-volume sampling is tricubic; reference gradients are central
// differences. Convergence when the displacement-equivalent update norm
// (translations plus gradient terms scaled by half_size) drops below
// params.convergence_tol.
MatchResult icgn_refine(const Volume& ref, const Volume& def, const PoiSpec& poi,
                        const WarpParams& init, const DvcParams& params);

// Optional per-node seed for run_dvc's integer search.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Vec3d displacement_at(Vec3d ref_pos) const = 0;
};

// Grid-level driver: per node, integer search seeded by the predictor (rounded)
// or zero, then IC-GN refinement. Pure per-node work; output is independent of
// the worker count.
DisplacementField run_dvc(const Volume& ref, const Volume& def, const GridSpec& grid,
                          const DvcParams& params, const Predictor* predictor = nullptr);

// Largest centered grid whose subvolumes (plus gradient margin and search
// radius) stay inside dims.
GridSpec make_grid(Vec3i dims, const DvcParams& params);

}  // namespace dvc
