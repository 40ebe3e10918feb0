#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "dvc/correlate.hpp"
#include "dvc/field.hpp"

namespace dvc {

// Normalized-median test per displacement component over the 26-neighborhood
// (clipped at grid boundaries). Nodes whose status is not Converged/Repaired
// are flagged unconditionally and excluded from their neighbors' statistics.
std::vector<std::uint8_t> detect_outliers(const DisplacementField& field, double eps0,
                                          double thresh);

// Replaces each flagged node by the component-wise median of its unflagged
// 26-neighbors; nodes with no unflagged neighbor are filled in later passes
// from already-repaired values (breadth-first from the valid region).
// Repaired nodes get status Repaired; unflagged nodes are returned unchanged.
DisplacementField repair_field(const DisplacementField& field,
                               std::span<const std::uint8_t> flags);

// Interpolating cubic spline on a regular scalar grid (not-a-knot ends),
// evaluated in grid-index coordinates; queries are clamped to the grid
// support, giving constant extrapolation beyond the last node.
class CubicSplineGrid3 {
 public:
  CubicSplineGrid3(Vec3i counts, std::span<const double> values);

  double operator()(Vec3d grid_pos) const;
  Vec3i counts() const { return counts_; }

 private:
  Vec3i counts_{0, 0, 0};
  std::vector<double> coeff_;  // (nx+2) * (ny+2) * (nz+2), B-spline basis
};

// Dense displacement sampler: continuous voxel coordinate -> (u, v, w).
class DenseField : public Predictor {
 public:
  DenseField(GridSpec grid, CubicSplineGrid3 u, CubicSplineGrid3 v, CubicSplineGrid3 w);

  Vec3d operator()(Vec3d voxel_pos) const;
  Vec3d displacement_at(Vec3d ref_pos) const override { return (*this)(ref_pos); }
  const GridSpec& grid() const { return grid_; }

 private:
  GridSpec grid_;
  CubicSplineGrid3 u_, v_, w_;
};

// Cubic-spline interpolation of each component; exact at grid nodes. Requires
// at least 4 nodes per axis and every node Converged or Repaired.
DenseField densify(const DisplacementField& field);

// Scalar counterpart used for per-voxel equivalent-strain lookups.
class DenseScalar {
 public:
  DenseScalar(GridSpec grid, CubicSplineGrid3 s);
  double operator()(Vec3d voxel_pos) const;

 private:
  GridSpec grid_;
  CubicSplineGrid3 s_;
};

DenseScalar densify_scalar(const GridSpec& grid, std::span<const double> node_values);

// D'(x) = D(x) + dDdense(x + D(x)) on the shared grid; node status becomes the
// weaker of the two sources.
DisplacementField compose(const DisplacementField& total, const DisplacementField& increment);

// Left fold of compose: total state-1 -> state-k field from adjacent-state
// increments.
DisplacementField accumulate(std::span<const DisplacementField> increments);

// Windowed least-squares displacement gradient (voxel/voxel) and small-strain
// tensor per node; window is a node radius, neighborhoods clip at boundaries.
StrainField strain_from_field(const DisplacementField& field, int window);

// Equivalent (octahedral) strain from the 6 tensor components
// (ex, ey, ez, exy, eyz, ezx).
double equivalent_strain(const std::array<double, 6>& e);

}  // namespace dvc
