#pragma once

#include <map>
#include <optional>
#include <vector>

#include "dvc/field.hpp"
#include "dvc/field_ops.hpp"
#include "dvc/volume.hpp"

namespace dvc {

// Per-voxel absolute gray difference with a validity mask excluding
// fill/out-of-domain voxels from all downstream statistics.
struct ResidualVolume {
  Vec3i dims{0, 0, 0};
  std::vector<float> r;
  std::vector<std::uint8_t> valid;

  std::int64_t voxel_count() const { return dims.x * dims.y * dims.z; }
};

struct NoiseEstimate {
  // per-component mean residual over voxels whose label agrees between the
  // warped-reference and deformed-state segmentations
  std::map<int, double> component_mean;
  std::map<int, std::int64_t> component_count;
  double pooled = 0.0;  // voxel-count-weighted mean over components
  std::int64_t pooled_count = 0;
};

struct ResidualStats {
  double mean_r = 0.0;            // mean |def - warped|
  double mean_corrected = 0.0;    // mean_r - r0 (Eq. 1 mean)
  double mean_abs_corrected = 0.0;
  std::int64_t count = 0;
};

struct BinStat {
  double lo = 0.0;
  double hi = 0.0;
  double mean_r_corrected = 0.0;
  double p = 0.0;
  std::int64_t count = 0;
};

struct AccuracyReport {
  double g1 = 0.0;  // component-one mean gray of the deformed volume
  double g2 = 0.0;
  NoiseEstimate noise;
  ResidualStats stats;
  double p = 0.0;  // Eq. 2 on the global mean corrected residual
  std::vector<BinStat> bins;
};

ResidualVolume gray_residual(const Volume& warped, const Volume& def,
                             std::span<const std::uint8_t> valid);

// Fig. 4: mean residual per component over the same-label overlap of the two
// segmentations, pooled by voxel count.
NoiseEstimate estimate_background_noise(const ResidualVolume& residual,
                                        const LabelVolume& warped_labels,
                                        const LabelVolume& def_labels);

// Eq. 1: r' = r - r0. Values may go negative.
ResidualVolume correct_residual(const ResidualVolume& r, double r0);

ResidualStats residual_stats(const ResidualVolume& r, double r0);

// Eq. 2: p = 1 - r' / |g1 - g2|. Errors when g1 == g2.
double accuracy_index(double mean_corrected, double g1, double g2);

// Segmentation used by reports and the correction loop: state-specific gray
// intervals plus the two primary component labels entering Eq. 2.
struct SegmentationSpec {
  std::vector<GrayInterval> ref_intervals;
  std::vector<GrayInterval> def_intervals;
  int component_a = 1;
  int component_b = 2;
};

// Warps ref by the field, computes the residual, the background-noise
// estimate, the corrected residual, the global accuracy index, and per-
// equivalent-strain-bin statistics (uniform bins over [0, max eeq]).
AccuracyReport residual_report(const Volume& ref, const Volume& def,
                               const DisplacementField& field, const SegmentationSpec& seg,
                               const StrainField& strain, int bins, double fill = 0.0);

}  // namespace dvc
