#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dvc/correlate.hpp"
#include "dvc/field_ops.hpp"
#include "dvc/residual.hpp"
#include "dvc/volume.hpp"

namespace dvc {

struct WarpedVolume {
  Volume vol;                       // f32
  std::vector<std::uint8_t> valid;  // 0 where the source sample fell outside
};

// Reverse-mapped warp: out(x) = ref sampled tricubically at x - dense(x).
// Out-of-domain source positions receive `fill` and are masked invalid.
WarpedVolume warp_volume(const Volume& ref, const DenseField& dense, double fill);

struct CorrectionSettings {
  int max_passes = 3;
  double min_gain = 0.02;  // relative improvement of mean |r'| to continue
  double fill = 0.0;
  double outlier_eps0 = 0.1;
  double outlier_thresh = 2.0;
  // Called with each pass's warped reference G' (for --keep-intermediate).
  std::function<void(int pass, const WarpedVolume&)> on_warped;
};

struct CorrectionPass {
  double mean_abs_increment = 0.0;  // mean |dD| over nodes
  ResidualStats before;
  ResidualStats after;
  double p_before = 0.0;
  double p_after = 0.0;
  std::int64_t low_correlation_before = 0;  // in the field entering the pass
  std::int64_t low_correlation_after = 0;   // in the re-correlation field dD
};

struct CorrectionReport {
  std::vector<CorrectionPass> passes;
  int best_pass = 0;  // 0 = the (repaired) input field won
  DvcParams params_echo;
};

// Image-matching self-correction: per pass, repair / densify / warp the
// reference through the current field, re-run DVC against the deformed volume
// with the SAME DvcParams and zero predictor, and compose D' = D + dD. Stops
// when mean |r'| stops improving by min_gain or max_passes is reached;
// returns the best-residual field.
std::pair<DisplacementField, CorrectionReport> self_correct(
    const Volume& ref, const Volume& def, const DisplacementField& field,
    const DvcParams& params, const SegmentationSpec& seg, const CorrectionSettings& settings);

// Residual summary of one field against the pair (shared by tests, the CLI
// and the correction loop). The field must be densifiable.
struct FieldEvaluation {
  ResidualStats stats;
  NoiseEstimate noise;
  double g1 = 0.0;
  double g2 = 0.0;
  double p = 0.0;
};

FieldEvaluation evaluate_field_residual(const Volume& ref, const Volume& def,
                                        const DisplacementField& field,
                                        const SegmentationSpec& seg, double fill = 0.0);

}  // namespace dvc
