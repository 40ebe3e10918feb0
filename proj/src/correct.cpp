#include "dvc/correct.hpp"

#include <algorithm>
#include <cmath>

#include "dvc/interp.hpp"
#include "dvc/parallel.hpp"

namespace dvc {

WarpedVolume warp_volume(const Volume& ref, const DenseField& dense, double fill) {
  const Vec3i d = ref.dims();
  WarpedVolume out;
  out.vol = Volume::zeros(d, Dtype::F32);
  out.valid.assign(std::size_t(ref.voxel_count()), 0);
  std::vector<float> data(static_cast<std::size_t>(ref.voxel_count()));

  parallel_for(d.z, [&](std::int64_t z) {
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const std::int64_t i = (z * d.y + y) * d.x + x;
        const Vec3d p{double(x), double(y), double(z)};
        const Vec3d src = p - dense(p);
        if (sample_domain_contains(ref, src, SampleMode::Tricubic)) {
          data[std::size_t(i)] = float(tricubic_unchecked(ref, src));
          out.valid[std::size_t(i)] = 1;
        } else {
          data[std::size_t(i)] = float(fill);
        }
      }
  });
  out.vol = Volume(d, Dtype::F32, std::move(data), ref.spacing());
  return out;
}

FieldEvaluation evaluate_field_residual(const Volume& ref, const Volume& def,
                                        const DisplacementField& field,
                                        const SegmentationSpec& seg, double fill) {
  const DenseField dense = densify(field);
  const WarpedVolume warped = warp_volume(ref, dense, fill);
  const ResidualVolume res = gray_residual(warped.vol, def, warped.valid);
  const LabelVolume labels_w = threshold_segment(warped.vol, seg.ref_intervals);
  const LabelVolume labels_d = threshold_segment(def, seg.def_intervals);

  FieldEvaluation ev;
  ev.noise = estimate_background_noise(res, labels_w, labels_d);
  ev.stats = residual_stats(res, ev.noise.pooled);
  ev.g1 = component_mean(def, labels_d, seg.component_a);
  ev.g2 = component_mean(def, labels_d, seg.component_b);
  ev.p = accuracy_index(ev.stats.mean_corrected, ev.g1, ev.g2);
  return ev;
}

namespace {

std::int64_t count_low_correlation(const DisplacementField& f) {
  std::int64_t n = 0;
  for (auto s : f.status)
    if (s == NodeStatus::LowCorrelation) ++n;
  return n;
}

DisplacementField repaired(const DisplacementField& f, const CorrectionSettings& s) {
  const auto flags = detect_outliers(f, s.outlier_eps0, s.outlier_thresh);
  return repair_field(f, flags);
}

}  // namespace

std::pair<DisplacementField, CorrectionReport> self_correct(
    const Volume& ref, const Volume& def, const DisplacementField& field,
    const DvcParams& params, const SegmentationSpec& seg, const CorrectionSettings& settings) {
  params.validate();
  if (settings.max_passes < 1) throw ConfigError("max_passes must be >= 1");
  field.validate();

  CorrectionReport report;
  report.params_echo = params;

  DisplacementField current = field;
  std::optional<FieldEvaluation> eval_cur;
  DisplacementField best;
  double best_mean_abs = 0.0;
  int best_pass = 0;

  for (int pass = 1; pass <= settings.max_passes; ++pass) {
    // (b) anomaly detection and repair of the field entering this pass
    const DisplacementField current_rep = repaired(current, settings);
    if (!eval_cur) {
      eval_cur = evaluate_field_residual(ref, def, current_rep, seg, settings.fill);
      best = current_rep;
      best_mean_abs = eval_cur->stats.mean_abs_corrected;
    }

    CorrectionPass rec;
    rec.before = eval_cur->stats;
    rec.p_before = eval_cur->p;
    rec.low_correlation_before = count_low_correlation(current);

    // (c) densify, (d) warp the reference through the current field
    const DenseField dense = densify(current_rep);
    const WarpedVolume gprime = warp_volume(ref, dense, settings.fill);
    if (settings.on_warped) settings.on_warped(pass, gprime);

    // (e) re-correlate with the SAME parameters and zero predictor
    const DisplacementField dd = run_dvc(gprime.vol, def, current.grid, params, nullptr);
    rec.low_correlation_after = count_low_correlation(dd);

    // (f) repair the increment and compose D' = D + dD
    const DisplacementField dd_rep = repaired(dd, settings);
    rec.mean_abs_increment =
        chunked_sum(std::int64_t(dd_rep.disp.size()),
                    [&](std::int64_t i) { return dd_rep.disp[std::size_t(i)].norm(); }) /
        double(dd_rep.disp.size());
    DisplacementField next = compose(current_rep, dd_rep);

    const FieldEvaluation eval_next = evaluate_field_residual(ref, def, next, seg, settings.fill);
    rec.after = eval_next.stats;
    rec.p_after = eval_next.p;
    report.passes.push_back(rec);

    const double prev_mean_abs = eval_cur->stats.mean_abs_corrected;
    const double gain = prev_mean_abs > 0.0
                            ? (prev_mean_abs - eval_next.stats.mean_abs_corrected) / prev_mean_abs
                            : 0.0;

    if (eval_next.stats.mean_abs_corrected < best_mean_abs) {
      best = next;
      best_mean_abs = eval_next.stats.mean_abs_corrected;
      best_pass = pass;
    }

    current = std::move(next);
    eval_cur = eval_next;

    if (gain < settings.min_gain) break;
  }

  report.best_pass = best_pass;
  return {std::move(best), std::move(report)};
}

}  // namespace dvc
