#include "dvc/residual.hpp"

#include <algorithm>
#include <cmath>

#include "dvc/correct.hpp"
#include "dvc/parallel.hpp"

namespace dvc {

ResidualVolume gray_residual(const Volume& warped, const Volume& def,
                             std::span<const std::uint8_t> valid) {
  if (!(warped.dims() == def.dims())) throw Error("gray_residual: dims mismatch");
  const std::int64_t n = warped.voxel_count();
  if (!valid.empty() && std::int64_t(valid.size()) != n)
    throw Error("gray_residual: mask size mismatch");

  ResidualVolume out;
  out.dims = warped.dims();
  out.r.resize(static_cast<std::size_t>(n));
  out.valid.assign(std::size_t(n), 1);
  if (!valid.empty()) std::copy(valid.begin(), valid.end(), out.valid.begin());

  parallel_for(warped.dims().z, [&](std::int64_t z) {
    const std::int64_t plane = warped.dims().x * warped.dims().y;
    for (std::int64_t i = z * plane; i < (z + 1) * plane; ++i)
      out.r[std::size_t(i)] =
          std::abs(def.data()[std::size_t(i)] - warped.data()[std::size_t(i)]);
  });
  return out;
}

NoiseEstimate estimate_background_noise(const ResidualVolume& residual,
                                        const LabelVolume& warped_labels,
                                        const LabelVolume& def_labels) {
  if (!(residual.dims == warped_labels.dims()) || !(residual.dims == def_labels.dims()))
    throw Error("estimate_background_noise: dims mismatch");

  const std::int64_t n = residual.voxel_count();
  std::array<double, 256> sums{};
  std::array<std::int64_t, 256> counts{};
  // fixed-order accumulation per label; voxel order is the storage order
  for (std::int64_t i = 0; i < n; ++i) {
    if (!residual.valid[std::size_t(i)]) continue;
    const int la = warped_labels.labels()[std::size_t(i)];
    const int lb = def_labels.labels()[std::size_t(i)];
    if (la == 0 || la != lb) continue;
    sums[std::size_t(la)] += double(residual.r[std::size_t(i)]);
    ++counts[std::size_t(la)];
  }

  NoiseEstimate est;
  double total = 0.0;
  for (int k = 1; k < 256; ++k) {
    if (counts[std::size_t(k)] == 0) continue;
    est.component_mean[k] = sums[std::size_t(k)] / double(counts[std::size_t(k)]);
    est.component_count[k] = counts[std::size_t(k)];
    total += sums[std::size_t(k)];
    est.pooled_count += counts[std::size_t(k)];
  }
  if (est.pooled_count == 0)
    throw Error("no overlapping same-label voxels for background noise estimation");
  est.pooled = total / double(est.pooled_count);
  return est;
}

ResidualVolume correct_residual(const ResidualVolume& r, double r0) {
  if (r0 < 0.0) throw ConfigError("background residual mean must be >= 0");
  ResidualVolume out = r;
  for (auto& v : out.r) v = float(double(v) - r0);
  return out;
}

ResidualStats residual_stats(const ResidualVolume& r, double r0) {
  const std::int64_t n = r.voxel_count();
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (r.valid[std::size_t(i)]) ++count;
  if (count == 0) throw Error("residual has no valid voxels");

  const double sum = chunked_sum(
      n, [&](std::int64_t i) { return r.valid[std::size_t(i)] ? double(r.r[std::size_t(i)]) : 0.0; });
  const double sum_abs_corr = chunked_sum(n, [&](std::int64_t i) {
    return r.valid[std::size_t(i)] ? std::abs(double(r.r[std::size_t(i)]) - r0) : 0.0;
  });

  ResidualStats s;
  s.count = count;
  s.mean_r = sum / double(count);
  s.mean_corrected = s.mean_r - r0;
  s.mean_abs_corrected = sum_abs_corr / double(count);
  return s;
}

double accuracy_index(double mean_corrected, double g1, double g2) {
  if (g1 == g2) throw UndefinedContrastError("component gray means coincide");
  return 1.0 - mean_corrected / std::abs(g1 - g2);
}

AccuracyReport residual_report(const Volume& ref, const Volume& def,
                               const DisplacementField& field, const SegmentationSpec& seg,
                               const StrainField& strain, int bins, double fill) {
  if (bins < 1) throw ConfigError("report needs bins >= 1");
  if (!(strain.grid == field.grid)) throw Error("residual_report: strain grid mismatch");

  const DenseField dense = densify(field);
  const WarpedVolume warped = warp_volume(ref, dense, fill);
  const ResidualVolume res = gray_residual(warped.vol, def, warped.valid);

  const LabelVolume labels_w = threshold_segment(warped.vol, seg.ref_intervals);
  const LabelVolume labels_d = threshold_segment(def, seg.def_intervals);

  AccuracyReport rep;
  rep.noise = estimate_background_noise(res, labels_w, labels_d);
  rep.stats = residual_stats(res, rep.noise.pooled);
  rep.g1 = component_mean(def, labels_d, seg.component_a);
  rep.g2 = component_mean(def, labels_d, seg.component_b);
  rep.p = accuracy_index(rep.stats.mean_corrected, rep.g1, rep.g2);

  // per-bin statistics over the equivalent strain interpolated to voxels
  double max_eeq = 0.0;
  for (double e : strain.eeq) max_eeq = std::max(max_eeq, e);
  const double span = std::max(max_eeq, 1e-12);
  const DenseScalar eeq_dense = densify_scalar(strain.grid, strain.eeq);

  const Vec3i d = res.dims;
  const std::int64_t nz = d.z;
  std::vector<std::vector<double>> slice_sum(std::size_t(nz),
                                             std::vector<double>(std::size_t(bins), 0.0));
  std::vector<std::vector<std::int64_t>> slice_cnt(
      std::size_t(nz), std::vector<std::int64_t>(std::size_t(bins), 0));
  parallel_for(nz, [&](std::int64_t z) {
    auto& sums = slice_sum[std::size_t(z)];
    auto& cnts = slice_cnt[std::size_t(z)];
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const std::int64_t i = (z * d.y + y) * d.x + x;
        if (!res.valid[std::size_t(i)]) continue;
        const double e = std::max(0.0, eeq_dense({double(x), double(y), double(z)}));
        std::int64_t b = std::int64_t(std::floor(e / span * double(bins)));
        b = std::clamp<std::int64_t>(b, 0, bins - 1);
        sums[std::size_t(b)] += double(res.r[std::size_t(i)]);
        ++cnts[std::size_t(b)];
      }
  });

  rep.bins.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    std::vector<double> parts(static_cast<std::size_t>(nz));
    std::int64_t cnt = 0;
    for (std::int64_t z = 0; z < nz; ++z) {
      parts[std::size_t(z)] = slice_sum[std::size_t(z)][std::size_t(b)];
      cnt += slice_cnt[std::size_t(z)][std::size_t(b)];
    }
    auto& bs = rep.bins[std::size_t(b)];
    bs.lo = span * double(b) / double(bins);
    bs.hi = span * double(b + 1) / double(bins);
    bs.count = cnt;
    if (cnt > 0) {
      const double mean_r = pairwise_sum(parts) / double(cnt);
      bs.mean_r_corrected = mean_r - rep.noise.pooled;
      bs.p = accuracy_index(bs.mean_r_corrected, rep.g1, rep.g2);
    } else {
      bs.mean_r_corrected = std::numeric_limits<double>::quiet_NaN();
      bs.p = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return rep;
}

}  // namespace dvc
