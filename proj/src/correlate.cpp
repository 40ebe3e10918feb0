#include "dvc/correlate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dvc/interp.hpp"
#include "dvc/parallel.hpp"

namespace dvc {

void DvcParams::validate() const {
  if (grid_step < 1) throw ConfigError("grid_step must be >= 1");
  if (2 * subvolume_half_size + 1 < 5) throw ConfigError("subvolume must span at least 5 voxels");
  if (search_radius < 0) throw ConfigError("search_radius must be >= 0");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol must be > 0");
}

double zncc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("zncc inputs must have equal sample counts");
  const std::size_t n = a.size();
  if (n < 2) throw ConfigError("zncc needs at least 2 samples");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0)
    throw DegenerateSubvolumeError("zncc input has zero variance");
  return sab / std::sqrt(saa * sbb);
}

namespace {

bool subvolume_in_bounds(const Volume& vol, Vec3i center, int half, int margin) {
  const Vec3i d = vol.dims();
  const std::int64_t m = half + margin;
  return center.x - m >= 0 && center.y - m >= 0 && center.z - m >= 0 && center.x + m <= d.x - 1 &&
         center.y + m <= d.y - 1 && center.z + m <= d.z - 1;
}

void check_poi(const Volume& ref, const PoiSpec& poi, int margin) {
  if (2 * poi.half_size + 1 < 5) throw ConfigError("subvolume must span at least 5 voxels");
  if (!subvolume_in_bounds(ref, poi.center, poi.half_size, margin))
    throw DomainError("reference subvolume (incl. margin) out of bounds");
}

}  // namespace

IntegerSearchResult integer_search(const Volume& ref, const Volume& def, const PoiSpec& poi,
                                   int radius, Vec3i init) {
  if (radius < 0) throw ConfigError("search radius must be >= 0");
  check_poi(ref, poi, 0);

  const int h = poi.half_size;
  const std::int64_t w = 2 * h + 1;
  const std::int64_t n = w * w * w;

  std::vector<double> rhat(static_cast<std::size_t>(n));
  {
    double mean = 0.0;
    std::size_t idx = 0;
    for (std::int64_t dz = -h; dz <= h; ++dz)
      for (std::int64_t dy = -h; dy <= h; ++dy)
        for (std::int64_t dx = -h; dx <= h; ++dx)
          mean += rhat[idx++] =
              double(ref.at(poi.center.x + dx, poi.center.y + dy, poi.center.z + dz));
    mean /= double(n);
    for (auto& v : rhat) v -= mean;
  }
  double norm_r2 = 0.0;
  for (double v : rhat) norm_r2 += v * v;
  if (norm_r2 <= 0.0) throw DegenerateSubvolumeError("reference subvolume has zero variance");
  const double norm_r = std::sqrt(norm_r2);

  IntegerSearchResult best;
  best.zncc = -std::numeric_limits<double>::infinity();
  bool any_in_bounds = false;
  bool any_evaluated = false;

  for (std::int64_t dz = -radius; dz <= radius; ++dz)
    for (std::int64_t dy = -radius; dy <= radius; ++dy)
      for (std::int64_t dx = -radius; dx <= radius; ++dx) {
        const Vec3i off{init.x + dx, init.y + dy, init.z + dz};
        const Vec3i c{poi.center.x + off.x, poi.center.y + off.y, poi.center.z + off.z};
        if (!subvolume_in_bounds(def, c, h, 0)) continue;
        any_in_bounds = true;

        double sd = 0.0, sdd = 0.0, srd = 0.0;
        std::size_t idx = 0;
        for (std::int64_t kz = -h; kz <= h; ++kz)
          for (std::int64_t ky = -h; ky <= h; ++ky) {
            const float* row = def.data().data() +
                               ((c.z + kz) * def.dims().y + (c.y + ky)) * def.dims().x +
                               (c.x - h);
            for (std::int64_t kx = 0; kx < w; ++kx) {
              const double v = double(row[kx]);
              sd += v;
              sdd += v * v;
              srd += rhat[idx++] * v;
            }
          }
        const double var_d = sdd - sd * sd / double(n);
        if (var_d <= 0.0) continue;
        any_evaluated = true;
        const double score = srd / (norm_r * std::sqrt(var_d));
        // strictly-greater keeps the first (lexicographically smallest) max
        if (score > best.zncc) {
          best.offset = off;
          best.zncc = score;
        }
      }

  if (!any_in_bounds) throw OutOfBoundsError("every search candidate is out of bounds");
  if (!any_evaluated) throw DegenerateSubvolumeError("deformed search window has zero variance");
  return best;
}

MatchResult icgn_refine(const Volume& ref, const Volume& def, const PoiSpec& poi,
                        const WarpParams& init, const DvcParams& params) {
  params.validate();
  if (!init.finite()) throw ConfigError("icgn initial warp must be finite");
  check_poi(ref, poi, 1);  // gradient needs a one-voxel margin

  const int h = poi.half_size;
  const std::int64_t w = 2 * h + 1;
  const std::int64_t n = w * w * w;

  // Reference subvolume, zero-mean normalized, plus steepest-descent images
  // and the (constant) Gauss-Newton Hessian.
  std::vector<double> rhat(static_cast<std::size_t>(n));
  std::vector<std::array<double, 12>> sd(static_cast<std::size_t>(n));
  Eigen::Matrix<double, 12, 12> hessian = Eigen::Matrix<double, 12, 12>::Zero();
  {
    double mean = 0.0;
    std::size_t idx = 0;
    for (std::int64_t dz = -h; dz <= h; ++dz)
      for (std::int64_t dy = -h; dy <= h; ++dy)
        for (std::int64_t dx = -h; dx <= h; ++dx) {
          const Vec3i p{poi.center.x + dx, poi.center.y + dy, poi.center.z + dz};
          mean += rhat[idx] = double(ref.at(p.x, p.y, p.z));
          const Vec3d g = gradient(ref, p);
          auto& s = sd[idx];
          s = {g.x,          g.x * dx, g.x * dy, g.x * dz, g.y, g.y * dx,
               g.y * dy,     g.y * dz, g.z,      g.z * dx, g.z * dy,
               g.z * double(dz)};
          ++idx;
        }
    mean /= double(n);
    for (auto& v : rhat) v -= mean;
    for (std::size_t i = 0; i < std::size_t(n); ++i) {
      const auto& s = sd[i];
      for (int a = 0; a < 12; ++a)
        for (int b = a; b < 12; ++b) hessian(a, b) += s[std::size_t(a)] * s[std::size_t(b)];
    }
    for (int a = 0; a < 12; ++a)
      for (int b = 0; b < a; ++b) hessian(a, b) = hessian(b, a);
  }
  double norm_r2 = 0.0;
  for (double v : rhat) norm_r2 += v * v;
  if (norm_r2 <= 0.0) throw DegenerateSubvolumeError("reference subvolume has zero variance");
  const double norm_r = std::sqrt(norm_r2);

  Eigen::FullPivLU<Eigen::Matrix<double, 12, 12>> lu(hessian);
  if (!lu.isInvertible())
    throw DegenerateSubvolumeError("singular IC-GN Hessian (flat texture)");

  // Current warp as 3x3 matrix part plus translation.
  Eigen::Matrix3d m;
  Eigen::Vector3d t;
  const auto load_warp = [&](const WarpParams& wp) {
    m << 1.0 + wp.p[1], wp.p[2], wp.p[3], wp.p[5], 1.0 + wp.p[6], wp.p[7], wp.p[9], wp.p[10],
        1.0 + wp.p[11];
    t << wp.p[0], wp.p[4], wp.p[8];
  };
  const auto store_warp = [&]() {
    WarpParams wp;
    wp.p = {t(0), m(0, 0) - 1.0, m(0, 1), m(0, 2), t(1), m(1, 0), m(1, 1) - 1.0, m(1, 2), t(2),
            m(2, 0), m(2, 1), m(2, 2) - 1.0};
    return wp;
  };
  load_warp(init);

  std::vector<double> tval(static_cast<std::size_t>(n));

  // Samples the deformed subvolume under the current warp. Returns false if
  // any sample leaves the tricubic-valid domain.
  const auto sample_target = [&](double& mean_out) {
    double mean = 0.0;
    std::size_t idx = 0;
    for (std::int64_t dz = -h; dz <= h; ++dz)
      for (std::int64_t dy = -h; dy <= h; ++dy)
        for (std::int64_t dx = -h; dx <= h; ++dx) {
          const Vec3d pos{
              double(poi.center.x) + m(0, 0) * dx + m(0, 1) * dy + m(0, 2) * dz + t(0),
              double(poi.center.y) + m(1, 0) * dx + m(1, 1) * dy + m(1, 2) * dz + t(1),
              double(poi.center.z) + m(2, 0) * dx + m(2, 1) * dy + m(2, 2) * dz + t(2)};
          if (!sample_domain_contains(def, pos, SampleMode::Tricubic)) return false;
          mean += tval[idx++] = tricubic_unchecked(def, pos);
        }
    mean_out = mean / double(n);
    return true;
  };

  MatchResult out;
  out.warp = init;
  out.zncc = -1.0;

  const auto final_zncc = [&]() {
    double mean_t = 0.0;
    if (!sample_target(mean_t)) return false;
    double stt = 0.0, srt = 0.0;
    for (std::size_t i = 0; i < std::size_t(n); ++i) {
      const double dt_ = tval[i] - mean_t;
      stt += dt_ * dt_;
      srt += rhat[i] * dt_;
    }
    if (stt <= 0.0) return false;
    out.zncc = srt / (norm_r * std::sqrt(stt));
    return true;
  };

  for (int iter = 1; iter <= params.max_iterations; ++iter) {
    out.iterations = iter;

    double mean_t = 0.0;
    if (!sample_target(mean_t)) {
      out.warp = store_warp();
      out.status = NodeStatus::OutOfBounds;
      return out;
    }
    double stt = 0.0;
    for (std::size_t i = 0; i < std::size_t(n); ++i) {
      const double dt_ = tval[i] - mean_t;
      stt += dt_ * dt_;
    }
    if (stt <= 0.0) throw DegenerateSubvolumeError("warped subvolume has zero variance");
    const double norm_t = std::sqrt(stt);

    Eigen::Matrix<double, 12, 1> rhs = Eigen::Matrix<double, 12, 1>::Zero();
    const double scale = norm_r / norm_t;
    for (std::size_t i = 0; i < std::size_t(n); ++i) {
      const double err = scale * (tval[i] - mean_t) - rhat[i];
      const auto& s = sd[i];
      for (int a = 0; a < 12; ++a) rhs(a) += s[std::size_t(a)] * err;
    }
    const Eigen::Matrix<double, 12, 1> dp = lu.solve(rhs);

    // W <- W o W(dp)^-1
    Eigen::Matrix3d dm;
    dm << 1.0 + dp(1), dp(2), dp(3), dp(5), 1.0 + dp(6), dp(7), dp(9), dp(10), 1.0 + dp(11);
    Eigen::Vector3d dt;
    dt << dp(0), dp(4), dp(8);
    if (std::abs(dm.determinant()) < 1e-12)
      throw DegenerateSubvolumeError("non-invertible IC-GN update");
    const Eigen::Matrix3d minv = dm.inverse();
    m = (m * minv).eval();
    t = t - m * dt;

    const double h2 = double(h) * double(h);
    const double update_norm =
        std::sqrt(dp(0) * dp(0) + dp(4) * dp(4) + dp(8) * dp(8) +
                  h2 * (dp(1) * dp(1) + dp(2) * dp(2) + dp(3) * dp(3) + dp(5) * dp(5) +
                        dp(6) * dp(6) + dp(7) * dp(7) + dp(9) * dp(9) + dp(10) * dp(10) +
                        dp(11) * dp(11)));
    if (!std::isfinite(update_norm)) {
      out.warp = store_warp();
      out.status = NodeStatus::Diverged;
      final_zncc();
      return out;
    }
    if (update_norm < params.convergence_tol) {
      out.warp = store_warp();
      out.status = NodeStatus::Converged;
      if (!final_zncc()) {
        out.status = NodeStatus::OutOfBounds;
        return out;
      }
      return out;
    }
  }

  out.warp = store_warp();
  out.status = NodeStatus::Diverged;
  final_zncc();
  return out;
}

GridSpec make_grid(Vec3i dims, const DvcParams& params) {
  params.validate();
  const std::int64_t margin = params.subvolume_half_size + 1 + params.search_radius;
  GridSpec g;
  g.step = params.grid_step;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t usable = dims[a] - 1 - 2 * margin;
    if (usable < 0) throw ConfigError("volume too small for subvolume size and search radius");
    const std::int64_t count = usable / params.grid_step + 1;
    const std::int64_t span = (count - 1) * params.grid_step;
    g.counts[a] = count;
    g.origin[a] = margin + (usable - span) / 2;
  }
  return g;
}

DisplacementField run_dvc(const Volume& ref, const Volume& def, const GridSpec& grid,
                          const DvcParams& params, const Predictor* predictor) {
  params.validate();
  DisplacementField field = DisplacementField::zeros(grid);
  const std::int64_t nodes = grid.node_count();

  parallel_for(nodes, [&](std::int64_t i) {
    const Vec3i gi = grid.node_index(i);
    const Vec3i center = grid.node(gi.x, gi.y, gi.z);
    const PoiSpec poi{center, params.subvolume_half_size};

    auto& disp = field.disp[std::size_t(i)];
    auto& quality = field.zncc[std::size_t(i)];
    auto& status = field.status[std::size_t(i)];
    auto& iters = field.iterations[std::size_t(i)];
    disp = {0, 0, 0};
    quality = -1.0;
    iters = 0;

    if (!subvolume_in_bounds(ref, center, poi.half_size, 1)) {
      status = NodeStatus::OutOfBounds;
      return;
    }

    Vec3i seed{0, 0, 0};
    if (predictor) {
      const Vec3d pred = predictor->displacement_at(to_vec3d(center));
      if (all_finite(pred)) seed = round_to_int(pred);
    }

    IntegerSearchResult coarse;
    try {
      coarse = integer_search(ref, def, poi, params.search_radius, seed);
    } catch (const Error&) {
      status = NodeStatus::OutOfBounds;
      return;
    }

    try {
      const MatchResult r =
          icgn_refine(ref, def, poi, WarpParams::translation(to_vec3d(coarse.offset)), params);
      if (r.status == NodeStatus::Converged || r.status == NodeStatus::Diverged) {
        disp = r.warp.displacement();
        quality = r.zncc;
        status = r.status;
        iters = r.iterations;
      } else {
        // refinement left the domain; keep the integer-voxel result
        disp = to_vec3d(coarse.offset);
        quality = coarse.zncc;
        status = NodeStatus::IntegerOnly;
        iters = r.iterations;
      }
    } catch (const Error&) {
      disp = to_vec3d(coarse.offset);
      quality = coarse.zncc;
      status = NodeStatus::IntegerOnly;
    }

    if (std::isfinite(quality) && quality < params.zncc_accept)
      status = NodeStatus::LowCorrelation;
  });

  return field;
}

}  // namespace dvc
