#include "dvc/interp.hpp"

#include <algorithm>
#include <cmath>

namespace dvc {

namespace {

// Base index and fraction such that base stays at least `lo` and at most `hi`
// even when p sits exactly on the upper domain edge.
inline void split_coord(double p, std::int64_t lo, std::int64_t hi, std::int64_t& base,
                        double& frac) {
  base = std::int64_t(std::floor(p));
  if (base < lo) base = lo;
  if (base > hi) base = hi;
  frac = p - double(base);
}

}  // namespace

double trilinear_unchecked(const Volume& vol, Vec3d p) {
  const Vec3i d = vol.dims();
  std::int64_t ix, iy, iz;
  double tx, ty, tz;
  split_coord(p.x, 0, d.x - 2, ix, tx);
  split_coord(p.y, 0, d.y - 2, iy, ty);
  split_coord(p.z, 0, d.z - 2, iz, tz);

  double acc = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double wz = k ? tz : 1.0 - tz;
    for (int j = 0; j < 2; ++j) {
      const double wy = j ? ty : 1.0 - ty;
      const double wyz = wy * wz;
      for (int i = 0; i < 2; ++i) {
        const double wx = i ? tx : 1.0 - tx;
        acc += wx * wyz * double(vol.at(ix + i, iy + j, iz + k));
      }
    }
  }
  return acc;
}

double tricubic_unchecked(const Volume& vol, Vec3d p) {
  const Vec3i d = vol.dims();
  std::int64_t ix, iy, iz;
  double tx, ty, tz;
  split_coord(p.x, 1, d.x - 3, ix, tx);
  split_coord(p.y, 1, d.y - 3, iy, ty);
  split_coord(p.z, 1, d.z - 3, iz, tz);

  const auto wx = catmull_rom_weights(tx);
  const auto wy = catmull_rom_weights(ty);
  const auto wz = catmull_rom_weights(tz);

  const float* data = vol.data().data();
  const std::int64_t sx = 1;
  const std::int64_t sy = d.x;
  const std::int64_t sz = d.x * d.y;

  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    const float* plane = data + (iz - 1 + k) * sz;
    double acc_y = 0.0;
    for (int j = 0; j < 4; ++j) {
      const float* row = plane + (iy - 1 + j) * sy + (ix - 1) * sx;
      const double acc_x = wx[0] * row[0] + wx[1] * row[1] + wx[2] * row[2] + wx[3] * row[3];
      acc_y += wy[j] * acc_x;
    }
    acc += wz[k] * acc_y;
  }
  return acc;
}

}  // namespace dvc
