#pragma once

#include <array>
#include <cstdint>

#include "dvc/volume.hpp"

namespace dvc {

// Catmull-Rom weights for taps at offsets {-1, 0, 1, 2} around the base node.
inline std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {0.5 * (-t3 + 2.0 * t2 - t),
          0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
          0.5 * (-3.0 * t3 + 4.0 * t2 + t),
          0.5 * (t3 - t2)};
}

// Tricubic Catmull-Rom sample; caller guarantees p lies in [1, n-2] per axis.
double tricubic_unchecked(const Volume& vol, Vec3d p);

// Trilinear sample; caller guarantees p lies in [0, n-1] per axis.
double trilinear_unchecked(const Volume& vol, Vec3d p);

}  // namespace dvc
