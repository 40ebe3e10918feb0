#pragma once

#include <cmath>
#include <cstdint>

namespace dvc {

template <typename T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(T s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr bool operator==(Vec3 a, Vec3 b) { return a.x == b.x && a.y == b.y && a.z == b.z; }

  Vec3& operator+=(Vec3 b) {
    x += b.x; y += b.y; z += b.z;
    return *this;
  }

  double norm() const { return std::sqrt(double(x) * x + double(y) * y + double(z) * z); }
};

using Vec3d = Vec3<double>;
using Vec3i = Vec3<std::int64_t>;

inline Vec3d to_vec3d(Vec3i v) { return {double(v.x), double(v.y), double(v.z)}; }

inline Vec3i round_to_int(Vec3d v) {
  return {std::int64_t(std::llround(v.x)), std::int64_t(std::llround(v.y)),
          std::int64_t(std::llround(v.z))};
}

inline bool all_finite(Vec3d v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

}  // namespace dvc
