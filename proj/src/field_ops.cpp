#include "dvc/field_ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "dvc/parallel.hpp"

namespace dvc {

namespace {

double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class Fn>
void for_each_neighbor(const GridSpec& g, Vec3i gi, Fn&& fn) {
  for (std::int64_t dz = -1; dz <= 1; ++dz)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const Vec3i q{gi.x + dx, gi.y + dy, gi.z + dz};
        if (q.x < 0 || q.y < 0 || q.z < 0 || q.x >= g.counts.x || q.y >= g.counts.y ||
            q.z >= g.counts.z)
          continue;
        fn(g.index(q.x, q.y, q.z));
      }
}

}  // namespace

std::vector<std::uint8_t> detect_outliers(const DisplacementField& field, double eps0,
                                          double thresh) {
  field.validate();
  const std::int64_t n = field.grid.node_count();
  std::vector<std::uint8_t> flags(std::size_t(n), 0);

  parallel_for(n, [&](std::int64_t i) {
    if (!node_usable(field.status[std::size_t(i)])) {
      flags[std::size_t(i)] = 1;
      return;
    }
    const Vec3i gi = field.grid.node_index(i);
    std::vector<double> vals;
    vals.reserve(26);
    std::vector<std::int64_t> neighbors;
    neighbors.reserve(26);
    for_each_neighbor(field.grid, gi, [&](std::int64_t j) {
      if (node_usable(field.status[std::size_t(j)])) neighbors.push_back(j);
    });
    if (neighbors.empty()) {
      flags[std::size_t(i)] = 1;
      return;
    }
    for (int c = 0; c < 3; ++c) {
      vals.clear();
      for (std::int64_t j : neighbors) vals.push_back(field.disp[std::size_t(j)][c]);
      const double med = median_of(vals);
      for (auto& v : vals) v = std::abs(v - med);
      const double mar = median_of(vals);
      const double score = std::abs(field.disp[std::size_t(i)][c] - med) / (mar + eps0);
      if (score > thresh) {
        flags[std::size_t(i)] = 1;
        return;
      }
    }
  });
  return flags;
}

DisplacementField repair_field(const DisplacementField& field,
                               std::span<const std::uint8_t> flags) {
  field.validate();
  const std::int64_t n = field.grid.node_count();
  if (std::int64_t(flags.size()) != n) throw Error("flag array does not match grid");

  DisplacementField out = field;
  std::vector<std::uint8_t> fixed(static_cast<std::size_t>(n));
  std::int64_t remaining = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    fixed[std::size_t(i)] = flags[std::size_t(i)] ? 0 : 1;
    if (flags[std::size_t(i)]) ++remaining;
  }
  if (remaining == n) throw UnrecoverableFieldError("every node is flagged");

  // Breadth-first waves from the valid region; each wave reads only values
  // settled in previous waves so the result is order-independent.
  while (remaining > 0) {
    std::vector<std::int64_t> wave;
    std::vector<Vec3d> wave_vals;
    for (std::int64_t i = 0; i < n; ++i) {
      if (fixed[std::size_t(i)]) continue;
      const Vec3i gi = field.grid.node_index(i);
      std::vector<double> vx, vy, vz;
      for_each_neighbor(field.grid, gi, [&](std::int64_t j) {
        if (!fixed[std::size_t(j)]) return;
        vx.push_back(out.disp[std::size_t(j)].x);
        vy.push_back(out.disp[std::size_t(j)].y);
        vz.push_back(out.disp[std::size_t(j)].z);
      });
      if (vx.empty()) continue;
      wave.push_back(i);
      wave_vals.push_back({median_of(vx), median_of(vy), median_of(vz)});
    }
    if (wave.empty()) throw UnrecoverableFieldError("disconnected flagged region");
    for (std::size_t k = 0; k < wave.size(); ++k) {
      const std::int64_t i = wave[k];
      out.disp[std::size_t(i)] = wave_vals[k];
      out.status[std::size_t(i)] = NodeStatus::Repaired;
      fixed[std::size_t(i)] = 1;
      --remaining;
    }
  }
  return out;
}

// ---- Cubic spline ------------------------------------------------------------

namespace {

// Cubic B-spline basis at fraction t for taps {-1, 0, 1, 2}.
inline std::array<double, 4> bspline_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double omt = 1.0 - t;
  return {omt * omt * omt / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
          (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
}

// Interpolating B-spline coefficients for one axis with not-a-knot end
// conditions: n node equations plus third-derivative continuity across the
// second and second-to-last knots. Reproduces cubics globally.
Eigen::PartialPivLU<Eigen::MatrixXd> spline_system(std::int64_t n) {
  const std::int64_t m = n + 2;  // coefficients c_{-1} .. c_n
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (std::int64_t i = 0; i < n; ++i) {
    a(i, i) = 1.0 / 6.0;
    a(i, i + 1) = 4.0 / 6.0;
    a(i, i + 2) = 1.0 / 6.0;
  }
  // not-a-knot at knot 1 and knot n-2 (coefficient index shift: c_k -> col k+1)
  const auto nak = [&](std::int64_t row, std::int64_t k) {
    a(row, k) += 1.0;
    a(row, k + 1) += -4.0;
    a(row, k + 2) += 6.0;
    a(row, k + 3) += -4.0;
    a(row, k + 4) += 1.0;
  };
  nak(n, 0);
  nak(n + 1, n - 4 + 1);
  return Eigen::PartialPivLU<Eigen::MatrixXd>(a);
}

}  // namespace

CubicSplineGrid3::CubicSplineGrid3(Vec3i counts, std::span<const double> values)
    : counts_(counts) {
  if (counts.x < 4 || counts.y < 4 || counts.z < 4)
    throw ConfigError("cubic spline grid needs at least 4 nodes per axis");
  if (std::int64_t(values.size()) != counts.x * counts.y * counts.z)
    throw Error("spline value count does not match grid");

  const std::int64_t nx = counts.x, ny = counts.y, nz = counts.z;
  const std::int64_t cx = nx + 2, cy = ny + 2, cz = nz + 2;

  // x pass: values (nx,ny,nz) -> coeffs (cx,ny,nz)
  std::vector<double> tmpx(static_cast<std::size_t>(cx * ny * nz));
  {
    const auto lu = spline_system(nx);
    parallel_for(ny * nz, [&](std::int64_t line) {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cx);
      for (std::int64_t i = 0; i < nx; ++i) rhs(i) = values[std::size_t(line * nx + i)];
      const Eigen::VectorXd c = lu.solve(rhs);
      for (std::int64_t i = 0; i < cx; ++i) tmpx[std::size_t(line * cx + i)] = c(i);
    });
  }
  // y pass: (cx,ny,nz) -> (cx,cy,nz)
  std::vector<double> tmpy(static_cast<std::size_t>(cx * cy * nz));
  {
    const auto lu = spline_system(ny);
    parallel_for(nz * cx, [&](std::int64_t line) {
      const std::int64_t z = line / cx;
      const std::int64_t x = line % cx;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cy);
      for (std::int64_t j = 0; j < ny; ++j) rhs(j) = tmpx[std::size_t((z * ny + j) * cx + x)];
      const Eigen::VectorXd c = lu.solve(rhs);
      for (std::int64_t j = 0; j < cy; ++j) tmpy[std::size_t((z * cy + j) * cx + x)] = c(j);
    });
  }
  // z pass: (cx,cy,nz) -> (cx,cy,cz)
  coeff_.assign(std::size_t(cx * cy * cz), 0.0);
  {
    const auto lu = spline_system(nz);
    parallel_for(cy * cx, [&](std::int64_t line) {
      const std::int64_t y = line / cx;
      const std::int64_t x = line % cx;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cz);
      for (std::int64_t k = 0; k < nz; ++k) rhs(k) = tmpy[std::size_t((k * cy + y) * cx + x)];
      const Eigen::VectorXd c = lu.solve(rhs);
      for (std::int64_t k = 0; k < cz; ++k) coeff_[std::size_t((k * cy + y) * cx + x)] = c(k);
    });
  }
}

double CubicSplineGrid3::operator()(Vec3d gp) const {
  const auto prep = [](double v, std::int64_t n) {
    v = std::clamp(v, 0.0, double(n - 1));
    std::int64_t i = std::int64_t(std::floor(v));
    i = std::clamp<std::int64_t>(i, 0, n - 2);
    return std::pair{i, v - double(i)};
  };
  const auto [ix, tx] = prep(gp.x, counts_.x);
  const auto [iy, ty] = prep(gp.y, counts_.y);
  const auto [iz, tz] = prep(gp.z, counts_.z);
  const auto wx = bspline_weights(tx);
  const auto wy = bspline_weights(ty);
  const auto wz = bspline_weights(tz);

  const std::int64_t cx = counts_.x + 2, cy = counts_.y + 2;
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    double ay = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double* row = coeff_.data() + ((iz + k) * cy + (iy + j)) * cx + ix;
      ay += wy[std::size_t(j)] *
            (wx[0] * row[0] + wx[1] * row[1] + wx[2] * row[2] + wx[3] * row[3]);
    }
    acc += wz[std::size_t(k)] * ay;
  }
  return acc;
}

DenseField::DenseField(GridSpec grid, CubicSplineGrid3 u, CubicSplineGrid3 v, CubicSplineGrid3 w)
    : grid_(grid), u_(std::move(u)), v_(std::move(v)), w_(std::move(w)) {}

Vec3d DenseField::operator()(Vec3d p) const {
  const Vec3d gp{(p.x - double(grid_.origin.x)) / double(grid_.step),
                 (p.y - double(grid_.origin.y)) / double(grid_.step),
                 (p.z - double(grid_.origin.z)) / double(grid_.step)};
  return {u_(gp), v_(gp), w_(gp)};
}

DenseField densify(const DisplacementField& field) {
  field.validate();
  const GridSpec& g = field.grid;
  if (g.counts.x < 4 || g.counts.y < 4 || g.counts.z < 4)
    throw ConfigError("densify needs at least 4 nodes per axis");
  for (auto s : field.status)
    if (!node_usable(s))
      throw Error("densify requires every node Converged or Repaired");

  const std::int64_t n = g.node_count();
  std::vector<double> u(static_cast<std::size_t>(n));
  std::vector<double> v(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    u[std::size_t(i)] = field.disp[std::size_t(i)].x;
    v[std::size_t(i)] = field.disp[std::size_t(i)].y;
    w[std::size_t(i)] = field.disp[std::size_t(i)].z;
  }
  return DenseField(g, CubicSplineGrid3(g.counts, u), CubicSplineGrid3(g.counts, v),
                    CubicSplineGrid3(g.counts, w));
}

DenseScalar::DenseScalar(GridSpec grid, CubicSplineGrid3 s) : grid_(grid), s_(std::move(s)) {}

double DenseScalar::operator()(Vec3d p) const {
  const Vec3d gp{(p.x - double(grid_.origin.x)) / double(grid_.step),
                 (p.y - double(grid_.origin.y)) / double(grid_.step),
                 (p.z - double(grid_.origin.z)) / double(grid_.step)};
  return s_(gp);
}

DenseScalar densify_scalar(const GridSpec& grid, std::span<const double> node_values) {
  return DenseScalar(grid, CubicSplineGrid3(grid.counts, node_values));
}

// ---- Composition --------------------------------------------------------------

DisplacementField compose(const DisplacementField& total, const DisplacementField& increment) {
  if (!(total.grid == increment.grid)) throw Error("compose: grid mismatch");
  const DenseField dd = densify(increment);

  DisplacementField out = total;
  const std::int64_t n = total.grid.node_count();
  parallel_for(n, [&](std::int64_t i) {
    const Vec3i gi = total.grid.node_index(i);
    const Vec3d x = to_vec3d(total.grid.node(gi.x, gi.y, gi.z));
    const Vec3d d0 = total.disp[std::size_t(i)];
    out.disp[std::size_t(i)] = d0 + dd(x + d0);
    const NodeStatus a = total.status[std::size_t(i)];
    const NodeStatus b = increment.status[std::size_t(i)];
    out.status[std::size_t(i)] = node_status_strength(a) <= node_status_strength(b) ? a : b;
    out.zncc[std::size_t(i)] = std::min(total.zncc[std::size_t(i)], increment.zncc[std::size_t(i)]);
    out.iterations[std::size_t(i)] =
        total.iterations[std::size_t(i)] + increment.iterations[std::size_t(i)];
  });
  return out;
}

DisplacementField accumulate(std::span<const DisplacementField> increments) {
  if (increments.empty()) throw ConfigError("accumulate needs at least one field");
  DisplacementField total = increments[0];
  for (std::size_t i = 1; i < increments.size(); ++i) total = compose(total, increments[i]);
  return total;
}

// ---- Strain --------------------------------------------------------------------

double equivalent_strain(const std::array<double, 6>& e) {
  const double dxy = e[0] - e[1];
  const double dyz = e[1] - e[2];
  const double dzx = e[2] - e[0];
  const double shear = e[3] * e[3] + e[4] * e[4] + e[5] * e[5];
  return std::sqrt(2.0 / 9.0 * (dxy * dxy + dyz * dyz + dzx * dzx + 6.0 * shear));
}

StrainField strain_from_field(const DisplacementField& field, int window) {
  field.validate();
  if (window < 1) throw ConfigError("strain window must be >= 1");
  for (auto s : field.status)
    if (!node_usable(s))
      throw Error("strain_from_field requires a repaired field (no failed nodes)");

  const GridSpec& g = field.grid;
  StrainField out;
  out.grid = g;
  const std::int64_t n = g.node_count();
  out.strain.assign(std::size_t(n), {});
  out.eeq.assign(std::size_t(n), 0.0);

  std::vector<std::uint8_t> degenerate(std::size_t(n), 0);
  parallel_for(n, [&](std::int64_t idx) {
    const Vec3i gi = g.node_index(idx);
    const std::int64_t x0 = std::max<std::int64_t>(0, gi.x - window);
    const std::int64_t x1 = std::min(g.counts.x - 1, gi.x + window);
    const std::int64_t y0 = std::max<std::int64_t>(0, gi.y - window);
    const std::int64_t y1 = std::min(g.counts.y - 1, gi.y + window);
    const std::int64_t z0 = std::max<std::int64_t>(0, gi.z - window);
    const std::int64_t z1 = std::min(g.counts.z - 1, gi.z + window);

    // least-squares linear model d(x) = a + B x over the neighborhood,
    // via the 4x4 normal equations shared by all three components
    Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
    Eigen::Matrix<double, 4, 3> atb = Eigen::Matrix<double, 4, 3>::Zero();
    for (std::int64_t z = z0; z <= z1; ++z)
      for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) {
          const std::int64_t j = g.index(x, y, z);
          const Eigen::Vector4d row(1.0, double((x - gi.x) * g.step), double((y - gi.y) * g.step),
                                    double((z - gi.z) * g.step));
          ata += row * row.transpose();
          const Vec3d d = field.disp[std::size_t(j)];
          atb += row * Eigen::RowVector3d(d.x, d.y, d.z);
        }
    const Eigen::FullPivLU<Eigen::Matrix4d> lu(ata);
    if (!lu.isInvertible()) {
      degenerate[std::size_t(idx)] = 1;
      return;
    }
    const Eigen::Matrix<double, 4, 3> sol = lu.solve(atb);
    // displacement gradient B: rows are components, columns are axes
    const double bxx = sol(1, 0), bxy = sol(2, 0), bxz = sol(3, 0);
    const double byx = sol(1, 1), byy = sol(2, 1), byz = sol(3, 1);
    const double bzx = sol(1, 2), bzy = sol(2, 2), bzz = sol(3, 2);

    auto& e = out.strain[std::size_t(idx)];
    e[0] = bxx;
    e[1] = byy;
    e[2] = bzz;
    e[3] = 0.5 * (bxy + byx);
    e[4] = 0.5 * (byz + bzy);
    e[5] = 0.5 * (bzx + bxz);
    out.eeq[std::size_t(idx)] = equivalent_strain(e);
  });

  for (auto d : degenerate)
    if (d) throw Error("degenerate strain neighborhood (collinear nodes)");
  return out;
}

}  // namespace dvc
