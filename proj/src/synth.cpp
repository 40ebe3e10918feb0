#include "dvc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include "dvc/errors.hpp"
#include "dvc/parallel.hpp"

namespace dvc::synth {

namespace {

// Uniform double in [0,1) from the raw 64-bit stream; avoids the
// implementation-defined std::uniform_real_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return std::ldexp(double(gen_() >> 11), -53); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, pair cached.
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

struct Sphere {
  Vec3d center;
  double radius;
};

void gaussian_blur_inplace(std::vector<float>& data, Vec3i dims, double sigma) {
  const int half = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  double ksum = 0.0;
  for (int i = -half; i <= half; ++i) {
    kernel[std::size_t(i + half)] = std::exp(-0.5 * double(i) * i / (sigma * sigma));
    ksum += kernel[std::size_t(i + half)];
  }
  for (auto& k : kernel) k /= ksum;

  const std::int64_t nx = dims.x, ny = dims.y, nz = dims.z;
  std::vector<float> tmp(data.size());
  const auto reflect = [](std::int64_t i, std::int64_t n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return std::clamp<std::int64_t>(i, 0, n - 1);
  };

  // x pass
  parallel_for(nz, [&](std::int64_t z) {
    for (std::int64_t y = 0; y < ny; ++y) {
      const std::int64_t row = (z * ny + y) * nx;
      for (std::int64_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k)
          acc += kernel[std::size_t(k + half)] * data[std::size_t(row + reflect(x + k, nx))];
        tmp[std::size_t(row + x)] = float(acc);
      }
    }
  });
  // y pass
  parallel_for(nz, [&](std::int64_t z) {
    for (std::int64_t y = 0; y < ny; ++y) {
      for (std::int64_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k)
          acc += kernel[std::size_t(k + half)] *
                 tmp[std::size_t((z * ny + reflect(y + k, ny)) * nx + x)];
        data[std::size_t((z * ny + y) * nx + x)] = float(acc);
      }
    }
  });
  // z pass
  std::swap(data, tmp);
  parallel_for(nz, [&](std::int64_t z) {
    for (std::int64_t y = 0; y < ny; ++y) {
      for (std::int64_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k)
          acc += kernel[std::size_t(k + half)] *
                 tmp[std::size_t((reflect(z + k, nz) * ny + y) * nx + x)];
        data[std::size_t((z * ny + y) * nx + x)] = float(acc);
      }
    }
  });
}

}  // namespace

SpecklePair generate_speckle(const SpeckleSpec& spec) {
  if (spec.dims.x < 1 || spec.dims.y < 1 || spec.dims.z < 1)
    throw ConfigError("speckle dims must be >= 1");
  if (spec.particle_volume_fraction < 0.0 || spec.particle_volume_fraction >= 0.6)
    throw ConfigError("particle volume fraction must lie in [0, 0.6)");
  if (spec.particle_radius_min <= 0.0 || spec.particle_radius_max < spec.particle_radius_min)
    throw ConfigError("bad particle radius range");

  Rng rng(spec.seed);
  const Vec3i d = spec.dims;
  const std::int64_t total = d.x * d.y * d.z;
  const std::int64_t target = std::int64_t(spec.particle_volume_fraction * double(total));

  std::vector<std::uint8_t> labels(std::size_t(total), 1);
  std::vector<Sphere> spheres;
  std::int64_t painted = 0;
  int consecutive_rejects = 0;
  const int kRejectBudget = 5000;

  while (painted < target) {
    const double r = rng.uniform(spec.particle_radius_min, spec.particle_radius_max);
    if (2.0 * r + 1.0 > double(std::min({d.x, d.y, d.z})))
      throw ConfigError("particle radius too large for the volume");
    Vec3d c{rng.uniform(r, double(d.x - 1) - r), rng.uniform(r, double(d.y - 1) - r),
            rng.uniform(r, double(d.z - 1) - r)};
    bool overlaps = false;
    for (const auto& s : spheres) {
      const double min_d = s.radius + r;
      if ((c - s.center).norm() < min_d) {
        overlaps = true;
        break;
      }
    }
    if (overlaps) {
      if (++consecutive_rejects > kRejectBudget)
        throw Error("cannot place requested particle volume fraction");
      continue;
    }
    consecutive_rejects = 0;
    spheres.push_back({c, r});
    const std::int64_t x0 = std::max<std::int64_t>(0, std::int64_t(std::floor(c.x - r)));
    const std::int64_t x1 = std::min<std::int64_t>(d.x - 1, std::int64_t(std::ceil(c.x + r)));
    const std::int64_t y0 = std::max<std::int64_t>(0, std::int64_t(std::floor(c.y - r)));
    const std::int64_t y1 = std::min<std::int64_t>(d.y - 1, std::int64_t(std::ceil(c.y + r)));
    const std::int64_t z0 = std::max<std::int64_t>(0, std::int64_t(std::floor(c.z - r)));
    const std::int64_t z1 = std::min<std::int64_t>(d.z - 1, std::int64_t(std::ceil(c.z + r)));
    for (std::int64_t z = z0; z <= z1; ++z)
      for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) {
          const Vec3d p{double(x), double(y), double(z)};
          if ((p - c).norm() <= r) {
            auto& l = labels[std::size_t((z * d.y + y) * d.x + x)];
            if (l == 1) {
              l = 2;
              ++painted;
            }
          }
        }
  }

  std::vector<float> gray(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) {
    const bool particle = labels[std::size_t(i)] == 2;
    const double mean = particle ? spec.particle_mean : spec.matrix_mean;
    const double std_ = particle ? spec.particle_std : spec.matrix_std;
    gray[std::size_t(i)] = float(mean + std_ * rng.gauss());
  }
  if (spec.smoothing_radius > 0.0) gaussian_blur_inplace(gray, d, spec.smoothing_radius);

  return {Volume(d, Dtype::F32, std::move(gray)), LabelVolume(d, std::move(labels))};
}

// ---- Analytic fields --------------------------------------------------------

Vec3d AnalyticField::displacement(Vec3d p) const {
  switch (kind) {
    case FieldKind::Translation:
      return translation;
    case FieldKind::Affine: {
      const Vec3d q = p - center;
      return {translation.x + matrix[0][0] * q.x + matrix[0][1] * q.y + matrix[0][2] * q.z,
              translation.y + matrix[1][0] * q.x + matrix[1][1] * q.y + matrix[1][2] * q.z,
              translation.z + matrix[2][0] * q.x + matrix[2][1] * q.y + matrix[2][2] * q.z};
    }
    case FieldKind::Sinusoid: {
      const double w = 2.0 * std::numbers::pi / period;
      return {amplitude * std::sin(w * (p.x + phase.x)), amplitude * std::sin(w * (p.y + phase.y)),
              amplitude * std::sin(w * (p.z + phase.z))};
    }
    case FieldKind::GaussianShearBand: {
      const double dist = (p.x - center.x) * band_normal.x + (p.y - center.y) * band_normal.y +
                          (p.z - center.z) * band_normal.z;
      const double s = 0.5 * slip * std::tanh(dist / band_width);
      return {s * slip_dir.x, s * slip_dir.y, s * slip_dir.z};
    }
  }
  return {0, 0, 0};
}

std::array<std::array<double, 3>, 3> AnalyticField::displacement_gradient(Vec3d p) const {
  std::array<std::array<double, 3>, 3> g{};
  switch (kind) {
    case FieldKind::Translation:
      break;
    case FieldKind::Affine:
      g = matrix;
      break;
    case FieldKind::Sinusoid: {
      const double w = 2.0 * std::numbers::pi / period;
      g[0][0] = amplitude * w * std::cos(w * (p.x + phase.x));
      g[1][1] = amplitude * w * std::cos(w * (p.y + phase.y));
      g[2][2] = amplitude * w * std::cos(w * (p.z + phase.z));
      break;
    }
    case FieldKind::GaussianShearBand: {
      const double dist = (p.x - center.x) * band_normal.x + (p.y - center.y) * band_normal.y +
                          (p.z - center.z) * band_normal.z;
      const double c = std::cosh(dist / band_width);
      const double ds = 0.5 * slip / (band_width * c * c);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) g[i][j] = ds * slip_dir[i] * band_normal[j];
      break;
    }
  }
  return g;
}

double AnalyticField::shear_band_peak_equivalent_strain() const {
  return slip / (2.0 * std::sqrt(3.0) * band_width);
}

void AnalyticField::validate_invertible() const {
  switch (kind) {
    case FieldKind::Translation:
      break;
    case FieldKind::Affine: {
      const auto& b = matrix;
      const double m00 = 1.0 - b[0][0], m01 = -b[0][1], m02 = -b[0][2];
      const double m10 = -b[1][0], m11 = 1.0 - b[1][1], m12 = -b[1][2];
      const double m20 = -b[2][0], m21 = -b[2][1], m22 = 1.0 - b[2][2];
      const double det = m00 * (m11 * m22 - m12 * m21) - m01 * (m10 * m22 - m12 * m20) +
                         m02 * (m10 * m21 - m11 * m20);
      if (std::abs(det) < 1e-9) throw ConfigError("affine field is not invertible");
      break;
    }
    case FieldKind::Sinusoid: {
      if (period <= 0.0) throw ConfigError("sinusoid period must be positive");
      if (std::abs(amplitude) * 2.0 * std::numbers::pi / period >= 1.0)
        throw ConfigError("sinusoid slope >= 1 is not invertible");
      break;
    }
    case FieldKind::GaussianShearBand: {
      if (band_width <= 0.0) throw ConfigError("band width must be positive");
      const double nn = band_normal.norm(), tt = slip_dir.norm();
      if (nn < 1e-12 || tt < 1e-12) throw ConfigError("band vectors must be nonzero");
      const double dot = band_normal.x * slip_dir.x + band_normal.y * slip_dir.y +
                         band_normal.z * slip_dir.z;
      if (std::abs(dot) / (nn * tt) > 1e-9)
        throw ConfigError("band slip direction must be orthogonal to the band normal");
      if (std::abs(nn - 1.0) > 1e-9 || std::abs(tt - 1.0) > 1e-9)
        throw ConfigError("band vectors must be unit length");
      break;
    }
  }
}

std::vector<FieldSample> evaluate_field(const AnalyticField& field,
                                        std::span<const Vec3d> points) {
  std::vector<FieldSample> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    out[i] = {field.displacement(points[i]), field.displacement_gradient(points[i])};
  return out;
}

// ---- Independent tricubic ---------------------------------------------------

namespace {

// Monomial coefficients of the 1D Catmull-Rom segment through p[-1..2]:
// s(t) = a0 + a1 t + a2 t^2 + a3 t^3 on t in [0,1].
inline std::array<double, 4> cr_monomial(const double p[4]) {
  return {p[1], 0.5 * (p[2] - p[0]), p[0] - 2.5 * p[1] + 2.0 * p[2] - 0.5 * p[3],
          0.5 * (-p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3])};
}

inline double horner3(const double a[4], double t) {
  return a[0] + t * (a[1] + t * (a[2] + t * a[3]));
}

}  // namespace

double oracle_tricubic(const Volume& vol, Vec3d p) {
  const Vec3i d = vol.dims();
  if (!sample_domain_contains(vol, p, SampleMode::Tricubic))
    throw DomainError("oracle tricubic point outside valid region");

  const auto split = [](double v, std::int64_t hi) {
    std::int64_t i = std::int64_t(std::floor(v));
    i = std::clamp<std::int64_t>(i, 1, hi);
    return std::pair{i, v - double(i)};
  };
  const auto [ix, tx] = split(p.x, d.x - 3);
  const auto [iy, ty] = split(p.y, d.y - 3);
  const auto [iz, tz] = split(p.z, d.z - 3);

  // Transform the 4x4x4 data block to monomial coefficients axis by axis,
  // then evaluate the trivariate polynomial by nested Horner.
  double block[4][4][4];
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i)
        block[k][j][i] = double(vol.at(ix - 1 + i, iy - 1 + j, iz - 1 + k));

  double ax[4][4][4];  // x -> monomial order
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j) {
      const auto a = cr_monomial(block[k][j]);
      for (int m = 0; m < 4; ++m) ax[k][j][m] = a[m];
    }
  double ay[4][4][4];  // y -> monomial order
  for (int k = 0; k < 4; ++k)
    for (int m = 0; m < 4; ++m) {
      double col[4] = {ax[k][0][m], ax[k][1][m], ax[k][2][m], ax[k][3][m]};
      const auto a = cr_monomial(col);
      for (int n = 0; n < 4; ++n) ay[k][n][m] = a[n];
    }
  double az[4][4][4];  // z -> monomial order
  for (int n = 0; n < 4; ++n)
    for (int m = 0; m < 4; ++m) {
      double col[4] = {ay[0][n][m], ay[1][n][m], ay[2][n][m], ay[3][n][m]};
      const auto a = cr_monomial(col);
      for (int q = 0; q < 4; ++q) az[q][n][m] = a[q];
    }

  double poly_z[4];
  for (int q = 0; q < 4; ++q) {
    double poly_y[4];
    for (int n = 0; n < 4; ++n) poly_y[n] = horner3(az[q][n], tx);
    poly_z[q] = horner3(poly_y, ty);
  }
  return horner3(poly_z, tz);
}

Volume deform_volume(const Volume& vol, const AnalyticField& field, double noise_std,
                     const std::map<int, double>& gray_drift, const LabelVolume& labels,
                     std::uint64_t noise_seed) {
  if (!(vol.dims() == labels.dims())) throw ConfigError("deform_volume: label dims mismatch");
  field.validate_invertible();
  const Vec3i d = vol.dims();
  const std::int64_t total = vol.voxel_count();
  std::vector<float> out(static_cast<std::size_t>(total));

  parallel_for(d.z, [&](std::int64_t z) {
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const Vec3d p{double(x), double(y), double(z)};
        const Vec3d src = p - field.displacement(p);
        const Vec3i nn = round_to_int(src);
        const bool on_node = double(nn.x) == src.x && double(nn.y) == src.y &&
                             double(nn.z) == src.z && vol.contains(nn);
        double g;
        if (on_node) {
          g = double(vol.at(nn.x, nn.y, nn.z));
        } else {
          const Vec3d clamped{std::clamp(src.x, 1.0, double(d.x - 2)),
                              std::clamp(src.y, 1.0, double(d.y - 2)),
                              std::clamp(src.z, 1.0, double(d.z - 2))};
          g = oracle_tricubic(vol, clamped);
        }
        if (!gray_drift.empty()) {
          const Vec3i at = on_node ? nn
                                   : Vec3i{std::clamp<std::int64_t>(nn.x, 0, d.x - 1),
                                           std::clamp<std::int64_t>(nn.y, 0, d.y - 1),
                                           std::clamp<std::int64_t>(nn.z, 0, d.z - 1)};
          const auto it = gray_drift.find(labels.at(at.x, at.y, at.z));
          if (it != gray_drift.end()) g += it->second;
        }
        out[std::size_t((z * d.y + y) * d.x + x)] = float(g);
      }
  });

  if (noise_std > 0.0) {
    Rng rng(noise_seed);
    for (auto& v : out) v = float(double(v) + noise_std * rng.gauss());
  }
  return Volume(d, Dtype::F32, std::move(out), vol.spacing());
}

// ---- JSON ---------------------------------------------------------------------

namespace {

using nlohmann::json;

Vec3d vec3d_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
Vec3i vec3i_from(const json& j) {
  return {j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>(), j.at(2).get<std::int64_t>()};
}

}  // namespace

SpeckleSpec speckle_spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SpeckleSpec s;
    if (j.contains("dims")) s.dims = vec3i_from(j["dims"]);
    s.matrix_mean = j.value("matrix_mean", s.matrix_mean);
    s.matrix_std = j.value("matrix_std", s.matrix_std);
    s.particle_mean = j.value("particle_mean", s.particle_mean);
    s.particle_std = j.value("particle_std", s.particle_std);
    s.particle_radius_min = j.value("particle_radius_min", s.particle_radius_min);
    s.particle_radius_max = j.value("particle_radius_max", s.particle_radius_max);
    s.particle_volume_fraction = j.value("particle_volume_fraction", s.particle_volume_fraction);
    s.smoothing_radius = j.value("smoothing_radius", s.smoothing_radius);
    s.seed = j.value("seed", s.seed);
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad speckle spec: ") + e.what());
  }
}

std::string speckle_spec_json(const SpeckleSpec& s) {
  json j;
  j["dims"] = {s.dims.x, s.dims.y, s.dims.z};
  j["matrix_mean"] = s.matrix_mean;
  j["matrix_std"] = s.matrix_std;
  j["particle_mean"] = s.particle_mean;
  j["particle_std"] = s.particle_std;
  j["particle_radius_min"] = s.particle_radius_min;
  j["particle_radius_max"] = s.particle_radius_max;
  j["particle_volume_fraction"] = s.particle_volume_fraction;
  j["smoothing_radius"] = s.smoothing_radius;
  j["seed"] = s.seed;
  return j.dump(2) + "\n";
}

AnalyticField analytic_field_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    AnalyticField f;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "translation") {
      f.kind = FieldKind::Translation;
      f.translation = vec3d_from(j.at("translation"));
    } else if (kind == "affine") {
      f.kind = FieldKind::Affine;
      if (j.contains("translation")) f.translation = vec3d_from(j["translation"]);
      if (j.contains("center")) f.center = vec3d_from(j["center"]);
      const auto& m = j.at("matrix");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) f.matrix[std::size_t(r)][std::size_t(c)] = m.at(std::size_t(r)).at(std::size_t(c)).get<double>();
    } else if (kind == "sinusoid") {
      f.kind = FieldKind::Sinusoid;
      f.amplitude = j.at("amplitude").get<double>();
      f.period = j.at("period").get<double>();
      if (j.contains("phase")) f.phase = vec3d_from(j["phase"]);
    } else if (kind == "shear_band") {
      f.kind = FieldKind::GaussianShearBand;
      f.band_normal = vec3d_from(j.at("normal"));
      f.slip_dir = vec3d_from(j.at("slip_dir"));
      f.center = vec3d_from(j.at("center"));
      f.band_width = j.at("width").get<double>();
      f.slip = j.at("slip").get<double>();
    } else {
      throw ConfigError("unknown field kind: " + kind);
    }
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad analytic field spec: ") + e.what());
  }
}

std::string analytic_field_json(const AnalyticField& f) {
  json j;
  switch (f.kind) {
    case FieldKind::Translation:
      j["kind"] = "translation";
      j["translation"] = {f.translation.x, f.translation.y, f.translation.z};
      break;
    case FieldKind::Affine:
      j["kind"] = "affine";
      j["translation"] = {f.translation.x, f.translation.y, f.translation.z};
      j["center"] = {f.center.x, f.center.y, f.center.z};
      j["matrix"] = {{f.matrix[0][0], f.matrix[0][1], f.matrix[0][2]},
                     {f.matrix[1][0], f.matrix[1][1], f.matrix[1][2]},
                     {f.matrix[2][0], f.matrix[2][1], f.matrix[2][2]}};
      break;
    case FieldKind::Sinusoid:
      j["kind"] = "sinusoid";
      j["amplitude"] = f.amplitude;
      j["period"] = f.period;
      j["phase"] = {f.phase.x, f.phase.y, f.phase.z};
      break;
    case FieldKind::GaussianShearBand:
      j["kind"] = "shear_band";
      j["normal"] = {f.band_normal.x, f.band_normal.y, f.band_normal.z};
      j["slip_dir"] = {f.slip_dir.x, f.slip_dir.y, f.slip_dir.z};
      j["center"] = {f.center.x, f.center.y, f.center.z};
      j["width"] = f.band_width;
      j["slip"] = f.slip;
      break;
  }
  return j.dump(2) + "\n";
}

}  // namespace dvc::synth
