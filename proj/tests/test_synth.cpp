#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dvc/synth.hpp"
#include "dvc/volume.hpp"
#include "test_util.hpp"

using namespace dvc;
using namespace dvc::synth;

TEST_SUITE("synth") {

TEST_CASE("same seed gives bit-identical volumes") {
  const auto a = generate_speckle(testutil::small_speckle(42));
  const auto b = generate_speckle(testutil::small_speckle(42));
  CHECK(std::equal(a.volume.data().begin(), a.volume.data().end(), b.volume.data().begin()));
  CHECK(std::equal(a.labels.labels().begin(), a.labels.labels().end(),
                   b.labels.labels().begin()));
  const auto c = generate_speckle(testutil::small_speckle(43));
  CHECK_FALSE(
      std::equal(a.volume.data().begin(), a.volume.data().end(), c.volume.data().begin()));
}

TEST_CASE("volume fraction lands near the request") {
  auto spec = testutil::small_speckle(5);
  spec.particle_volume_fraction = 0.25;
  const auto pair = generate_speckle(spec);
  std::int64_t particles = 0;
  for (auto l : pair.labels.labels()) particles += l == 2;
  const double measured = double(particles) / double(pair.labels.voxel_count());
  CHECK(std::abs(measured - 0.25) < 0.02);
}

TEST_CASE("infeasible volume fraction is rejected") {
  auto spec = testutil::small_speckle(5);
  spec.dims = {32, 32, 32};
  spec.particle_volume_fraction = 0.55;  // far beyond non-overlapping saturation
  CHECK_THROWS_AS(generate_speckle(spec), Error);
}

TEST_CASE("deform with the zero field is the identity on the interior") {
  auto spec = testutil::small_speckle(8);
  const auto pair = generate_speckle(spec);
  AnalyticField zero;
  zero.kind = FieldKind::Translation;
  zero.translation = {0, 0, 0};
  const Volume out = deform_volume(pair.volume, zero, 0.0, {}, pair.labels);
  const Vec3i d = out.dims();
  for (std::int64_t z = 1; z < d.z - 1; ++z)
    for (std::int64_t y = 1; y < d.y - 1; ++y)
      for (std::int64_t x = 1; x < d.x - 1; ++x)
        CHECK(out.at(x, y, z) ==
              doctest::Approx(pair.volume.at(x, y, z)).epsilon(1e-9));
}

TEST_CASE("gray drift moves the measured component means linearly") {
  auto spec = testutil::small_speckle(12);
  spec.smoothing_radius = 0.0;
  const auto pair = generate_speckle(spec);
  AnalyticField zero;
  const std::map<int, double> drift{{1, -11.04}, {2, -15.27}};
  const Volume out = deform_volume(pair.volume, zero, 0.0, drift, pair.labels);
  const double m1 = component_mean(out, pair.labels, 1);
  const double m2 = component_mean(out, pair.labels, 2);
  const double base1 = component_mean(pair.volume, pair.labels, 1);
  const double base2 = component_mean(pair.volume, pair.labels, 2);
  CHECK(m1 - base1 == doctest::Approx(-11.04).epsilon(0.01));
  CHECK(m2 - base2 == doctest::Approx(-15.27).epsilon(0.01));
}

TEST_CASE("analytic gradients match central differences of the displacement") {
  std::vector<AnalyticField> fields(4);
  fields[0].kind = FieldKind::Translation;
  fields[0].translation = {1.5, -2.0, 0.25};
  fields[1].kind = FieldKind::Affine;
  fields[1].matrix = {{{0.01, 0.002, -0.003}, {0.004, -0.01, 0.006}, {0.0, 0.005, 0.02}}};
  fields[1].translation = {0.5, 0.5, -0.5};
  fields[2].kind = FieldKind::Sinusoid;
  fields[2].amplitude = 3.0;
  fields[2].period = 64.0;
  fields[3].kind = FieldKind::GaussianShearBand;
  fields[3].band_normal = {1, 0, 0};
  fields[3].slip_dir = {0, 0, 1};
  fields[3].center = {32, 32, 32};
  fields[3].band_width = 6.0;
  fields[3].slip = 6.0;

  std::mt19937_64 rng(3);
  const auto urand = [&](double lo, double hi) {
    return lo + (hi - lo) * double(rng()) / double(std::mt19937_64::max());
  };
  const double h = 1e-5;
  for (const auto& f : fields) {
    for (int i = 0; i < 100; ++i) {
      const Vec3d p{urand(8, 56), urand(8, 56), urand(8, 56)};
      const auto g = f.displacement_gradient(p);
      for (int axis = 0; axis < 3; ++axis) {
        Vec3d lo = p, hi = p;
        lo[axis] -= h;
        hi[axis] += h;
        const Vec3d dlo = f.displacement(lo), dhi = f.displacement(hi);
        for (int comp = 0; comp < 3; ++comp) {
          const double fd = (dhi[comp] - dlo[comp]) / (2.0 * h);
          CHECK(g[std::size_t(comp)][std::size_t(axis)] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
      }
    }
  }
}

TEST_CASE("sinusoid peak gradient matches the closed form") {
  AnalyticField f;
  f.kind = FieldKind::Sinusoid;
  f.amplitude = 3.0;
  f.period = 64.0;
  double max_grad = 0.0;
  for (double x = 0.0; x < 64.0; x += 0.05)
    max_grad = std::max(max_grad, std::abs(f.displacement_gradient({x, 0, 0})[0][0]));
  CHECK(max_grad == doctest::Approx(3.0 * 2.0 * std::numbers::pi / 64.0).epsilon(1e-4));
  CHECK(max_grad == doctest::Approx(0.2945).epsilon(1e-3));
}

TEST_CASE("shear band peak equivalent strain has a closed form") {
  AnalyticField f;
  f.kind = FieldKind::GaussianShearBand;
  f.band_normal = {1, 0, 0};
  f.slip_dir = {0, 0, 1};
  f.center = {48, 48, 48};
  f.band_width = 6.0;
  f.slip = 0.30 * 2.0 * std::sqrt(3.0) * 6.0;  // peak eeq = 0.30
  CHECK(f.shear_band_peak_equivalent_strain() == doctest::Approx(0.30));

  // the strain tensor at the band center is pure shear ezx = slip/(4 width)
  const auto g = f.displacement_gradient({48, 10, 20});
  const double ezx = 0.5 * (g[2][0] + g[0][2]);
  CHECK(ezx == doctest::Approx(f.slip / (4.0 * 6.0)));
}

TEST_CASE("evaluate_field returns displacement and gradient per point") {
  AnalyticField f;
  f.kind = FieldKind::Affine;
  f.matrix = {{{0.02, 0, 0}, {0, 0.01, 0}, {0, 0, -0.01}}};
  const std::vector<Vec3d> pts{{1, 2, 3}, {10, 20, 30}};
  const auto samples = evaluate_field(f, pts);
  CHECK(samples.size() == 2);
  CHECK(samples[1].displacement.x == doctest::Approx(0.2));
  CHECK(samples[1].gradient[0][0] == doctest::Approx(0.02));
  CHECK(samples[0].gradient[1][1] == doctest::Approx(0.01));
}

TEST_CASE("noise-free deform then exact inverse warp recovers the original") {
  auto spec = testutil::small_speckle(14);
  spec.smoothing_radius = 2.0;  // band-limited: resampling error stays sub-gray
  const auto pair = generate_speckle(spec);
  AnalyticField shift;
  shift.kind = FieldKind::Translation;
  shift.translation = {2.3, -1.1, 0.7};
  const Volume moved = deform_volume(pair.volume, shift, 0.0, {}, pair.labels);
  AnalyticField inverse = shift;
  inverse.translation = {-2.3, 1.1, -0.7};
  const Volume back = deform_volume(moved, inverse, 0.0, {}, pair.labels);
  const Vec3i d = back.dims();
  double max_err = 0.0;
  for (std::int64_t z = 8; z < d.z - 8; ++z)
    for (std::int64_t y = 8; y < d.y - 8; ++y)
      for (std::int64_t x = 8; x < d.x - 8; ++x)
        max_err = std::max(max_err, std::abs(double(back.at(x, y, z)) -
                                             double(pair.volume.at(x, y, z))));
  CHECK(max_err < 0.5);  // tricubic resampling error on band-limited speckle
}

TEST_CASE("non-invertible fields are rejected") {
  const auto pair = generate_speckle(testutil::small_speckle(2));
  AnalyticField bad;
  bad.kind = FieldKind::Sinusoid;
  bad.amplitude = 20.0;
  bad.period = 64.0;  // slope ~ 1.96
  CHECK_THROWS_AS(deform_volume(pair.volume, bad, 0.0, {}, pair.labels), ConfigError);

  AnalyticField skew;
  skew.kind = FieldKind::GaussianShearBand;
  skew.band_normal = {1, 0, 0};
  skew.slip_dir = {0.5, 0, 0.8};  // not orthogonal to the normal
  skew.band_width = 4.0;
  skew.slip = 2.0;
  CHECK_THROWS_AS(deform_volume(pair.volume, skew, 0.0, {}, pair.labels), ConfigError);
}

TEST_CASE("speckle and field specs round-trip through JSON") {
  auto spec = testutil::small_speckle(99);
  spec.particle_volume_fraction = 0.31;
  const auto back = speckle_spec_from_json(speckle_spec_json(spec));
  CHECK(back.seed == 99);
  CHECK(back.particle_volume_fraction == doctest::Approx(0.31));

  AnalyticField f;
  f.kind = FieldKind::GaussianShearBand;
  f.band_normal = {1, 0, 0};
  f.slip_dir = {0, 1, 0};
  f.center = {48, 48, 48};
  f.band_width = 5.5;
  f.slip = 4.2;
  const auto f2 = analytic_field_from_json(analytic_field_json(f));
  CHECK(f2.kind == FieldKind::GaussianShearBand);
  CHECK(f2.band_width == doctest::Approx(5.5));
  CHECK(f2.slip == doctest::Approx(4.2));
  CHECK_THROWS_AS(analytic_field_from_json(R"({"kind":"vortex"})"), ConfigError);
}

}  // TEST_SUITE
