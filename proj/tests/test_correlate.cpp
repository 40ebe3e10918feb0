#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dvc/correlate.hpp"
#include "dvc/parallel.hpp"
#include "dvc/synth.hpp"
#include "test_util.hpp"

using namespace dvc;

namespace {

synth::SpecklePair fixture(std::uint64_t seed) {
  return synth::generate_speckle(testutil::small_speckle(seed));
}

Volume translated(const synth::SpecklePair& pair, Vec3d t, double noise = 0.0,
                  std::uint64_t noise_seed = 1) {
  synth::AnalyticField f;
  f.kind = synth::FieldKind::Translation;
  f.translation = t;
  return synth::deform_volume(pair.volume, f, noise, {}, pair.labels, noise_seed);
}

}  // namespace

TEST_SUITE("correlate") {

TEST_CASE("zncc basics") {
  std::vector<double> a = {1, 2, 3, 4, 5, 9, 2, 0};
  std::vector<double> b(a);
  CHECK(zncc(a, b) == doctest::Approx(1.0));
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 2.0 * a[i] + 10.0;
  CHECK(zncc(a, b) == doctest::Approx(1.0));
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = -a[i];
  CHECK(zncc(a, b) == doctest::Approx(-1.0));

  CHECK_THROWS_AS(zncc(a, std::vector<double>{1, 2}), ConfigError);
  CHECK_THROWS_AS(zncc(std::vector<double>{1}, std::vector<double>{2}), ConfigError);
  CHECK_THROWS_AS(zncc(std::vector<double>(8, 3.0), a), DegenerateSubvolumeError);
}

TEST_CASE("zncc is symmetric, affine-invariant and bounded") {
  std::mt19937_64 rng(4);
  const auto urand = [&](double lo, double hi) {
    return lo + (hi - lo) * double(rng()) / double(std::mt19937_64::max());
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(64), b(64);
    for (auto& v : a) v = urand(0, 255);
    for (auto& v : b) v = urand(0, 255);
    const double ab = zncc(a, b);
    CHECK(std::abs(ab) <= 1.0 + 1e-12);
    CHECK(zncc(b, a) == doctest::Approx(ab).epsilon(1e-12));
    const double gain = urand(0.1, 5.0), offset = urand(-50, 50);
    std::vector<double> a2(a);
    for (auto& v : a2) v = gain * v + offset;
    CHECK(zncc(a2, b) == doctest::Approx(ab).epsilon(1e-9));
  }
}

TEST_CASE("integer search recovers an exact integer shift") {
  const auto pair = fixture(101);
  // def(x) = ref(x - t) realized as an exact index copy
  const Vec3i t{3, -2, 5};
  const Vec3i d = pair.volume.dims();
  std::vector<float> shifted(std::size_t(d.x * d.y * d.z), 0.0f);
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const Vec3i s{x - t.x, y - t.y, z - t.z};
        if (pair.volume.contains(s))
          shifted[std::size_t((z * d.y + y) * d.x + x)] = pair.volume.at(s.x, s.y, s.z);
      }
  const Volume def(d, Dtype::F32, std::move(shifted));

  const PoiSpec poi{{32, 32, 32}, 10};
  const auto hit = integer_search(pair.volume, def, poi, 8, {0, 0, 0});
  CHECK(hit.offset == t);
  CHECK(hit.zncc == doctest::Approx(1.0).epsilon(1e-9));

  const auto self = integer_search(pair.volume, pair.volume, poi, 0, {0, 0, 0});
  CHECK(self.offset == Vec3i{0, 0, 0});
  CHECK(self.zncc == doctest::Approx(1.0));
}

TEST_CASE("a peak outside the search window yields low correlation") {
  const auto pair = fixture(7);
  const Volume def = translated(pair, {12, 0, 0});
  const PoiSpec poi{{32, 32, 32}, 10};
  const auto hit = integer_search(pair.volume, def, poi, 8, {0, 0, 0});
  CHECK(hit.zncc < 0.8);  // caller marks LowCorrelation against zncc_accept
}

TEST_CASE("shrinking the radius never improves the best score") {
  const auto pair = fixture(19);
  const Volume def = translated(pair, {2.6, -1.2, 0.4}, 2.0);
  const PoiSpec poi{{32, 32, 32}, 10};
  double prev = -2.0;
  for (int radius : {0, 1, 2, 4, 6}) {
    const auto hit = integer_search(pair.volume, def, poi, radius, {0, 0, 0});
    CHECK(hit.zncc >= prev - 1e-15);
    prev = hit.zncc;
  }
}

TEST_CASE("flat-plateau ties break toward the lexicographically smallest offset") {
  // bit-exact period-4 pattern in x: offsets -4, 0, +4 tie exactly; the
  // quadratic y/z terms make every other offset strictly worse
  const double lut[4] = {100.0, 150.0, 100.0, 50.0};
  const auto vol = testutil::make_volume({48, 24, 24}, [&](double x, double y, double z) {
    return lut[std::int64_t(x) % 4] + 0.5 * (y - 12) * (y - 12) + 0.25 * (z - 12) * (z - 12);
  });
  const PoiSpec poi{{24, 12, 12}, 6};
  const auto hit = integer_search(vol, vol, poi, 4, {0, 0, 0});
  CHECK(hit.zncc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hit.offset == Vec3i{-4, 0, 0});
}

TEST_CASE("degenerate subvolumes are rejected") {
  const auto flat = testutil::make_volume({32, 32, 32}, [](double, double, double) { return 7.0; });
  const PoiSpec poi{{16, 16, 16}, 6};
  CHECK_THROWS_AS(integer_search(flat, flat, poi, 2, {0, 0, 0}), DegenerateSubvolumeError);
  DvcParams params;
  params.subvolume_half_size = 6;
  CHECK_THROWS_AS(icgn_refine(flat, flat, poi, WarpParams{}, params), DegenerateSubvolumeError);
}

TEST_CASE("icgn on identical volumes converges immediately") {
  const auto pair = fixture(23);
  DvcParams params;
  params.subvolume_half_size = 10;
  const PoiSpec poi{{32, 32, 32}, 10};
  const MatchResult r = icgn_refine(pair.volume, pair.volume, poi, WarpParams{}, params);
  CHECK(r.status == NodeStatus::Converged);
  CHECK(r.iterations <= 2);
  CHECK(r.zncc == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(r.warp.displacement().x) < 1e-6);
  CHECK(std::abs(r.warp.displacement().y) < 1e-6);
  CHECK(std::abs(r.warp.displacement().z) < 1e-6);
}

TEST_CASE("icgn recovers a subvoxel translation to 0.02 voxel") {
  const auto pair = fixture(29);
  const Volume def = translated(pair, {0.40, -0.30, 0.20});
  DvcParams params;
  params.subvolume_half_size = 10;
  const PoiSpec poi{{32, 32, 32}, 10};
  const MatchResult r = icgn_refine(pair.volume, def, poi, WarpParams{}, params);
  CHECK(r.status == NodeStatus::Converged);
  CHECK(std::abs(r.warp.displacement().x - 0.40) < 0.02);
  CHECK(std::abs(r.warp.displacement().y + 0.30) < 0.02);
  CHECK(std::abs(r.warp.displacement().z - 0.20) < 0.02);
  CHECK(r.zncc > 0.95);
}

TEST_CASE("icgn recovers a uniform stretch to 0.002") {
  const auto pair = fixture(31);
  synth::AnalyticField f;
  f.kind = synth::FieldKind::Affine;
  f.center = {32, 32, 32};
  f.matrix = {{{0.01, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
  const Volume def = synth::deform_volume(pair.volume, f, 0.0, {}, pair.labels);
  DvcParams params;
  params.subvolume_half_size = 10;
  const PoiSpec poi{{32, 32, 32}, 10};
  const MatchResult r = icgn_refine(pair.volume, def, poi, WarpParams{}, params);
  CHECK(r.status == NodeStatus::Converged);
  CHECK(std::abs(r.warp.p[1] - 0.01) < 0.002);  // ux
  CHECK(std::abs(r.warp.displacement().x) < 0.02);
}

TEST_CASE("icgn fixed point: starting at the true warp stays put") {
  const auto pair = fixture(37);
  synth::AnalyticField f;
  f.kind = synth::FieldKind::Affine;
  f.center = {32, 32, 32};
  f.translation = {1.25, -0.75, 0.5};
  f.matrix = {{{0.008, 0.002, 0}, {0, -0.006, 0.001}, {0.003, 0, 0.004}}};
  const Volume def = synth::deform_volume(pair.volume, f, 0.0, {}, pair.labels);

  DvcParams params;
  params.subvolume_half_size = 10;
  const PoiSpec poi{{32, 32, 32}, 10};
  // solve u_w = u(center + u_w) for the warp the matcher should report
  Vec3d uw = f.translation;
  for (int i = 0; i < 50; ++i) uw = f.displacement({32 + uw.x, 32 + uw.y, 32 + uw.z});
  WarpParams init;
  init.p = {uw.x, f.matrix[0][0], f.matrix[0][1], f.matrix[0][2],
            uw.y, f.matrix[1][0], f.matrix[1][1], f.matrix[1][2],
            uw.z, f.matrix[2][0], f.matrix[2][1], f.matrix[2][2]};
  const MatchResult r = icgn_refine(pair.volume, def, poi, init, params);
  CHECK(r.status == NodeStatus::Converged);
  CHECK(r.iterations <= 2);
  CHECK(std::abs(r.warp.displacement().x - uw.x) < 5e-3);
  CHECK(std::abs(r.warp.displacement().y - uw.y) < 5e-3);
  CHECK(std::abs(r.warp.displacement().z - uw.z) < 5e-3);
}

TEST_CASE("icgn flags warps that leave the deformed volume") {
  const auto pair = fixture(41);
  DvcParams params;
  params.subvolume_half_size = 10;
  const PoiSpec poi{{12, 32, 32}, 10};
  const MatchResult r =
      icgn_refine(pair.volume, pair.volume, poi, WarpParams::translation({-8, 0, 0}), params);
  CHECK(r.status == NodeStatus::OutOfBounds);

  // reference subvolume missing its gradient margin is a caller error
  const PoiSpec bad{{10, 32, 32}, 10};
  CHECK_THROWS_AS(icgn_refine(pair.volume, pair.volume, bad, WarpParams{}, params), DomainError);
}

TEST_CASE("run_dvc on identical volumes returns a zero field") {
  const auto pair = fixture(43);
  DvcParams params;
  params.grid_step = 8;
  params.subvolume_half_size = 10;
  params.search_radius = 2;
  const GridSpec grid = make_grid(pair.volume.dims(), params);
  const DisplacementField field = run_dvc(pair.volume, pair.volume, grid, params);
  for (std::int64_t i = 0; i < grid.node_count(); ++i) {
    CHECK(field.status[std::size_t(i)] == NodeStatus::Converged);
    CHECK(std::abs(field.disp[std::size_t(i)].x) < 1e-6);
    CHECK(std::abs(field.disp[std::size_t(i)].y) < 1e-6);
    CHECK(std::abs(field.disp[std::size_t(i)].z) < 1e-6);
  }
}

TEST_CASE("run_dvc recovers a rigid translation within 0.05 voxel") {
  const auto pair = fixture(47);
  const Volume def = translated(pair, {3.3, -1.7, 2.5}, 1.0);
  DvcParams params;
  params.grid_step = 8;
  params.subvolume_half_size = 10;
  params.search_radius = 5;
  const GridSpec grid = make_grid(pair.volume.dims(), params);
  const DisplacementField field = run_dvc(pair.volume, def, grid, params);

  const Vec3d truth{3.3, -1.7, 2.5};
  Vec3d mean{0, 0, 0};
  std::int64_t good = 0;
  for (std::int64_t i = 0; i < grid.node_count(); ++i) {
    REQUIRE(field.status[std::size_t(i)] == NodeStatus::Converged);
    mean += field.disp[std::size_t(i)] - truth;
    ++good;
  }
  CHECK(good == grid.node_count());
  for (int c = 0; c < 3; ++c) CHECK(std::abs(mean[c] / double(good)) < 0.05);
}

TEST_CASE("run_dvc output is identical across worker counts") {
  const auto pair = fixture(53);
  const Volume def = translated(pair, {1.4, 0.6, -0.9}, 2.0);
  DvcParams params;
  params.grid_step = 8;
  params.subvolume_half_size = 8;
  params.search_radius = 3;
  const GridSpec grid = make_grid(pair.volume.dims(), params);

  set_worker_count(1);
  const DisplacementField a = run_dvc(pair.volume, def, grid, params);
  set_worker_count(8);
  const DisplacementField b = run_dvc(pair.volume, def, grid, params);
  set_worker_count(0);

  for (std::size_t i = 0; i < a.disp.size(); ++i) {
    CHECK(a.disp[i].x == b.disp[i].x);
    CHECK(a.disp[i].y == b.disp[i].y);
    CHECK(a.disp[i].z == b.disp[i].z);
    CHECK(a.zncc[i] == b.zncc[i]);
    CHECK(a.status[i] == b.status[i]);
  }
}

TEST_CASE("a predictor extends the reach of a small search window") {
  const auto pair = fixture(59);
  const Volume def = translated(pair, {12.2, 0, 0});
  DvcParams params;
  params.grid_step = 8;
  params.subvolume_half_size = 8;
  params.search_radius = 2;
  GridSpec grid;
  grid.origin = {24, 24, 24};
  grid.step = 8;
  grid.counts = {2, 2, 2};

  const DisplacementField blind = run_dvc(pair.volume, def, grid, params);
  std::int64_t low = 0;
  for (auto s : blind.status) low += s == NodeStatus::LowCorrelation;
  CHECK(low == grid.node_count());  // peak is outside the blind window

  struct Constant : Predictor {
    Vec3d displacement_at(Vec3d) const override { return {12.0, 0.0, 0.0}; }
  } seed;
  const DisplacementField seeded = run_dvc(pair.volume, def, grid, params, &seed);
  for (std::int64_t i = 0; i < grid.node_count(); ++i) {
    CHECK(seeded.status[std::size_t(i)] == NodeStatus::Converged);
    CHECK(std::abs(seeded.disp[std::size_t(i)].x - 12.2) < 0.05);
  }
}

TEST_CASE("nodes whose subvolume leaves the reference are marked, not fatal") {
  const auto pair = fixture(61);
  DvcParams params;
  params.grid_step = 8;
  params.subvolume_half_size = 10;
  params.search_radius = 1;
  GridSpec grid;
  grid.origin = {4, 32, 32};  // first node has no room for the subvolume
  grid.step = 28;
  grid.counts = {2, 1, 1};
  const DisplacementField field = run_dvc(pair.volume, pair.volume, grid, params);
  CHECK(field.status[0] == NodeStatus::OutOfBounds);
  CHECK(field.status[1] == NodeStatus::Converged);
}

TEST_CASE("translation error shrinks as the subvolume grows") {
  const auto pair = fixture(67);
  const Volume def = translated(pair, {1.3, -0.4, 0.8});
  DvcParams params;
  params.grid_step = 8;
  params.search_radius = 2;
  const Vec3d truth{1.3, -0.4, 0.8};
  double prev = 1e9;
  for (int half : {5, 10, 15}) {
    params.subvolume_half_size = half;
    GridSpec grid;
    grid.origin = {28, 28, 28};
    grid.step = 8;
    grid.counts = {2, 2, 2};
    const DisplacementField field = run_dvc(pair.volume, def, grid, params);
    double err = 0.0;
    for (const auto& d : field.disp) err += (d - truth).norm();
    err /= double(field.disp.size());
    CHECK(err < prev + 1e-12);
    prev = err;
  }
  CHECK(prev < 0.02);
}

TEST_CASE("paper defaults pass validation and size the grid bookkeeping") {
  DvcParams params;  // step 10, subvolume 141^3 (half 70)
  CHECK(params.grid_step == 10);
  CHECK(params.subvolume_half_size == 70);
  CHECK_NOTHROW(params.validate());
  const GridSpec g = make_grid({2000, 2000, 3000}, params);
  CHECK(g.step == 10);
  CHECK(g.counts.x == (2000 - 1 - 2 * 76) / 10 + 1);
  CHECK(g.counts.z == (3000 - 1 - 2 * 76) / 10 + 1);
  // every node subvolume (plus margin) stays inside
  CHECK(g.origin.x >= 76);
  CHECK(g.origin.x + (g.counts.x - 1) * g.step <= 2000 - 1 - 76);
}

}  // TEST_SUITE
