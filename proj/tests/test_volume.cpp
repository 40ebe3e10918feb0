#include <doctest.h>

#include <cstring>
#include <fstream>
#include <numeric>

#include "dvc/synth.hpp"
#include "dvc/volume.hpp"
#include "test_util.hpp"

using namespace dvc;

TEST_SUITE("volume") {

TEST_CASE("construction enforces the invariants") {
  CHECK_THROWS_AS(Volume({0, 4, 4}, Dtype::U8, {}), Error);
  CHECK_THROWS_AS(Volume({2, 2, 2}, Dtype::U8, std::vector<float>(7, 0.f)), Error);
  CHECK_THROWS_AS(Volume({2, 2, 2}, Dtype::U8, std::vector<float>(8, 300.f)), Error);
  CHECK_THROWS_AS(Volume({2, 2, 2}, Dtype::U8, std::vector<float>(8, 3.5f)), Error);
  CHECK_NOTHROW(Volume({2, 2, 2}, Dtype::U8, std::vector<float>(8, 255.f)));
}

TEST_CASE("save/load round-trips u8 bit-exactly") {
  testutil::TempDir tmp("vol_u8");
  auto vol = testutil::make_volume({4, 4, 4}, [](double x, double y, double z) {
    return std::fmod(31.0 * x + 7.0 * y + 3.0 * z, 256.0);
  }, Dtype::U8);
  const auto path = tmp.path() / "a.vol";
  save_volume(vol, path);
  const Volume back = load_volume(path);
  CHECK(back.dims() == vol.dims());
  CHECK(back.dtype() == Dtype::U8);
  CHECK(std::equal(back.data().begin(), back.data().end(), vol.data().begin()));
}

TEST_CASE("save/load round-trips f32 bit patterns") {
  testutil::TempDir tmp("vol_f32");
  std::vector<float> data = {0.f, -1.5f, 3.14159f, 1e-30f, 2.4e8f, -0.f, 7.f, 255.9f};
  const Volume vol({2, 2, 2}, Dtype::F32, data);
  const auto path = tmp.path() / "b.vol";
  save_volume(vol, path);
  const Volume back = load_volume(path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t a, b;
    std::memcpy(&a, &data[i], 4);
    const float bv = back.data()[i];
    std::memcpy(&b, &bv, 4);
    CHECK(a == b);
  }
}

TEST_CASE("non-finite f32 data is rejected on save") {
  testutil::TempDir tmp("vol_nan");
  std::vector<float> data(8, 0.f);
  data[3] = std::numeric_limits<float>::quiet_NaN();
  const Volume vol({2, 2, 2}, Dtype::F32, data);
  CHECK_THROWS_AS(save_volume(vol, tmp.path() / "c.vol"), IoError);
}

TEST_CASE("payload size mismatch is an error") {
  testutil::TempDir tmp("vol_short");
  const auto path = tmp.path() / "d.vol";
  {
    std::ofstream hdr(path.string() + ".json");
    hdr << R"({"dims":[4,4,4],"dtype":"u8","spacing":[1,1,1]})";
    std::ofstream payload(path, std::ios::binary);
    std::vector<char> bytes(60, 1);
    payload.write(bytes.data(), std::int64_t(bytes.size()));
  }
  CHECK_THROWS_AS(load_volume(path), IoError);
}

TEST_CASE("missing or corrupt header is an error") {
  testutil::TempDir tmp("vol_hdr");
  const auto path = tmp.path() / "e.vol";
  {
    std::ofstream payload(path, std::ios::binary);
    payload << "xxxx";
  }
  CHECK_THROWS_AS(load_volume(path), IoError);
  CHECK_THROWS_AS(parse_volume_header("{not json"), IoError);
  CHECK_THROWS_AS(parse_volume_header(R"({"dims":[4,4],"dtype":"u8"})"), IoError);
  CHECK_THROWS_AS(parse_volume_header(R"({"dims":[4,4,4],"dtype":"i64"})"), IoError);
}

TEST_CASE("paper-scale header bookkeeping stays in 64-bit") {
  const VolumeHeader h = parse_volume_header(R"({"dims":[2000,2000,3000],"dtype":"u8"})");
  CHECK(h.dims.x == 2000);
  CHECK(expected_payload_bytes(h) == 12'000'000'000LL);
  const VolumeHeader h16 = parse_volume_header(R"({"dims":[2000,2000,3000],"dtype":"u16"})");
  CHECK(expected_payload_bytes(h16) == 24'000'000'000LL);
}

TEST_CASE("saving to an unwritable location fails cleanly") {
  CHECK_THROWS_AS(save_volume(Volume::zeros({2, 2, 2}), "/nonexistent_dir_zz/x.vol"), IoError);
}

TEST_CASE("sampling reproduces stored voxel values at integer coordinates") {
  const auto vol = testutil::make_volume({9, 9, 9}, [](double x, double y, double z) {
    return std::sin(x * 12.9898 + y * 78.233 + z * 37.719) * 100.0;
  });
  for (const auto mode : {SampleMode::Trilinear, SampleMode::Tricubic}) {
    CHECK(sample(vol, {3, 5, 7}, mode) == doctest::Approx(vol.at(3, 5, 7)).epsilon(1e-12));
    CHECK(sample(vol, {1, 1, 1}, mode) == doctest::Approx(vol.at(1, 1, 1)).epsilon(1e-12));
  }
  // trilinear covers the full domain, including the far corner
  CHECK(sample(vol, {8, 8, 8}, SampleMode::Trilinear) == doctest::Approx(vol.at(8, 8, 8)));
  // tricubic boundary of its valid region
  CHECK(sample(vol, {7, 7, 7}, SampleMode::Tricubic) == doctest::Approx(vol.at(7, 7, 7)));
}

TEST_CASE("both modes reproduce linear gray fields") {
  const auto vol =
      testutil::make_volume({8, 8, 8}, [](double x, double, double) { return 2.0 * x; });
  CHECK(sample(vol, {2.5, 1, 1}, SampleMode::Trilinear) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(sample(vol, {2.5, 1, 1}, SampleMode::Tricubic) == doctest::Approx(5.0).epsilon(1e-12));

  const auto affine = testutil::make_volume({8, 8, 8}, [](double x, double y, double z) {
    return 3.0 * x + 2.0 * y + z + 10.0;
  });
  std::mt19937_64 rng(5);
  const auto urand = [&](double lo, double hi) {
    return lo + (hi - lo) * double(rng()) / double(std::mt19937_64::max());
  };
  for (int i = 0; i < 100; ++i) {
    const Vec3d p{urand(1.0, 6.0), urand(1.0, 6.0), urand(1.0, 6.0)};
    const double want = 3.0 * p.x + 2.0 * p.y + p.z + 10.0;
    CHECK(sample(affine, p, SampleMode::Trilinear) == doctest::Approx(want).epsilon(1e-9));
    CHECK(sample(affine, p, SampleMode::Tricubic) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("tricubic agrees with the independent polynomial oracle") {
  const auto pair = dvc::synth::generate_speckle(testutil::small_speckle(11));
  const Volume& vol = pair.volume;
  std::mt19937_64 rng(17);
  const auto urand = [&](double lo, double hi) {
    return lo + (hi - lo) * double(rng()) / double(std::mt19937_64::max());
  };
  for (int i = 0; i < 500; ++i) {
    const Vec3d p{urand(1.0, 62.0), urand(1.0, 62.0), urand(1.0, 62.0)};
    const double a = sample(vol, p, SampleMode::Tricubic);
    const double b = dvc::synth::oracle_tricubic(vol, p);
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
  }
}

TEST_CASE("out-of-domain sampling is an error") {
  const auto vol = testutil::make_volume({6, 6, 6}, [](double, double, double) { return 1.0; });
  CHECK_THROWS_AS(sample(vol, {-0.1, 2, 2}, SampleMode::Trilinear), DomainError);
  CHECK_THROWS_AS(sample(vol, {5.1, 2, 2}, SampleMode::Trilinear), DomainError);
  CHECK_THROWS_AS(sample(vol, {0.5, 2, 2}, SampleMode::Tricubic), DomainError);
  CHECK_THROWS_AS(sample(vol, {4.5, 2, 2}, SampleMode::Tricubic), DomainError);
  CHECK_NOTHROW(sample(vol, {4.0, 2, 2}, SampleMode::Tricubic));
}

TEST_CASE("gradient is exact for linear fields and x^2 at a node") {
  const auto lin = testutil::make_volume({8, 8, 8}, [](double x, double y, double z) {
    return 3.0 * x + 2.0 * y + z;
  });
  for (std::int64_t q = 1; q <= 6; ++q) {
    const Vec3d g = gradient(lin, {q, q, q});
    CHECK(g.x == doctest::Approx(3.0));
    CHECK(g.y == doctest::Approx(2.0));
    CHECK(g.z == doctest::Approx(1.0));
  }
  const auto constant =
      testutil::make_volume({6, 6, 6}, [](double, double, double) { return 42.0; });
  const Vec3d gz = gradient(constant, {2, 2, 2});
  CHECK(gz.x == 0.0);
  CHECK(gz.y == 0.0);
  CHECK(gz.z == 0.0);

  // central difference of x^2 at x=4: ((5^2 - 3^2)/2) = 8
  const auto quad =
      testutil::make_volume({8, 8, 8}, [](double x, double, double) { return x * x; });
  CHECK(gradient(quad, {4, 2, 2}).x == doctest::Approx(8.0));

  CHECK_THROWS_AS(gradient(lin, {0, 3, 3}), DomainError);
  CHECK_THROWS_AS(gradient(lin, {7, 3, 3}), DomainError);
}

TEST_CASE("histogram of constant and two-level volumes") {
  const auto constant = testutil::make_volume(
      {6, 6, 6}, [](double, double, double) { return 80.0; }, Dtype::U8);
  const auto counts = histogram(constant, 256);
  std::int64_t nonzero = 0;
  for (auto c : counts) nonzero += c != 0;
  CHECK(nonzero == 1);
  CHECK(counts[80] == constant.voxel_count());

  const auto twolevel = testutil::make_volume(
      {8, 8, 8}, [](double x, double, double) { return x < 4 ? 50.0 : 200.0; }, Dtype::U8);
  const auto counts2 = histogram(twolevel, 256);
  CHECK(counts2[50] == 256);
  CHECK(counts2[200] == 256);
  CHECK(std::accumulate(counts2.begin(), counts2.end(), std::int64_t(0)) ==
        twolevel.voxel_count());
}

TEST_CASE("histogram is permutation-invariant and sums to the voxel count") {
  const auto pair = dvc::synth::generate_speckle(testutil::small_speckle(3));
  const auto counts = histogram(pair.volume, 64);
  CHECK(std::accumulate(counts.begin(), counts.end(), std::int64_t(0)) ==
        pair.volume.voxel_count());

  std::vector<float> shuffled(pair.volume.data().begin(), pair.volume.data().end());
  std::mt19937_64 rng(2);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const Volume perm(pair.volume.dims(), Dtype::F32, std::move(shuffled));
  CHECK(histogram(perm, 64) == counts);
}

TEST_CASE("two-component speckle histogram is bimodal near the configured means") {
  auto spec = testutil::small_speckle(21);
  spec.smoothing_radius = 0.0;
  const auto pair = dvc::synth::generate_speckle(spec);
  const auto counts = histogram(pair.volume, 64);
  const auto edges = histogram_edges(pair.volume, 64);
  // local maxima of the smoothed-ish histogram nearest the two means
  const auto bin_of = [&](double v) {
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      if (v >= edges[i] && v < edges[i + 1]) return std::int64_t(i);
    return std::int64_t(edges.size()) - 2;
  };
  const std::int64_t b1 = bin_of(105.78), b2 = bin_of(175.17);
  // the mode bins must dominate their surroundings by a clear margin
  std::int64_t peak1 = 0, peak2 = 0;
  for (std::int64_t b = b1 - 2; b <= b1 + 2; ++b) peak1 = std::max(peak1, counts[std::size_t(b)]);
  for (std::int64_t b = b2 - 2; b <= b2 + 2; ++b) peak2 = std::max(peak2, counts[std::size_t(b)]);
  const std::int64_t valley = counts[std::size_t((b1 + b2) / 2)];
  CHECK(peak1 > 4 * valley);
  CHECK(peak2 > 2 * valley);
}

TEST_CASE("threshold segmentation follows the configured intervals") {
  const std::vector<GrayInterval> intervals{{50, 150, 1}, {150, 256, 2}};
  const auto vol = testutil::make_volume(
      {4, 4, 4},
      [](double x, double, double) { return x == 0 ? 100.0 : (x == 1 ? 175.0 : 20.0); },
      Dtype::U8);
  const LabelVolume labels = threshold_segment(vol, intervals);
  CHECK(labels.at(0, 0, 0) == 1);  // gray 100 -> soil
  CHECK(labels.at(1, 0, 0) == 2);  // gray 175 -> quartz
  CHECK(labels.at(2, 0, 0) == 0);  // gray 20 -> excluded

  const std::vector<GrayInterval> overlapping{{50, 150, 1}, {140, 256, 2}};
  CHECK_THROWS_AS(threshold_segment(vol, overlapping), ConfigError);
}

TEST_CASE("re-segmenting a label-rendered volume reproduces the labels") {
  const std::vector<GrayInterval> intervals{{50, 150, 1}, {150, 256, 2}};
  const auto pair = dvc::synth::generate_speckle(testutil::small_speckle(9));
  const LabelVolume first = threshold_segment(pair.volume, intervals);
  // render labels back to gray values inside their own intervals
  std::vector<float> rendered(std::size_t(first.voxel_count()));
  for (std::int64_t i = 0; i < first.voxel_count(); ++i) {
    const int l = first.labels()[std::size_t(i)];
    rendered[std::size_t(i)] = l == 1 ? 100.0f : (l == 2 ? 200.0f : 0.0f);
  }
  const Volume rendered_vol(first.dims(), Dtype::F32, std::move(rendered));
  const LabelVolume second = threshold_segment(rendered_vol, intervals);
  CHECK(std::equal(first.labels().begin(), first.labels().end(), second.labels().begin()));
}

TEST_CASE("component mean") {
  const auto constant = testutil::make_volume(
      {4, 4, 4}, [](double, double, double) { return 105.78; });
  const LabelVolume all_one(constant.dims(),
                            std::vector<std::uint8_t>(std::size_t(constant.voxel_count()), 1));
  CHECK(component_mean(constant, all_one, 1) == doctest::Approx(105.78));
  CHECK_THROWS_AS(component_mean(constant, all_one, 2), Error);

  const auto halves = testutil::make_volume(
      {4, 4, 4}, [](double, double, double z) { return z < 2 ? 100.0 : 200.0; });
  CHECK(component_mean(halves, all_one, 1) == doctest::Approx(150.0));
}

TEST_CASE("measured component means track generator targets") {
  auto spec = testutil::small_speckle(33);
  spec.smoothing_radius = 0.0;  // boundary mixing would bias the means
  const auto pair = dvc::synth::generate_speckle(spec);
  CHECK(component_mean(pair.volume, pair.labels, 1) == doctest::Approx(105.78).epsilon(0.01));
  CHECK(component_mean(pair.volume, pair.labels, 2) == doctest::Approx(175.17).epsilon(0.01));
  const double m1 = component_mean(pair.volume, pair.labels, 1);
  const double m2 = component_mean(pair.volume, pair.labels, 2);
  CHECK(std::abs(m1 - 105.78) < 1.0);
  CHECK(std::abs(m2 - 175.17) < 1.0);
}

}  // TEST_SUITE
