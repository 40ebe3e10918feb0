#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "dvc/field.hpp"
#include "dvc/synth.hpp"
#include "dvc/volume.hpp"

namespace testutil {

// Converged field holding the analytic displacement at every node.
inline dvc::DisplacementField field_from_analytic(const dvc::GridSpec& grid,
                                                  const dvc::synth::AnalyticField& f) {
  dvc::DisplacementField out = dvc::DisplacementField::zeros(grid);
  for (std::int64_t iz = 0; iz < grid.counts.z; ++iz)
    for (std::int64_t iy = 0; iy < grid.counts.y; ++iy)
      for (std::int64_t ix = 0; ix < grid.counts.x; ++ix) {
        const std::int64_t i = grid.index(ix, iy, iz);
        out.disp[std::size_t(i)] = f.displacement(dvc::to_vec3d(grid.node(ix, iy, iz)));
      }
  return out;
}

inline dvc::Volume make_volume(dvc::Vec3i dims,
                               const std::function<double(double, double, double)>& fn,
                               dvc::Dtype dtype = dvc::Dtype::F32) {
  std::vector<float> data(std::size_t(dims.x * dims.y * dims.z));
  std::size_t i = 0;
  for (std::int64_t z = 0; z < dims.z; ++z)
    for (std::int64_t y = 0; y < dims.y; ++y)
      for (std::int64_t x = 0; x < dims.x; ++x)
        data[i++] = float(fn(double(x), double(y), double(z)));
  return dvc::Volume(dims, dtype, std::move(data));
}

inline dvc::synth::SpeckleSpec small_speckle(std::uint64_t seed = 7) {
  dvc::synth::SpeckleSpec spec;
  spec.dims = {64, 64, 64};
  spec.matrix_mean = 105.78;
  spec.matrix_std = 8.0;
  spec.particle_mean = 175.17;
  spec.particle_std = 8.0;
  spec.particle_radius_min = 3.0;
  spec.particle_radius_max = 6.0;
  spec.particle_volume_fraction = 0.2;
  spec.smoothing_radius = 1.0;
  spec.seed = seed;
  return spec;
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("dvctk_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
