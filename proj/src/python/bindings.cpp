#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dvc/correct.hpp"
#include "dvc/correlate.hpp"
#include "dvc/field_io.hpp"
#include "dvc/field_ops.hpp"
#include "dvc/parallel.hpp"
#include "dvc/residual.hpp"
#include "dvc/synth.hpp"
#include "dvc/volume.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

// numpy arrays are exchanged in (z, y, x) index order, matching the x-fastest
// storage layout.
dvc::Volume volume_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr,
                              const std::string& dtype) {
  if (arr.ndim() != 3) throw dvc::ConfigError("volume array must be 3-D (z, y, x)");
  const dvc::Vec3i dims{arr.shape(2), arr.shape(1), arr.shape(0)};
  std::vector<float> data(arr.data(), arr.data() + arr.size());
  return dvc::Volume(dims, dvc::dtype_from_name(dtype), std::move(data));
}

py::array_t<float> volume_to_array(const dvc::Volume& v) {
  py::array_t<float> arr({v.dims().z, v.dims().y, v.dims().x});
  std::copy(v.data().begin(), v.data().end(), arr.mutable_data());
  return arr;
}

dvc::LabelVolume labels_from_array(
    py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() != 3) throw dvc::ConfigError("label array must be 3-D (z, y, x)");
  const dvc::Vec3i dims{arr.shape(2), arr.shape(1), arr.shape(0)};
  std::vector<std::uint8_t> data(arr.data(), arr.data() + arr.size());
  return dvc::LabelVolume(dims, std::move(data));
}

py::array_t<std::uint8_t> labels_to_array(const dvc::LabelVolume& v) {
  py::array_t<std::uint8_t> arr({v.dims().z, v.dims().y, v.dims().x});
  std::copy(v.labels().begin(), v.labels().end(), arr.mutable_data());
  return arr;
}

dvc::Vec3d vec3d_from_seq(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

py::dict field_to_dict(const dvc::DisplacementField& f) {
  const auto n = f.grid.node_count();
  py::array_t<double> disp({n, std::int64_t(3)});
  py::array_t<double> zncc(n);
  py::array_t<int> iters(n);
  py::list status;
  for (std::int64_t i = 0; i < n; ++i) {
    disp.mutable_at(i, 0) = f.disp[std::size_t(i)].x;
    disp.mutable_at(i, 1) = f.disp[std::size_t(i)].y;
    disp.mutable_at(i, 2) = f.disp[std::size_t(i)].z;
    zncc.mutable_at(i) = f.zncc[std::size_t(i)];
    iters.mutable_at(i) = f.iterations[std::size_t(i)];
    status.append(dvc::node_status_name(f.status[std::size_t(i)]));
  }
  py::dict g;
  g["origin"] = std::array<std::int64_t, 3>{f.grid.origin.x, f.grid.origin.y, f.grid.origin.z};
  g["step"] = f.grid.step;
  g["counts"] = std::array<std::int64_t, 3>{f.grid.counts.x, f.grid.counts.y, f.grid.counts.z};
  py::dict d;
  d["grid"] = g;
  d["disp"] = disp;
  d["zncc"] = zncc;
  d["status"] = status;
  d["iterations"] = iters;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "digital volume correlation toolkit with displacement-field self-correction";

  py::register_exception<dvc::Error>(m, "DvcError");

  m.def("set_worker_count", &dvc::set_worker_count, "n"_a);

  py::class_<dvc::Volume>(m, "Volume")
      .def(py::init(&volume_from_array), "array"_a, "dtype"_a = "f32")
      .def_property_readonly("dims",
                             [](const dvc::Volume& v) {
                               return std::array<std::int64_t, 3>{v.dims().x, v.dims().y,
                                                                  v.dims().z};
                             })
      .def_property_readonly("dtype",
                             [](const dvc::Volume& v) { return dvc::dtype_name(v.dtype()); })
      .def("to_numpy", &volume_to_array);

  py::class_<dvc::LabelVolume>(m, "LabelVolume")
      .def(py::init(&labels_from_array), "array"_a)
      .def("to_numpy", &labels_to_array);

  m.def("load_volume", [](const std::filesystem::path& p) { return dvc::load_volume(p); }, "path"_a);
  m.def("save_volume", [](const dvc::Volume& v, const std::filesystem::path& p) { dvc::save_volume(v, p); },
        "volume"_a, "path"_a);

  m.def(
      "sample",
      [](const dvc::Volume& v, std::array<double, 3> p, const std::string& mode) {
        return dvc::sample(v, vec3d_from_seq(p),
                           mode == "tricubic" ? dvc::SampleMode::Tricubic
                                              : dvc::SampleMode::Trilinear);
      },
      "volume"_a, "point"_a, "mode"_a = "tricubic",
      "Interpolated gray at a continuous (x, y, z) coordinate.");
  m.def(
      "gradient",
      [](const dvc::Volume& v, std::array<std::int64_t, 3> p) {
        const dvc::Vec3d g = dvc::gradient(v, {p[0], p[1], p[2]});
        return std::array<double, 3>{g.x, g.y, g.z};
      },
      "volume"_a, "point"_a);
  m.def("histogram", &dvc::histogram, "volume"_a, "bins"_a);

  py::class_<dvc::GrayInterval>(m, "GrayInterval")
      .def(py::init([](double lo, double hi, int label) {
             return dvc::GrayInterval{lo, hi, label};
           }),
           "lo"_a, "hi"_a, "label"_a)
      .def_readwrite("lo", &dvc::GrayInterval::lo)
      .def_readwrite("hi", &dvc::GrayInterval::hi)
      .def_readwrite("label", &dvc::GrayInterval::label);

  m.def(
      "threshold_segment",
      [](const dvc::Volume& v, const std::vector<dvc::GrayInterval>& ivs) {
        return dvc::threshold_segment(v, ivs);
      },
      "volume"_a, "intervals"_a);
  m.def("component_mean", &dvc::component_mean, "volume"_a, "labels"_a, "label"_a);

  m.def(
      "zncc",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
         py::array_t<double, py::array::c_style | py::array::forcecast> b) {
        return dvc::zncc({a.data(), std::size_t(a.size())}, {b.data(), std::size_t(b.size())});
      },
      "a"_a, "b"_a, "Zero-mean normalized cross-correlation of two sample sets.");

  py::class_<dvc::DvcParams>(m, "DvcParams")
      .def(py::init<>())
      .def_readwrite("grid_step", &dvc::DvcParams::grid_step)
      .def_readwrite("subvolume_half_size", &dvc::DvcParams::subvolume_half_size)
      .def_readwrite("search_radius", &dvc::DvcParams::search_radius)
      .def_readwrite("max_iterations", &dvc::DvcParams::max_iterations)
      .def_readwrite("convergence_tol", &dvc::DvcParams::convergence_tol)
      .def_readwrite("zncc_accept", &dvc::DvcParams::zncc_accept);

  py::class_<dvc::GridSpec>(m, "GridSpec")
      .def(py::init([](std::array<std::int64_t, 3> origin, std::int64_t step,
                       std::array<std::int64_t, 3> counts) {
             return dvc::GridSpec{{origin[0], origin[1], origin[2]},
                                  step,
                                  {counts[0], counts[1], counts[2]}};
           }),
           "origin"_a, "step"_a, "counts"_a)
      .def_readwrite("step", &dvc::GridSpec::step);

  py::class_<dvc::DisplacementField>(m, "DisplacementField")
      .def("to_dict", &field_to_dict)
      .def_property_readonly("node_count",
                             [](const dvc::DisplacementField& f) { return f.grid.node_count(); });

  m.def("make_grid",
        [](std::array<std::int64_t, 3> dims, const dvc::DvcParams& p) {
          return dvc::make_grid({dims[0], dims[1], dims[2]}, p);
        },
        "dims"_a, "params"_a);

  m.def(
      "run_dvc",
      [](const dvc::Volume& ref, const dvc::Volume& def, const dvc::GridSpec& grid,
         const dvc::DvcParams& params) {
        py::gil_scoped_release release;
        return dvc::run_dvc(ref, def, grid, params, nullptr);
      },
      "ref"_a, "deformed"_a, "grid"_a, "params"_a);

  m.def(
      "detect_outliers",
      [](const dvc::DisplacementField& f, double eps0, double thresh) {
        const auto flags = dvc::detect_outliers(f, eps0, thresh);
        py::array_t<std::uint8_t> arr(std::int64_t(flags.size()));
        std::copy(flags.begin(), flags.end(), arr.mutable_data());
        return arr;
      },
      "field"_a, "eps0"_a = 0.1, "thresh"_a = 2.0);
  m.def(
      "repair_field",
      [](const dvc::DisplacementField& f,
         py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> flags) {
        return dvc::repair_field(f, {flags.data(), std::size_t(flags.size())});
      },
      "field"_a, "flags"_a);
  m.def(
      "densify_sample",
      [](const dvc::DisplacementField& f,
         py::array_t<double, py::array::c_style | py::array::forcecast> pts) {
        if (pts.ndim() != 2 || pts.shape(1) != 3)
          throw dvc::ConfigError("points must be (n, 3)");
        const dvc::DenseField dense = dvc::densify(f);
        py::array_t<double> out({pts.shape(0), py::ssize_t(3)});
        for (py::ssize_t i = 0; i < pts.shape(0); ++i) {
          const dvc::Vec3d u = dense({pts.at(i, 0), pts.at(i, 1), pts.at(i, 2)});
          out.mutable_at(i, 0) = u.x;
          out.mutable_at(i, 1) = u.y;
          out.mutable_at(i, 2) = u.z;
        }
        return out;
      },
      "field"_a, "points"_a,
      "Cubic-spline dense displacement sampled at (x, y, z) voxel coordinates.");
  m.def("compose", &dvc::compose, "total"_a, "increment"_a);
  m.def(
      "accumulate",
      [](const std::vector<dvc::DisplacementField>& fields) {
        return dvc::accumulate(fields);
      },
      "increments"_a);

  py::class_<dvc::StrainField>(m, "StrainField")
      .def_property_readonly("eeq",
                             [](const dvc::StrainField& s) {
                               py::array_t<double> arr(std::int64_t(s.eeq.size()));
                               std::copy(s.eeq.begin(), s.eeq.end(), arr.mutable_data());
                               return arr;
                             })
      .def_property_readonly("tensor", [](const dvc::StrainField& s) {
        py::array_t<double> arr({std::int64_t(s.strain.size()), std::int64_t(6)});
        for (std::size_t i = 0; i < s.strain.size(); ++i)
          for (int c = 0; c < 6; ++c) arr.mutable_at(std::int64_t(i), c) = s.strain[i][std::size_t(c)];
        return arr;
      });

  m.def("strain_from_field", &dvc::strain_from_field, "field"_a, "window"_a = 1);
  m.def(
      "equivalent_strain",
      [](std::array<double, 6> e) { return dvc::equivalent_strain(e); },
      "components"_a, "Equivalent (octahedral) strain from (ex, ey, ez, exy, eyz, ezx).");

  m.def(
      "warp_volume",
      [](const dvc::Volume& ref, const dvc::DisplacementField& field, double fill) {
        const dvc::DenseField dense = dvc::densify(field);
        py::gil_scoped_release release;
        dvc::WarpedVolume w = dvc::warp_volume(ref, dense, fill);
        return std::pair(std::move(w.vol), std::move(w.valid));
      },
      "ref"_a, "field"_a, "fill"_a = 0.0);

  py::class_<dvc::SegmentationSpec>(m, "SegmentationSpec")
      .def(py::init([](std::vector<dvc::GrayInterval> ref_iv,
                       std::vector<dvc::GrayInterval> def_iv, int a, int b) {
             return dvc::SegmentationSpec{std::move(ref_iv), std::move(def_iv), a, b};
           }),
           "ref_intervals"_a, "def_intervals"_a, "component_a"_a = 1, "component_b"_a = 2);

  m.def("accuracy_index", &dvc::accuracy_index, "mean_corrected"_a, "g1"_a, "g2"_a);

  m.def(
      "evaluate_field_residual",
      [](const dvc::Volume& ref, const dvc::Volume& def, const dvc::DisplacementField& f,
         const dvc::SegmentationSpec& seg, double fill) {
        py::gil_scoped_release release;
        const dvc::FieldEvaluation ev = dvc::evaluate_field_residual(ref, def, f, seg, fill);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["mean_r"] = ev.stats.mean_r;
        d["mean_r_corrected"] = ev.stats.mean_corrected;
        d["mean_abs_r_corrected"] = ev.stats.mean_abs_corrected;
        d["voxel_count"] = ev.stats.count;
        d["r0"] = ev.noise.pooled;
        d["g1"] = ev.g1;
        d["g2"] = ev.g2;
        d["p"] = ev.p;
        return d;
      },
      "ref"_a, "deformed"_a, "field"_a, "segmentation"_a, "fill"_a = 0.0);

  m.def(
      "self_correct",
      [](const dvc::Volume& ref, const dvc::Volume& def, const dvc::DisplacementField& f,
         const dvc::DvcParams& params, const dvc::SegmentationSpec& seg, int max_passes,
         double min_gain, double fill) {
        dvc::CorrectionSettings settings;
        settings.max_passes = max_passes;
        settings.min_gain = min_gain;
        settings.fill = fill;
        py::gil_scoped_release release;
        auto [field, report] = dvc::self_correct(ref, def, f, params, seg, settings);
        py::gil_scoped_acquire acquire;
        py::list passes;
        for (const auto& p : report.passes) {
          py::dict d;
          d["mean_abs_increment"] = p.mean_abs_increment;
          d["mean_abs_r_corrected_before"] = p.before.mean_abs_corrected;
          d["mean_abs_r_corrected_after"] = p.after.mean_abs_corrected;
          d["p_before"] = p.p_before;
          d["p_after"] = p.p_after;
          d["low_correlation_before"] = p.low_correlation_before;
          d["low_correlation_after"] = p.low_correlation_after;
          passes.append(d);
        }
        py::dict rep;
        rep["passes"] = passes;
        rep["best_pass"] = report.best_pass;
        return std::pair(std::move(field), rep);
      },
      "ref"_a, "deformed"_a, "field"_a, "params"_a, "segmentation"_a, "max_passes"_a = 3,
      "min_gain"_a = 0.02, "fill"_a = 0.0);

  m.def("save_field",
        [](const dvc::DisplacementField& f, const std::filesystem::path& p) {
          dvc::save_field(f, p);
        },
        "field"_a, "path"_a);
  m.def("load_field", [](const std::filesystem::path& p) { return dvc::load_field(p); }, "path"_a);

  // synthetic fixtures
  py::class_<dvc::synth::SpeckleSpec>(m, "SpeckleSpec")
      .def(py::init<>())
      .def_property(
          "dims",
          [](const dvc::synth::SpeckleSpec& s) {
            return std::array<std::int64_t, 3>{s.dims.x, s.dims.y, s.dims.z};
          },
          [](dvc::synth::SpeckleSpec& s, std::array<std::int64_t, 3> d) {
            s.dims = {d[0], d[1], d[2]};
          })
      .def_readwrite("matrix_mean", &dvc::synth::SpeckleSpec::matrix_mean)
      .def_readwrite("matrix_std", &dvc::synth::SpeckleSpec::matrix_std)
      .def_readwrite("particle_mean", &dvc::synth::SpeckleSpec::particle_mean)
      .def_readwrite("particle_std", &dvc::synth::SpeckleSpec::particle_std)
      .def_readwrite("particle_radius_min", &dvc::synth::SpeckleSpec::particle_radius_min)
      .def_readwrite("particle_radius_max", &dvc::synth::SpeckleSpec::particle_radius_max)
      .def_readwrite("particle_volume_fraction",
                     &dvc::synth::SpeckleSpec::particle_volume_fraction)
      .def_readwrite("smoothing_radius", &dvc::synth::SpeckleSpec::smoothing_radius)
      .def_readwrite("seed", &dvc::synth::SpeckleSpec::seed);

  m.def(
      "generate_speckle",
      [](const dvc::synth::SpeckleSpec& spec) {
        auto pair = dvc::synth::generate_speckle(spec);
        return std::pair(std::move(pair.volume), std::move(pair.labels));
      },
      "spec"_a);

  m.def("analytic_field_from_json", &dvc::synth::analytic_field_from_json, "text"_a);

  m.def(
      "deform_volume",
      [](const dvc::Volume& vol, const std::string& field_json, double noise_std,
         const std::map<int, double>& drift, const dvc::LabelVolume& labels,
         std::uint64_t seed) {
        const auto field = dvc::synth::analytic_field_from_json(field_json);
        py::gil_scoped_release release;
        return dvc::synth::deform_volume(vol, field, noise_std, drift, labels, seed);
      },
      "volume"_a, "field_json"_a, "noise_std"_a, "gray_drift"_a, "labels"_a, "seed"_a = 0);

  m.def(
      "evaluate_analytic_field",
      [](const std::string& field_json,
         py::array_t<double, py::array::c_style | py::array::forcecast> pts) {
        const auto field = dvc::synth::analytic_field_from_json(field_json);
        if (pts.ndim() != 2 || pts.shape(1) != 3)
          throw dvc::ConfigError("points must be (n, 3)");
        py::array_t<double> disp({pts.shape(0), py::ssize_t(3)});
        for (py::ssize_t i = 0; i < pts.shape(0); ++i) {
          const dvc::Vec3d u = field.displacement({pts.at(i, 0), pts.at(i, 1), pts.at(i, 2)});
          disp.mutable_at(i, 0) = u.x;
          disp.mutable_at(i, 1) = u.y;
          disp.mutable_at(i, 2) = u.z;
        }
        return disp;
      },
      "field_json"_a, "points"_a);
}
