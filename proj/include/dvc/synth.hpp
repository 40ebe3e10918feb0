#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dvc/vec3.hpp"
#include "dvc/volume.hpp"

namespace dvc::synth {

// Two-component synthetic speckle: spherical particles (label 2) in a matrix
// (label 1), per-component Gaussian gray, optional band-limiting blur.
struct SpeckleSpec {
  Vec3i dims{64, 64, 64};
  double matrix_mean = 105.78;
  double matrix_std = 8.0;
  double particle_mean = 175.17;
  double particle_std = 8.0;
  double particle_radius_min = 3.0;
  double particle_radius_max = 6.0;
  double particle_volume_fraction = 0.2;
  double smoothing_radius = 1.0;
  std::uint64_t seed = 1;
};

struct SpecklePair {
  Volume volume;
  LabelVolume labels;
};

// Deterministic for a fixed seed (the RNG stream order is part of the
// contract). Errors if the requested volume fraction cannot be placed.
SpecklePair generate_speckle(const SpeckleSpec& spec);

// Analytic displacement fields with closed-form gradients; the ground truth
// for correlation and strain tests.
enum class FieldKind : std::uint8_t { Translation, Affine, Sinusoid, GaussianShearBand };

struct AnalyticField {
  FieldKind kind = FieldKind::Translation;

  // translation / affine
  Vec3d translation{0, 0, 0};
  std::array<std::array<double, 3>, 3> matrix{};  // displacement gradient
  Vec3d center{0, 0, 0};                          // affine: u = t + B (x - center)

  // sinusoid: u_i = amplitude * sin(2*pi*(x_i + phase_i) / period)
  double amplitude = 0.0;
  double period = 64.0;
  Vec3d phase{0, 0, 0};

  // shear band: slip * 0.5 * tanh(((x - center) . normal) / width) along slip_dir
  Vec3d band_normal{1, 0, 0};
  Vec3d slip_dir{0, 0, 1};
  double band_width = 6.0;
  double slip = 0.0;

  Vec3d displacement(Vec3d p) const;
  std::array<std::array<double, 3>, 3> displacement_gradient(Vec3d p) const;

  // Peak equivalent strain of the shear band: slip / (2*sqrt(3)*width).
  double shear_band_peak_equivalent_strain() const;

  // Rejects parameters for which x -> x - u(x) is not invertible (affine with
  // singular I - B, sinusoid with slope >= 1, non-orthogonal band vectors).
  void validate_invertible() const;
};

struct FieldSample {
  Vec3d displacement;
  std::array<std::array<double, 3>, 3> gradient;
};

std::vector<FieldSample> evaluate_field(const AnalyticField& field,
                                        std::span<const Vec3d> points);

// Renders the deformed state: out(x) = vol(x - field(x)) via this module's own
// tricubic sampler, then per-component gray drift (keyed by source label) and
// Gaussian noise. A deliberately separate interpolation code path from
// dvc::sample so the two can cross-check each other.
Volume deform_volume(const Volume& vol, const AnalyticField& field, double noise_std,
                     const std::map<int, double>& gray_drift, const LabelVolume& labels,
                     std::uint64_t noise_seed = 0);

// Tricubic evaluation through an explicit local monomial polynomial: builds
// the 64 coefficients of the Catmull-Rom patch around p and Horner-evaluates.
double oracle_tricubic(const Volume& vol, Vec3d p);

// JSON forms used by fixture specs and the CLI.
SpeckleSpec speckle_spec_from_json(const std::string& text);
std::string speckle_spec_json(const SpeckleSpec& spec);
AnalyticField analytic_field_from_json(const std::string& text);
std::string analytic_field_json(const AnalyticField& field);

}  // namespace dvc::synth
