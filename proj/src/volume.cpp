#include "dvc/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "dvc/interp.hpp"
#include "dvc/parallel.hpp"

namespace dvc {

using nlohmann::json;

const char* dtype_name(Dtype dt) {
  switch (dt) {
    case Dtype::U8: return "u8";
    case Dtype::U16: return "u16";
    case Dtype::F32: return "f32";
  }
  return "?";
}

Dtype dtype_from_name(const std::string& name) {
  if (name == "u8") return Dtype::U8;
  if (name == "u16") return Dtype::U16;
  if (name == "f32") return Dtype::F32;
  throw IoError("unsupported dtype: " + name);
}

std::int64_t dtype_bytes(Dtype dt) {
  switch (dt) {
    case Dtype::U8: return 1;
    case Dtype::U16: return 2;
    case Dtype::F32: return 4;
  }
  return 0;
}

namespace {

void validate_dims(Vec3i dims) {
  if (dims.x < 1 || dims.y < 1 || dims.z < 1)
    throw Error("volume dims must all be >= 1");
}

void validate_values(Vec3i dims, Dtype dtype, const std::vector<float>& data) {
  if (std::int64_t(data.size()) != dims.x * dims.y * dims.z)
    throw Error("volume data length does not match dims");
  if (dtype == Dtype::F32) return;
  const double hi = dtype == Dtype::U8 ? 255.0 : 65535.0;
  for (float v : data) {
    if (!(v >= 0.0f && double(v) <= hi) || v != std::floor(v))
      throw Error("integer-dtype volume holds a value outside the dtype range");
  }
}

}  // namespace

Volume::Volume(Vec3i dims, Dtype dtype, std::vector<float> data, Vec3d spacing)
    : dims_(dims), dtype_(dtype), spacing_(spacing), data_(std::move(data)) {
  validate_dims(dims_);
  validate_values(dims_, dtype_, data_);
}

Volume Volume::zeros(Vec3i dims, Dtype dtype) {
  validate_dims(dims);
  return Volume(dims, dtype, std::vector<float>(std::size_t(dims.x * dims.y * dims.z), 0.0f));
}

LabelVolume::LabelVolume(Vec3i dims, std::vector<std::uint8_t> labels)
    : dims_(dims), labels_(std::move(labels)) {
  validate_dims(dims_);
  if (std::int64_t(labels_.size()) != voxel_count())
    throw Error("label data length does not match dims");
}

// ---- File format -----------------------------------------------------------

VolumeHeader parse_volume_header(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt volume header: ") + e.what());
  }
  VolumeHeader h;
  try {
    const auto& dims = j.at("dims");
    if (!dims.is_array() || dims.size() != 3) throw IoError("header dims must be [nx,ny,nz]");
    h.dims = {dims[0].get<std::int64_t>(), dims[1].get<std::int64_t>(),
              dims[2].get<std::int64_t>()};
    h.dtype = dtype_from_name(j.at("dtype").get<std::string>());
    if (j.contains("spacing")) {
      const auto& sp = j["spacing"];
      if (!sp.is_array() || sp.size() != 3) throw IoError("header spacing must be [sx,sy,sz]");
      h.spacing = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt volume header: ") + e.what());
  }
  if (h.dims.x < 1 || h.dims.y < 1 || h.dims.z < 1) throw IoError("header dims must be >= 1");
  return h;
}

std::string volume_header_json(const VolumeHeader& h) {
  json j;
  j["dims"] = {h.dims.x, h.dims.y, h.dims.z};
  j["dtype"] = dtype_name(h.dtype);
  j["spacing"] = {h.spacing.x, h.spacing.y, h.spacing.z};
  return j.dump(2) + "\n";
}

std::int64_t expected_payload_bytes(const VolumeHeader& h) {
  return h.dims.x * h.dims.y * h.dims.z * dtype_bytes(h.dtype);
}

namespace {

std::filesystem::path header_path(const std::filesystem::path& payload) {
  std::filesystem::path p = payload;
  p += ".json";
  return p;
}

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

}  // namespace

Volume load_volume(const std::filesystem::path& payload_path) {
  std::ifstream hdr(header_path(payload_path));
  if (!hdr) throw IoError("missing volume header: " + header_path(payload_path).string());
  std::string text((std::istreambuf_iterator<char>(hdr)), std::istreambuf_iterator<char>());
  const VolumeHeader h = parse_volume_header(text);

  std::ifstream in(payload_path, std::ios::binary);
  if (!in) throw IoError("cannot open volume payload: " + payload_path.string());
  in.seekg(0, std::ios::end);
  const std::int64_t actual = in.tellg();
  const std::int64_t expected = expected_payload_bytes(h);
  if (actual != expected)
    throw IoError("volume payload size mismatch: header implies " + std::to_string(expected) +
                  " bytes, file has " + std::to_string(actual));
  in.seekg(0);

  const std::int64_t n = h.dims.x * h.dims.y * h.dims.z;
  std::vector<float> data(static_cast<std::size_t>(n));
  switch (h.dtype) {
    case Dtype::U8: {
      std::vector<std::uint8_t> raw(static_cast<std::size_t>(n));
      in.read(reinterpret_cast<char*>(raw.data()), n);
      for (std::int64_t i = 0; i < n; ++i) data[std::size_t(i)] = float(raw[std::size_t(i)]);
      break;
    }
    case Dtype::U16: {
      std::vector<std::uint16_t> raw(static_cast<std::size_t>(n));
      in.read(reinterpret_cast<char*>(raw.data()), n * 2);
      for (std::int64_t i = 0; i < n; ++i) data[std::size_t(i)] = float(raw[std::size_t(i)]);
      break;
    }
    case Dtype::F32: {
      in.read(reinterpret_cast<char*>(data.data()), n * 4);
      break;
    }
  }
  if (!in) throw IoError("short read on volume payload: " + payload_path.string());
  return Volume(h.dims, h.dtype, std::move(data), h.spacing);
}

void save_volume(const Volume& vol, const std::filesystem::path& payload_path) {
  if (vol.dtype() == Dtype::F32) {
    for (float v : vol.data())
      if (!std::isfinite(v)) throw IoError("refusing to save non-finite f32 volume");
  }
  std::ofstream out(payload_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + payload_path.string());
  const std::int64_t n = vol.voxel_count();
  switch (vol.dtype()) {
    case Dtype::U8: {
      std::vector<std::uint8_t> raw(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i)
        raw[std::size_t(i)] = std::uint8_t(vol.data()[std::size_t(i)]);
      out.write(reinterpret_cast<const char*>(raw.data()), n);
      break;
    }
    case Dtype::U16: {
      std::vector<std::uint16_t> raw(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i)
        raw[std::size_t(i)] = std::uint16_t(vol.data()[std::size_t(i)]);
      out.write(reinterpret_cast<const char*>(raw.data()), n * 2);
      break;
    }
    case Dtype::F32: {
      out.write(reinterpret_cast<const char*>(vol.data().data()), n * 4);
      break;
    }
  }
  if (!out) throw IoError("write failed: " + payload_path.string());
  out.close();

  VolumeHeader h{vol.dims(), vol.dtype(), vol.spacing()};
  std::ofstream hdr(header_path(payload_path), std::ios::trunc);
  if (!hdr) throw IoError("cannot write header: " + header_path(payload_path).string());
  hdr << volume_header_json(h);
  if (!hdr) throw IoError("write failed: " + header_path(payload_path).string());
}

LabelVolume load_labels(const std::filesystem::path& payload_path) {
  Volume v = load_volume(payload_path);
  if (v.dtype() != Dtype::U8) throw IoError("label volume must be u8");
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(v.voxel_count()));
  for (std::int64_t i = 0; i < v.voxel_count(); ++i)
    labels[std::size_t(i)] = std::uint8_t(v.data()[std::size_t(i)]);
  return LabelVolume(v.dims(), std::move(labels));
}

void save_labels(const LabelVolume& labels, const std::filesystem::path& payload_path) {
  std::vector<float> data(labels.labels().begin(), labels.labels().end());
  save_volume(Volume(labels.dims(), Dtype::U8, std::move(data)), payload_path);
}

// ---- Sampling --------------------------------------------------------------

bool sample_domain_contains(const Volume& vol, Vec3d p, SampleMode mode) {
  const Vec3i d = vol.dims();
  const double m = mode == SampleMode::Tricubic ? 1.0 : 0.0;
  return p.x >= m && p.x <= double(d.x - 1) - m && p.y >= m && p.y <= double(d.y - 1) - m &&
         p.z >= m && p.z <= double(d.z - 1) - m;
}

double sample(const Volume& vol, Vec3d p, SampleMode mode) {
  if (!all_finite(p) || !sample_domain_contains(vol, p, mode))
    throw DomainError("sample point outside valid region");
  return mode == SampleMode::Tricubic ? tricubic_unchecked(vol, p) : trilinear_unchecked(vol, p);
}

Vec3d gradient(const Volume& vol, Vec3i p) {
  const Vec3i d = vol.dims();
  if (p.x < 1 || p.y < 1 || p.z < 1 || p.x > d.x - 2 || p.y > d.y - 2 || p.z > d.z - 2)
    throw DomainError("gradient point must be at least one voxel inside the domain");
  return {0.5 * (double(vol.at(p.x + 1, p.y, p.z)) - double(vol.at(p.x - 1, p.y, p.z))),
          0.5 * (double(vol.at(p.x, p.y + 1, p.z)) - double(vol.at(p.x, p.y - 1, p.z))),
          0.5 * (double(vol.at(p.x, p.y, p.z + 1)) - double(vol.at(p.x, p.y, p.z - 1)))};
}

// ---- Statistics and segmentation -------------------------------------------

namespace {

std::pair<double, double> histogram_range(const Volume& vol) {
  switch (vol.dtype()) {
    case Dtype::U8: return {0.0, 256.0};
    case Dtype::U16: return {0.0, 65536.0};
    case Dtype::F32: {
      float lo = std::numeric_limits<float>::max();
      float hi = std::numeric_limits<float>::lowest();
      for (float v : vol.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (lo > hi) return {0.0, 1.0};
      if (lo == hi) return {double(lo), double(lo) + 1.0};
      return {double(lo), double(hi)};
    }
  }
  return {0.0, 1.0};
}

}  // namespace

std::vector<std::int64_t> histogram(const Volume& vol, int bins) {
  if (bins < 1) throw ConfigError("histogram needs bins >= 1");
  const auto [lo, hi] = histogram_range(vol);
  const double scale = double(bins) / (hi - lo);
  std::vector<std::int64_t> counts(std::size_t(bins), 0);
  for (float v : vol.data()) {
    std::int64_t b = std::int64_t(std::floor((double(v) - lo) * scale));
    b = std::clamp<std::int64_t>(b, 0, bins - 1);
    ++counts[std::size_t(b)];
  }
  return counts;
}

std::vector<double> histogram_edges(const Volume& vol, int bins) {
  if (bins < 1) throw ConfigError("histogram needs bins >= 1");
  const auto [lo, hi] = histogram_range(vol);
  std::vector<double> edges(std::size_t(bins) + 1);
  for (int i = 0; i <= bins; ++i) edges[std::size_t(i)] = lo + (hi - lo) * double(i) / bins;
  return edges;
}

LabelVolume threshold_segment(const Volume& vol, std::span<const GrayInterval> intervals) {
  std::vector<GrayInterval> sorted(intervals.begin(), intervals.end());
  for (const auto& iv : sorted)
    if (!(iv.lo < iv.hi)) throw ConfigError("gray interval needs lo < hi");
  std::sort(sorted.begin(), sorted.end(),
            [](const GrayInterval& a, const GrayInterval& b) { return a.lo < b.lo; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].lo < sorted[i - 1].hi)
      throw ConfigError("gray intervals overlap");

  const std::int64_t n = vol.voxel_count();
  std::vector<std::uint8_t> labels(std::size_t(n), 0);
  parallel_for(vol.dims().z, [&](std::int64_t z) {
    const std::int64_t plane = vol.dims().x * vol.dims().y;
    for (std::int64_t i = z * plane; i < (z + 1) * plane; ++i) {
      const double g = vol.data()[std::size_t(i)];
      for (const auto& iv : sorted) {
        if (g < iv.lo) break;
        if (g < iv.hi) {
          labels[std::size_t(i)] = std::uint8_t(iv.label);
          break;
        }
      }
    }
  });
  return LabelVolume(vol.dims(), std::move(labels));
}

double component_mean(const Volume& vol, const LabelVolume& labels, int k) {
  if (!(vol.dims() == labels.dims())) throw Error("label dims do not match volume");
  const std::int64_t n = vol.voxel_count();
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (labels.labels()[std::size_t(i)] == k) ++count;
  if (count == 0) throw Error("component " + std::to_string(k) + " is empty");
  const double sum = chunked_sum(n, [&](std::int64_t i) {
    return labels.labels()[std::size_t(i)] == k ? double(vol.data()[std::size_t(i)]) : 0.0;
  });
  return sum / double(count);
}

}  // namespace dvc
