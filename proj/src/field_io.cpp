#include "dvc/field_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace dvc {

using nlohmann::json;

namespace {

std::filesystem::path sidecar(const std::filesystem::path& p) {
  std::filesystem::path s = p;
  s += ".json";
  return s;
}

json grid_to_json(const GridSpec& g) {
  return json{{"origin", {g.origin.x, g.origin.y, g.origin.z}},
              {"step", g.step},
              {"counts", {g.counts.x, g.counts.y, g.counts.z}}};
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  const auto& o = j.at("origin");
  const auto& c = j.at("counts");
  g.origin = {o[0].get<std::int64_t>(), o[1].get<std::int64_t>(), o[2].get<std::int64_t>()};
  g.step = j.at("step").get<std::int64_t>();
  g.counts = {c[0].get<std::int64_t>(), c[1].get<std::int64_t>(), c[2].get<std::int64_t>()};
  return g;
}

json params_to_json(const DvcParams& p) {
  return json{{"grid_step", p.grid_step},
              {"subvolume_half_size", p.subvolume_half_size},
              {"search_radius", p.search_radius},
              {"max_iterations", p.max_iterations},
              {"convergence_tol", p.convergence_tol},
              {"zncc_accept", p.zncc_accept}};
}

DvcParams params_from_json(const json& j) {
  DvcParams p;
  p.grid_step = j.value("grid_step", p.grid_step);
  p.subvolume_half_size = j.value("subvolume_half_size", p.subvolume_half_size);
  p.search_radius = j.value("search_radius", p.search_radius);
  p.max_iterations = j.value("max_iterations", p.max_iterations);
  p.convergence_tol = j.value("convergence_tol", p.convergence_tol);
  p.zncc_accept = j.value("zncc_accept", p.zncc_accept);
  return p;
}

}  // namespace

std::string dvc_params_json(const DvcParams& p) { return params_to_json(p).dump(2) + "\n"; }

DvcParams dvc_params_from_json(const std::string& text) {
  try {
    return params_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad DVC params JSON: ") + e.what());
  }
}

void save_field(const DisplacementField& field, const std::filesystem::path& csv_path,
                const std::optional<DvcParams>& params) {
  field.validate();
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw IoError("cannot write field: " + csv_path.string());
  out << "ix,iy,iz,x,y,z,u,v,w,zncc,status,iters\n";
  char buf[360];
  const GridSpec& g = field.grid;
  for (std::int64_t iz = 0; iz < g.counts.z; ++iz)
    for (std::int64_t iy = 0; iy < g.counts.y; ++iy)
      for (std::int64_t ix = 0; ix < g.counts.x; ++ix) {
        const std::int64_t i = g.index(ix, iy, iz);
        const Vec3i p = g.node(ix, iy, iz);
        const Vec3d d = field.disp[std::size_t(i)];
        std::snprintf(buf, sizeof buf,
                      "%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64
                      ",%.17g,%.17g,%.17g,%.17g,%s,%d\n",
                      ix, iy, iz, p.x, p.y, p.z, d.x, d.y, d.z, field.zncc[std::size_t(i)],
                      node_status_name(field.status[std::size_t(i)]),
                      field.iterations[std::size_t(i)]);
        out << buf;
      }
  if (!out) throw IoError("write failed: " + csv_path.string());
  out.close();

  json meta;
  meta["grid"] = grid_to_json(field.grid);
  if (params) meta["params"] = params_to_json(*params);
  std::map<std::string, std::int64_t> counts;
  for (auto s : field.status) ++counts[node_status_name(s)];
  meta["status_counts"] = counts;
  std::ofstream side(sidecar(csv_path), std::ios::trunc);
  if (!side) throw IoError("cannot write field sidecar: " + sidecar(csv_path).string());
  side << meta.dump(2) << "\n";
}

DisplacementField load_field(const std::filesystem::path& csv_path) {
  std::ifstream side(sidecar(csv_path));
  if (!side) throw IoError("missing field sidecar: " + sidecar(csv_path).string());
  json meta;
  try {
    side >> meta;
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt field sidecar: ") + e.what());
  }
  DisplacementField field = DisplacementField::zeros(grid_from_json(meta.at("grid")));

  std::ifstream in(csv_path);
  if (!in) throw IoError("missing field file: " + csv_path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("ix,iy,iz", 0) != 0)
    throw IoError("bad field CSV header: " + csv_path.string());
  std::int64_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() != 12) throw IoError("bad field CSV row: " + line);
    const std::int64_t ix = std::stoll(cols[0]);
    const std::int64_t iy = std::stoll(cols[1]);
    const std::int64_t iz = std::stoll(cols[2]);
    if (ix < 0 || iy < 0 || iz < 0 || ix >= field.grid.counts.x || iy >= field.grid.counts.y ||
        iz >= field.grid.counts.z)
      throw IoError("field CSV node index outside grid");
    const std::int64_t i = field.grid.index(ix, iy, iz);
    field.disp[std::size_t(i)] = {std::stod(cols[6]), std::stod(cols[7]), std::stod(cols[8])};
    field.zncc[std::size_t(i)] = std::stod(cols[9]);
    field.status[std::size_t(i)] = node_status_from_name(cols[10]);
    field.iterations[std::size_t(i)] = std::stoi(cols[11]);
    ++rows;
  }
  if (rows != field.grid.node_count()) throw IoError("field CSV row count does not match grid");
  field.validate();
  return field;
}

std::optional<DvcParams> load_field_params(const std::filesystem::path& csv_path) {
  std::ifstream side(sidecar(csv_path));
  if (!side) return std::nullopt;
  json meta;
  try {
    side >> meta;
  } catch (const json::exception&) {
    return std::nullopt;
  }
  if (!meta.contains("params")) return std::nullopt;
  return params_from_json(meta["params"]);
}

void save_strain(const StrainField& strain, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw IoError("cannot write strain: " + csv_path.string());
  out << "ix,iy,iz,ex,ey,ez,exy,eyz,ezx,eeq\n";
  char buf[360];
  const GridSpec& g = strain.grid;
  for (std::int64_t iz = 0; iz < g.counts.z; ++iz)
    for (std::int64_t iy = 0; iy < g.counts.y; ++iy)
      for (std::int64_t ix = 0; ix < g.counts.x; ++ix) {
        const std::int64_t i = g.index(ix, iy, iz);
        const auto& e = strain.strain[std::size_t(i)];
        std::snprintf(buf, sizeof buf,
                      "%" PRId64 ",%" PRId64 ",%" PRId64
                      ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      ix, iy, iz, e[0], e[1], e[2], e[3], e[4], e[5],
                      strain.eeq[std::size_t(i)]);
        out << buf;
      }
  if (!out) throw IoError("write failed: " + csv_path.string());
}

void save_vtk_structured_points(const DisplacementField& field, const StrainField& strain,
                                const std::filesystem::path& path) {
  if (!(field.grid == strain.grid)) throw Error("vtk export: field/strain grid mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vtk: " + path.string());
  const GridSpec& g = field.grid;
  out << "# vtk DataFile Version 3.0\n"
      << "dvctk displacement magnitude and equivalent strain\n"
      << "ASCII\n"
      << "DATASET STRUCTURED_POINTS\n"
      << "DIMENSIONS " << g.counts.x << " " << g.counts.y << " " << g.counts.z << "\n"
      << "ORIGIN " << g.origin.x << " " << g.origin.y << " " << g.origin.z << "\n"
      << "SPACING " << g.step << " " << g.step << " " << g.step << "\n"
      << "POINT_DATA " << g.node_count() << "\n";
  char buf[64];
  out << "SCALARS displacement_magnitude double 1\nLOOKUP_TABLE default\n";
  for (std::int64_t i = 0; i < g.node_count(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g\n", field.disp[std::size_t(i)].norm());
    out << buf;
  }
  out << "SCALARS equivalent_strain double 1\nLOOKUP_TABLE default\n";
  for (std::int64_t i = 0; i < g.node_count(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g\n", strain.eeq[std::size_t(i)]);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dvc
