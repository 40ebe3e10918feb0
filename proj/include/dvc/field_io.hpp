#pragma once

#include <filesystem>
#include <optional>

#include "dvc/correlate.hpp"
#include "dvc/field.hpp"

namespace dvc {

// DisplacementField CSV: header ix,iy,iz,x,y,z,u,v,w,zncc,status,iters
// plus a <file>.json sidecar carrying the GridSpec and, when available, the
// DvcParams echo that produced the field.
void save_field(const DisplacementField& field, const std::filesystem::path& csv_path,
                const std::optional<DvcParams>& params = std::nullopt);
DisplacementField load_field(const std::filesystem::path& csv_path);
std::optional<DvcParams> load_field_params(const std::filesystem::path& csv_path);

// StrainField CSV: ix,iy,iz,ex,ey,ez,exy,eyz,ezx,eeq
void save_strain(const StrainField& strain, const std::filesystem::path& csv_path);

// Legacy VTK structured-points export of eeq and |D| on the node grid.
void save_vtk_structured_points(const DisplacementField& field, const StrainField& strain,
                                const std::filesystem::path& path);

// DvcParams as JSON (keys: grid_step, subvolume_half_size, search_radius,
// max_iterations, convergence_tol, zncc_accept).
std::string dvc_params_json(const DvcParams& p);
DvcParams dvc_params_from_json(const std::string& text);

}  // namespace dvc
