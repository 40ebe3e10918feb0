#include "dvc/field.hpp"

namespace dvc {

const char* node_status_name(NodeStatus s) {
  switch (s) {
    case NodeStatus::Converged: return "Converged";
    case NodeStatus::IntegerOnly: return "IntegerOnly";
    case NodeStatus::Diverged: return "Diverged";
    case NodeStatus::OutOfBounds: return "OutOfBounds";
    case NodeStatus::LowCorrelation: return "LowCorrelation";
    case NodeStatus::Repaired: return "Repaired";
  }
  return "?";
}

NodeStatus node_status_from_name(const std::string& name) {
  if (name == "Converged") return NodeStatus::Converged;
  if (name == "IntegerOnly") return NodeStatus::IntegerOnly;
  if (name == "Diverged") return NodeStatus::Diverged;
  if (name == "OutOfBounds") return NodeStatus::OutOfBounds;
  if (name == "LowCorrelation") return NodeStatus::LowCorrelation;
  if (name == "Repaired") return NodeStatus::Repaired;
  throw Error("unknown node status: " + name);
}

int node_status_strength(NodeStatus s) {
  switch (s) {
    case NodeStatus::Converged: return 5;
    case NodeStatus::Repaired: return 4;
    case NodeStatus::IntegerOnly: return 3;
    case NodeStatus::Diverged: return 2;
    case NodeStatus::LowCorrelation: return 1;
    case NodeStatus::OutOfBounds: return 0;
  }
  return 0;
}

DisplacementField DisplacementField::zeros(const GridSpec& grid) {
  if (grid.step < 1) throw ConfigError("grid step must be >= 1");
  if (grid.counts.x < 1 || grid.counts.y < 1 || grid.counts.z < 1)
    throw ConfigError("grid counts must be >= 1");
  DisplacementField f;
  f.grid = grid;
  const std::size_t n = std::size_t(grid.node_count());
  f.disp.assign(n, Vec3d{0, 0, 0});
  f.zncc.assign(n, 1.0);
  f.status.assign(n, NodeStatus::Converged);
  f.iterations.assign(n, 0);
  return f;
}

void DisplacementField::validate() const {
  const std::size_t n = std::size_t(grid.node_count());
  if (disp.size() != n || zncc.size() != n || status.size() != n || iterations.size() != n)
    throw Error("displacement field arrays do not match grid counts");
  for (std::size_t i = 0; i < n; ++i)
    if (node_usable(status[i]) && !all_finite(disp[i]))
      throw Error("converged/repaired node holds a non-finite displacement");
}

}  // namespace dvc
