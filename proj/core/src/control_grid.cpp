#include "wallkin/control_grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wallkin/config.hpp"
#include "wallkin/error.hpp"
#include "wallkin/filters.hpp"

namespace wallkin {
namespace fs = std::filesystem;

ControlGrid::ControlGrid(const Geometry& anchor, const Index3& spacing_voxels)
    : anchor_(anchor), spacing_voxels_(spacing_voxels) {
  anchor_.validate();
  for (int a = 0; a < 3; ++a) {
    if (spacing_voxels_[a] < 1) throw_validation("control spacing must be >= 1 voxel");
    const int span = anchor_.dims[a] - 1;
    grid_dims_[a] = (span + spacing_voxels_[a] - 1) / spacing_voxels_[a] + 1;
  }
  displacements_.assign(static_cast<std::size_t>(grid_dims_[0]) * grid_dims_[1] * grid_dims_[2],
                        Vec3::Zero());
}

double ControlGrid::max_displacement() const {
  double m = 0.0;
  for (const auto& d : displacements_) m = std::max(m, d.norm());
  return m;
}

Vec3 interpolate_displacement(const ControlGrid& g, const Vec3& p) {
  const Vec3 u = (p - g.anchor().origin).cwiseQuotient(g.spacing_mm());
  const auto cell = detail::locate_cell(g.grid_dims(), u);
  const double fx = cell.frac.x(), fy = cell.frac.y(), fz = cell.frac.z();
  const auto& d = g.displacements();
  const Vec3 c00 = d[cell.offsets[0]] + fx * (d[cell.offsets[1]] - d[cell.offsets[0]]);
  const Vec3 c10 = d[cell.offsets[2]] + fx * (d[cell.offsets[3]] - d[cell.offsets[2]]);
  const Vec3 c01 = d[cell.offsets[4]] + fx * (d[cell.offsets[5]] - d[cell.offsets[4]]);
  const Vec3 c11 = d[cell.offsets[6]] + fx * (d[cell.offsets[7]] - d[cell.offsets[6]]);
  const Vec3 c0 = c00 + fy * (c10 - c00);
  const Vec3 c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

VectorVolume3 dense_field(const ControlGrid& g, const Geometry& geom) {
  if (!geom.matches(g.anchor())) {
    throw_validation("dense_field: geometry does not match the control grid anchor");
  }
  VectorVolume3 out(geom);
  for (int k = 0; k < geom.dims[2]; ++k)
    for (int j = 0; j < geom.dims[1]; ++j)
      for (int i = 0; i < geom.dims[0]; ++i)
        out.set(geom.linear(i, j, k), interpolate_displacement(g, geom.center(i, j, k)));
  return out;
}

ControlGrid resample_grid(const ControlGrid& coarse, const Geometry& fine,
                          const Index3& spacing_voxels) {
  ControlGrid out(fine, spacing_voxels);
  const auto& gd = out.grid_dims();
  for (int c = 0; c < gd[2]; ++c)
    for (int b = 0; b < gd[1]; ++b)
      for (int a = 0; a < gd[0]; ++a)
        out.at(a, b, c) = interpolate_displacement(coarse, out.node_position(a, b, c));
  return out;
}

namespace {

std::string join3(const Vec3& v) {
  std::ostringstream os;
  os.precision(17);
  os << v.x() << ' ' << v.y() << ' ' << v.z();
  return os.str();
}

std::string join3(const Index3& v) {
  return std::to_string(v[0]) + ' ' + std::to_string(v[1]) + ' ' + std::to_string(v[2]);
}

}  // namespace

void save_control_grid(const ControlGrid& g, const fs::path& path) {
  fs::path raw = path;
  raw.replace_extension(".raw");
  if (raw == path) raw += ".raw";
  {
    std::vector<double> buf(3 * g.size());
    for (std::size_t m = 0; m < g.size(); ++m)
      for (int c = 0; c < 3; ++c) buf[3 * m + c] = g.displacements()[m][c];
    std::ofstream out(raw, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot write " + raw.string());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!out) throw_io("write failed for " + raw.string());
  }
  std::ofstream hdr(path, std::ios::trunc);
  if (!hdr) throw_io("cannot write " + path.string());
  hdr << "# wallkin control grid\n"
      << "kind = control_grid\n"
      << "grid_dims = " << join3(g.grid_dims()) << '\n'
      << "spacing_voxels = " << join3(g.spacing_voxels()) << '\n'
      << "anchor_dims = " << join3(g.anchor().dims) << '\n'
      << "anchor_spacing_mm = " << join3(g.anchor().spacing) << '\n'
      << "anchor_origin_mm = " << join3(g.anchor().origin) << '\n'
      << "data_file = " << raw.filename().string() << '\n';
  if (!hdr) throw_io("write failed for " + path.string());
}

ControlGrid load_control_grid(const fs::path& path) {
  const auto kv = KeyValues::parse_file(path);
  if (kv.get_string("kind", "") != "control_grid") throw_io(path.string() + ": not a control grid header");
  Geometry anchor;
  anchor.dims = kv.get_index3("anchor_dims");
  anchor.spacing = kv.get_vec3("anchor_spacing_mm");
  anchor.origin = kv.get_vec3("anchor_origin_mm");
  ControlGrid g(anchor, kv.get_index3("spacing_voxels"));
  if (g.grid_dims() != kv.get_index3("grid_dims")) {
    throw_io(path.string() + ": grid_dims inconsistent with anchor and spacing");
  }
  fs::path raw = kv.get_string("data_file");
  if (raw.is_relative()) raw = path.parent_path() / raw;
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw_io("cannot open " + raw.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != 3 * g.size() * sizeof(double)) throw_io(raw.string() + ": size mismatch");
  std::vector<double> buf(3 * g.size());
  std::memcpy(buf.data(), bytes.data(), bytes.size());
  for (std::size_t m = 0; m < g.size(); ++m) g.displacements()[m] = Vec3(buf[3 * m], buf[3 * m + 1], buf[3 * m + 2]);
  return g;
}

}  // namespace wallkin
