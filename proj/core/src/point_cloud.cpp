#include "wallkin/point_cloud.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wallkin/error.hpp"

namespace wallkin {
namespace fs = std::filesystem;

std::size_t PointCloud::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

void PointCloud::set_attribute(const std::string& name, std::vector<double> values) {
  for (auto& [key, vals] : attributes) {
    if (key == name) {
      vals = std::move(values);
      return;
    }
  }
  attributes.emplace_back(name, std::move(values));
}

const std::vector<double>* PointCloud::find_attribute(const std::string& name) const {
  for (const auto& [key, vals] : attributes) {
    if (key == name) return &vals;
  }
  return nullptr;
}

void PointCloud::validate() const {
  const auto n = points.size();
  if (valid.size() != n) throw_validation("point cloud: validity flags do not match point count");
  if (!normals.empty() && normals.size() != n) throw_validation("point cloud: normal count mismatch");
  if (!radius.empty() && radius.size() != n) throw_validation("point cloud: radius count mismatch");
  for (const auto& [name, vals] : attributes) {
    if (vals.size() != n) throw_validation("point cloud: attribute '" + name + "' length mismatch");
  }
  for (const auto& nrm : normals) {
    if (std::abs(nrm.norm() - 1.0) > 1e-9) throw_validation("point cloud: normals must be unit length");
  }
}

namespace {

std::vector<std::string> column_names(const PointCloud& c) {
  std::vector<std::string> cols{"x", "y", "z"};
  if (c.has_normals()) cols.insert(cols.end(), {"nx", "ny", "nz"});
  if (c.has_radius()) cols.push_back("radius");
  cols.push_back("valid");
  for (const auto& [name, vals] : c.attributes) cols.push_back(name);
  return cols;
}

void write_row(std::ostream& os, const PointCloud& c, std::size_t i, char sep) {
  const auto& p = c.points[i];
  os << p.x() << sep << p.y() << sep << p.z();
  if (c.has_normals()) {
    const auto& n = c.normals[i];
    os << sep << n.x() << sep << n.y() << sep << n.z();
  }
  if (c.has_radius()) os << sep << c.radius[i];
  os << sep << static_cast<int>(c.valid[i]);
  for (const auto& [name, vals] : c.attributes) os << sep << vals[i];
  os << '\n';
}

double parse_double(const std::string& tok, const fs::path& path) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    if (tok == "nan") return std::nan("");
    throw_io(path.string() + ": bad number '" + tok + "'");
  }
  return v;
}

PointCloud from_columns(const std::vector<std::string>& cols,
                        const std::vector<std::vector<double>>& rows, const fs::path& path) {
  auto find = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  if (ix < 0 || iy < 0 || iz < 0) throw_io(path.string() + ": missing x/y/z columns");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  const bool has_n = inx >= 0 && iny >= 0 && inz >= 0;
  const int ir = find("radius"), iv = find("valid");
  PointCloud c;
  c.points.reserve(rows.size());
  for (const auto& r : rows) {
    c.points.emplace_back(r[ix], r[iy], r[iz]);
    c.valid.push_back(iv >= 0 ? static_cast<std::uint8_t>(r[iv] != 0.0) : 1);
    if (has_n) c.normals.emplace_back(r[inx], r[iny], r[inz]);
    if (ir >= 0) c.radius.push_back(r[ir]);
  }
  const std::vector<std::string> reserved{"x", "y", "z", "nx", "ny", "nz", "radius", "valid"};
  for (std::size_t col = 0; col < cols.size(); ++col) {
    if (std::find(reserved.begin(), reserved.end(), cols[col]) != reserved.end()) continue;
    std::vector<double> vals;
    vals.reserve(rows.size());
    for (const auto& r : rows) vals.push_back(r[col]);
    c.attributes.emplace_back(cols[col], std::move(vals));
  }
  return c;
}

}  // namespace

void save_ply(const PointCloud& cloud, const fs::path& path) {
  cloud.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw_io("cannot write " + path.string());
  os << "ply\nformat ascii 1.0\ncomment wallkin point cloud, units mm\n";
  os << "element vertex " << cloud.size() << '\n';
  for (const auto& col : column_names(cloud)) {
    os << "property " << (col == "valid" ? "uchar" : "double") << ' ' << col << '\n';
  }
  os << "end_header\n";
  os.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) write_row(os, cloud, i, ' ');
  if (!os) throw_io("write failed for " + path.string());
}

PointCloud load_ply(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "ply") throw_io(path.string() + ": not a PLY file");
  std::vector<std::string> cols;
  std::size_t count = 0;
  bool in_vertex = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw_io(path.string() + ": only ASCII PLY is supported");
    } else if (tag == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (tag == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw_io(path.string() + ": list properties are not supported on vertices");
      cols.push_back(name);
    } else if (tag == "end_header") {
      break;
    }
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw_io(path.string() + ": truncated vertex list");
    std::istringstream ls(line);
    std::vector<double> row;
    for (std::string tok; ls >> tok;) row.push_back(parse_double(tok, path));
    if (row.size() != cols.size()) throw_io(path.string() + ": vertex row has wrong column count");
    rows.push_back(std::move(row));
  }
  return from_columns(cols, rows, path);
}

void save_csv(const PointCloud& cloud, const fs::path& path) {
  cloud.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw_io("cannot write " + path.string());
  const auto cols = column_names(cloud);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) write_row(os, cloud, i, ',');
  if (!os) throw_io("write failed for " + path.string());
}

PointCloud load_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw_io(path.string() + ": empty CSV");
  std::vector<std::string> cols;
  {
    std::istringstream ls(line);
    for (std::string tok; std::getline(ls, tok, ',');) cols.push_back(tok);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    for (std::string tok; std::getline(ls, tok, ',');) row.push_back(parse_double(tok, path));
    if (row.size() != cols.size()) throw_io(path.string() + ": CSV row has wrong column count");
    rows.push_back(std::move(row));
  }
  return from_columns(cols, rows, path);
}

void save_point_cloud(const PointCloud& cloud, const fs::path& path) {
  if (path.extension() == ".csv") return save_csv(cloud, path);
  save_ply(cloud, path);
}

PointCloud load_point_cloud(const fs::path& path) {
  if (path.extension() == ".csv") return load_csv(path);
  return load_ply(path);
}

}  // namespace wallkin
