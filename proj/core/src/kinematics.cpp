#include "wallkin/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "wallkin/error.hpp"

namespace wallkin {

Decomposition decompose_displacement(const Vec3& d, const Vec3& n) {
  if (std::abs(n.norm() - 1.0) > 1e-9) throw_validation("decompose_displacement: normal is not unit length");
  Decomposition out;
  out.u_normal = d.dot(n);
  out.tangential = d - out.u_normal * n;
  return out;
}

double strain_at_point(double u_normal, double radius) {
  if (!(radius > 0.0)) throw_validation("strain_at_point: radius must be positive");
  return u_normal / radius;
}

Vec3 green_tensor(double eps) {
  if (!(eps > -1.0)) throw_validation("green_tensor: eps must exceed -1");
  const double s = 1.0 + eps;
  return {0.5 / (s * s) - 0.5, 0.5 * s * s - 0.5, 0.0};
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw_validation("percentile: empty input");
  if (!(p >= 0.0 && p <= 100.0)) throw_validation("percentile: p must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted)
    if (std::isnan(v)) throw_validation("percentile: NaN in input");
  std::sort(sorted.begin(), sorted.end());
  const double rank = static_cast<double>(sorted.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ChannelStats summary_stats(std::span<const double> values) {
  if (values.empty()) throw_validation("summary_stats: empty input");
  ChannelStats s;
  s.count = values.size();
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sample_std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

WallKinematics compute_wall_kinematics(const PointCloud& cloud, const DisplacementFn& field,
                                       const KinematicsOptions& opts) {
  if (!cloud.has_normals()) throw_validation("compute_wall_kinematics: cloud has no normals");
  if (!cloud.has_radius()) throw_validation("compute_wall_kinematics: cloud has no radii");
  if (opts.sign != 1.0 && opts.sign != -1.0) throw_validation("compute_wall_kinematics: sign must be +1 or -1");
  const auto n = cloud.size();
  WallKinematics k;
  k.points = cloud.points;
  k.normals = cloud.normals;
  k.radius = cloud.radius;
  k.valid = cloud.valid;
  k.displacement.assign(n, Vec3::Zero());
  k.u_normal.assign(n, 0.0);
  k.t_magnitude.assign(n, 0.0);
  k.strain.assign(n, 0.0);
  k.green.assign(n, Vec3::Zero());
  for (std::size_t p = 0; p < n; ++p) {
    if (!k.valid[p]) continue;
    if (!(k.radius[p] > 0.0)) {
      k.valid[p] = 0;
      continue;
    }
    const Vec3 d = opts.sign * field(cloud.points[p]);
    const auto dec = decompose_displacement(d, cloud.normals[p]);
    k.displacement[p] = d;
    k.u_normal[p] = dec.u_normal;
    k.t_magnitude[p] = dec.tangential.norm();
    k.strain[p] = strain_at_point(dec.u_normal, k.radius[p]);
    k.green[p] = green_tensor(k.strain[p]);
  }
  return k;
}

namespace {

void check_frame(const PointCloud& cloud, const Geometry& geom, const char* what) {
  const Vec3 lo = geom.origin - 0.5 * geom.spacing;
  const Vec3 hi = geom.far_corner() + 0.5 * geom.spacing;
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const Vec3& x = cloud.points[p];
    if ((x.array() < lo.array()).any() || (x.array() > hi.array()).any()) {
      throw_validation(std::string("compute_wall_kinematics: frame mismatch, point ") +
                       std::to_string(p) + " lies outside the " + what + " domain");
    }
  }
}

}  // namespace

WallKinematics compute_wall_kinematics(const PointCloud& cloud, const ControlGrid& field,
                                       const KinematicsOptions& opts) {
  check_frame(cloud, field.anchor(), "control grid");
  return compute_wall_kinematics(
      cloud, [&](const Vec3& p) { return interpolate_displacement(field, p); }, opts);
}

WallKinematics compute_wall_kinematics(const PointCloud& cloud, const VectorVolume3& field,
                                       const KinematicsOptions& opts) {
  check_frame(cloud, field.geometry, "displacement field");
  return compute_wall_kinematics(cloud, [&](const Vec3& p) { return field.sample(p); }, opts);
}

KinematicsSummary summarize(const WallKinematics& kin, const KinematicsOptions& opts) {
  std::vector<double> mag, un, tm, st, err, ett;
  for (std::size_t p = 0; p < kin.size(); ++p) {
    if (!kin.valid[p]) continue;
    mag.push_back(kin.displacement[p].norm());
    un.push_back(kin.u_normal[p]);
    tm.push_back(kin.t_magnitude[p]);
    st.push_back(kin.strain[p]);
    err.push_back(kin.green[p].x());
    ett.push_back(kin.green[p].y());
  }
  if (mag.empty()) throw_validation("summarize: no valid points");
  KinematicsSummary s;
  s.signed_percentiles = opts.signed_percentiles;
  s.valid_count = mag.size();
  s.invalid_count = kin.size() - mag.size();
  s.magnitude = summary_stats(mag);
  s.u_normal = summary_stats(un);
  s.t_magnitude = summary_stats(tm);
  s.strain = summary_stats(st);
  s.E_rr = summary_stats(err);
  s.E_tt = summary_stats(ett);
  auto pct = [&](std::vector<double> v) {
    if (!opts.signed_percentiles)
      for (double& x : v) x = std::abs(x);
    return percentile(v, opts.percentile);
  };
  s.U_o = pct(mag);
  s.u_o = pct(un);
  s.eps_o = pct(st);
  return s;
}

PointCloud to_point_cloud(const WallKinematics& kin) {
  PointCloud c;
  c.points = kin.points;
  c.normals = kin.normals;
  c.radius = kin.radius;
  c.valid = kin.valid;
  const auto n = kin.size();
  std::array<std::vector<double>, 3> d;
  std::vector<double> err(n), ett(n);
  for (auto& ch : d) ch.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    for (int a = 0; a < 3; ++a) d[a][p] = kin.displacement[p][a];
    err[p] = kin.green[p].x();
    ett[p] = kin.green[p].y();
  }
  c.set_attribute("disp_x", d[0]);
  c.set_attribute("disp_y", d[1]);
  c.set_attribute("disp_z", d[2]);
  c.set_attribute("u_normal", kin.u_normal);
  c.set_attribute("t_magnitude", kin.t_magnitude);
  c.set_attribute("strain", kin.strain);
  c.set_attribute("E_rr", err);
  c.set_attribute("E_tt", ett);
  return c;
}

WallKinematics from_point_cloud(const PointCloud& cloud) {
  auto need = [&](const char* name) -> const std::vector<double>& {
    const auto* a = cloud.find_attribute(name);
    if (!a) throw_validation(std::string("kinematics cloud lacks channel '") + name + "'");
    return *a;
  };
  if (!cloud.has_normals() || !cloud.has_radius()) {
    throw_validation("kinematics cloud lacks normals or radius");
  }
  WallKinematics k;
  k.points = cloud.points;
  k.normals = cloud.normals;
  k.radius = cloud.radius;
  k.valid = cloud.valid;
  const auto& dx = need("disp_x");
  const auto& dy = need("disp_y");
  const auto& dz = need("disp_z");
  const auto& err = need("E_rr");
  const auto& ett = need("E_tt");
  k.u_normal = need("u_normal");
  k.t_magnitude = need("t_magnitude");
  k.strain = need("strain");
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    k.displacement.emplace_back(dx[p], dy[p], dz[p]);
    k.green.emplace_back(err[p], ett[p], 0.0);
  }
  return k;
}

namespace {

nlohmann::ordered_json stats_json(const ChannelStats& s) {
  return {{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"sample_std", s.sample_std},
          {"count", s.count}};
}

}  // namespace

std::string summary_to_json(const KinematicsSummary& s) {
  nlohmann::ordered_json j;
  j["U_o_mm"] = s.U_o;
  j["u_o_mm"] = s.u_o;
  j["eps_o"] = s.eps_o;
  j["percentiles"] = s.signed_percentiles ? "signed" : "absolute";
  j["valid_count"] = s.valid_count;
  j["invalid_count"] = s.invalid_count;
  j["channels"] = {{"displacement_magnitude", stats_json(s.magnitude)},
                   {"u_normal", stats_json(s.u_normal)},
                   {"t_magnitude", stats_json(s.t_magnitude)},
                   {"strain", stats_json(s.strain)},
                   {"E_rr", stats_json(s.E_rr)},
                   {"E_tt", stats_json(s.E_tt)}};
  return j.dump(2);
}

void save_summary_json(const KinematicsSummary& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_io("cannot write " + path.string());
  out << summary_to_json(s) << '\n';
}

}  // namespace wallkin
