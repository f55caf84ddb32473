#include "wallkin/cylinder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "wallkin/error.hpp"
#include "wallkin/kdtree.hpp"

namespace wallkin {

void CurvatureParams::validate() const {
  if (k_neighbors < 6) throw_validation("curvature.k_neighbors must be >= 6");
  if (!(axis_cone_deg > 0.0 && axis_cone_deg <= 90.0)) {
    throw_validation("curvature.axis_cone_deg must lie in (0, 90]");
  }
  if (!(inlier_threshold_mm > 0.0)) throw_validation("curvature.inlier_threshold_mm must be > 0");
  if (max_iterations < 1) throw_validation("curvature.max_iterations must be >= 1");
  if (!(r_min_mm > 0.0 && r_max_mm > r_min_mm)) {
    throw_validation("curvature radius bounds must satisfy 0 < r_min < r_max");
  }
  if (!(reference_axis.norm() > 0.0)) throw_validation("curvature.reference_axis must be non-zero");
  if (!(confidence > 0.0 && confidence < 1.0)) throw_validation("curvature.confidence must lie in (0, 1)");
  if (!(min_inlier_fraction >= 0.0 && min_inlier_fraction <= 1.0)) {
    throw_validation("curvature.min_inlier_fraction must lie in [0, 1]");
  }
}

std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double cylinder_residual(const CylinderFit& fit, const Vec3& p) {
  const Vec3 w = p - fit.axis_point;
  const Vec3 q = w - w.dot(fit.axis_dir) * fit.axis_dir;
  return std::abs(q.norm() - fit.radius);
}

namespace {

// Orthonormal pair spanning the plane normal to a.
std::pair<Vec3, Vec3> plane_basis(const Vec3& a) {
  const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = a.cross(helper).normalized();
  return {e1, a.cross(e1)};
}

struct Constraint {
  Vec3 ref;
  double cos_cone;
  double cone_rad;

  // Orients a towards ref, or returns false when it is outside the cone.
  bool admit(Vec3& a) const {
    a.normalize();
    if (a.dot(ref) < 0.0) a = -a;
    return a.dot(ref) >= cos_cone - 1e-12;
  }

  Vec3 project(Vec3 a) const {
    a.normalize();
    if (a.dot(ref) < 0.0) a = -a;
    if (a.dot(ref) >= cos_cone) return a;
    Vec3 perp = a - a.dot(ref) * ref;
    if (perp.norm() < 1e-12) return ref;
    perp.normalize();
    return (std::cos(cone_rad) * ref + std::sin(cone_rad) * perp).normalized();
  }
};

double score_of(std::span<const Vec3> pts, const CylinderFit& fit, double t2, int* inliers) {
  double s = 0.0;
  int n = 0;
  for (const auto& p : pts) {
    const double r = cylinder_residual(fit, p);
    const double r2 = r * r;
    if (r2 < t2) ++n;
    s += std::min(r2, t2);
  }
  if (inliers) *inliers = n;
  return s;
}

// Algebraic (Kasa) circle fit in 2-D; returns false when degenerate.
bool circle_algebraic(const std::vector<Eigen::Vector2d>& xy, Eigen::Vector2d& c, double& r) {
  const auto n = static_cast<Eigen::Index>(xy.size());
  if (n < 3) return false;
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = 2.0 * xy[i].x();
    a(i, 1) = 2.0 * xy[i].y();
    a(i, 2) = 1.0;
    b(i) = xy[i].squaredNorm();
  }
  const Eigen::Vector3d sol = a.colPivHouseholderQr().solve(b);
  if (!sol.allFinite()) return false;
  c = sol.head<2>();
  const double r2 = sol(2) + c.squaredNorm();
  if (!(r2 > 0.0)) return false;
  r = std::sqrt(r2);
  return true;
}

// Geometric circle fit (Gauss-Newton) from an initial guess.
void circle_geometric(const std::vector<Eigen::Vector2d>& xy, Eigen::Vector2d& c, double& r) {
  for (int it = 0; it < 20; ++it) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    for (const auto& p : xy) {
      const Eigen::Vector2d d = p - c;
      const double dist = d.norm();
      if (dist < 1e-12) continue;
      const Eigen::Vector3d j(-d.x() / dist, -d.y() / dist, -1.0);
      const double res = dist - r;
      jtj += j * j.transpose();
      jtr += j * res;
    }
    const Eigen::Vector3d step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) return;
    c += step.head<2>();
    r += step(2);
    if (step.norm() < 1e-12 * (1.0 + std::abs(r))) return;
  }
}

// Gauss-Newton on the axis direction with the centre and radius held fixed.
Vec3 refine_direction(std::span<const Vec3> pts, const Vec3& centre, const Vec3& dir,
                      double radius) {
  Vec3 a = dir;
  for (int it = 0; it < 5; ++it) {
    const auto [e1, e2] = plane_basis(a);
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (const auto& p : pts) {
      const Vec3 w = p - centre;
      const double along = w.dot(a);
      const double dist = std::sqrt(std::max(w.squaredNorm() - along * along, 0.0));
      if (dist < 1e-12) continue;
      const Eigen::Vector2d j(-along * w.dot(e1) / dist, -along * w.dot(e2) / dist);
      jtj += j * j.transpose();
      jtr += j * (dist - radius);
    }
    jtj.diagonal().array() += 1e-9 * (1.0 + jtj.trace());
    const Eigen::Vector2d step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    a = (a + step.x() * e1 + step.y() * e2).normalized();
    if (step.norm() < 1e-12) break;
  }
  return a;
}

// Circle fit of points projected on the plane normal to `dir`, expressed back in 3-D.
bool fit_section(std::span<const Vec3> pts, const Vec3& dir, CylinderFit& fit) {
  const auto [e1, e2] = plane_basis(dir);
  std::vector<Eigen::Vector2d> xy;
  xy.reserve(pts.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  for (const auto& p : pts) {
    const Vec3 w = p - mean;
    xy.emplace_back(w.dot(e1), w.dot(e2));
  }
  const Vec3 w0 = fit.axis_point - mean;
  Eigen::Vector2d c(w0.dot(e1), w0.dot(e2));
  double r = fit.radius;
  if (!(r > 0.0) && !circle_algebraic(xy, c, r)) return false;
  circle_geometric(xy, c, r);
  if (!std::isfinite(r) || !c.allFinite()) return false;
  fit.axis_point = mean + c.x() * e1 + c.y() * e2;
  fit.axis_dir = dir;
  fit.radius = std::abs(r);
  return true;
}

std::vector<Vec3> inliers_of(std::span<const Vec3> pts, const CylinderFit& fit, double t) {
  std::vector<Vec3> in;
  for (const auto& p : pts)
    if (cylinder_residual(fit, p) < t) in.push_back(p);
  return in;
}

bool hypothesis_from_normals(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2,
                             const Constraint& cone, CylinderFit& h) {
  Vec3 a = n1.cross(n2);
  if (a.norm() < 1e-6) return false;
  if (!cone.admit(a)) return false;
  const auto [e1, e2] = plane_basis(a);
  // Normal lines p_i + t_i n_i meet at the axis in the section plane.
  const Eigen::Vector2d q1(p1.dot(e1), p1.dot(e2)), q2(p2.dot(e1), p2.dot(e2));
  Eigen::Vector2d m1(n1.dot(e1), n1.dot(e2)), m2(n2.dot(e1), n2.dot(e2));
  m1.normalize();
  m2.normalize();
  Eigen::Matrix2d lhs;
  lhs << m1.x(), -m2.x(), m1.y(), -m2.y();
  const double det = lhs.determinant();
  if (std::abs(det) < 1e-9) return false;
  const Eigen::Vector2d t = lhs.inverse() * (q2 - q1);
  const Eigen::Vector2d c = 0.5 * ((q1 + t.x() * m1) + (q2 + t.y() * m2));
  h.axis_dir = a;
  h.axis_point = c.x() * e1 + c.y() * e2 + 0.5 * (p1 + p2).dot(a) * a;
  h.radius = 0.5 * ((q1 - c).norm() + (q2 - c).norm());
  return true;
}

bool hypothesis_from_points(std::span<const Vec3> sample, const Constraint& cone, CylinderFit& h) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : sample) mean += p;
  mean /= static_cast<double>(sample.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : sample) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  // The sample's spread along a short patch is often widest around the
  // circumference, so take the principal direction nearest the reference.
  int best = 0;
  for (int c = 1; c < 3; ++c) {
    if (std::abs(es.eigenvectors().col(c).dot(cone.ref)) > std::abs(es.eigenvectors().col(best).dot(cone.ref))) best = c;
  }
  const Vec3 a = cone.project(es.eigenvectors().col(best));
  const auto [e1, e2] = plane_basis(a);
  std::vector<Eigen::Vector2d> xy;
  for (const auto& p : sample) xy.emplace_back((p - mean).dot(e1), (p - mean).dot(e2));
  Eigen::Vector2d c;
  double r = 0.0;
  if (!circle_algebraic(xy, c, r)) return false;
  h.axis_dir = a;
  h.axis_point = mean + c.x() * e1 + c.y() * e2;
  h.radius = r;
  return true;
}

}  // namespace

CylinderFit fit_cylinder_msac(std::span<const Vec3> points, std::span<const Vec3> normals,
                              const CurvatureParams& params) {
  return fit_cylinder_msac(points, normals, params, params.rng_seed);
}

CylinderFit fit_cylinder_msac(std::span<const Vec3> points, std::span<const Vec3> normals,
                              const CurvatureParams& params, std::uint64_t seed) {
  if (points.size() < 6) throw_validation("fit_cylinder_msac: need at least 6 points");
  const bool use_normals = !normals.empty();
  if (use_normals && normals.size() != points.size()) {
    throw_validation("fit_cylinder_msac: normals must match points");
  }
  const double cone_rad = params.axis_cone_deg * std::numbers::pi / 180.0;
  const Constraint cone{params.reference_axis.normalized(), std::cos(cone_rad), cone_rad};
  const double t = params.inlier_threshold_mm;
  const double t2 = t * t;
  const int sample_size = use_normals ? 2 : 5;
  const auto n = points.size();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  CylinderFit best;
  double best_score = std::numeric_limits<double>::infinity();
  int needed = params.max_iterations;
  int it = 0;
  std::array<std::size_t, 5> idx{};
  std::vector<Vec3> sample(sample_size);
  for (; it < params.max_iterations && it < needed; ++it) {
    for (int s = 0; s < sample_size; ++s) {
      bool fresh = false;
      while (!fresh) {
        idx[s] = pick(rng);
        fresh = std::find(idx.begin(), idx.begin() + s, idx[s]) == idx.begin() + s;
      }
    }
    CylinderFit h;
    bool made = false;
    if (use_normals) {
      made = hypothesis_from_normals(points[idx[0]], normals[idx[0]], points[idx[1]],
                                     normals[idx[1]], cone, h);
    } else {
      for (int s = 0; s < sample_size; ++s) sample[s] = points[idx[s]];
      made = hypothesis_from_points(sample, cone, h);
    }
    if (!made || !(h.radius >= params.r_min_mm && h.radius <= params.r_max_mm)) continue;
    int inl = 0;
    const double score = score_of(points, h, t2, &inl);
    if (score < best_score) {
      best_score = score;
      best = h;
      best.ok = true;
      best.inlier_count = inl;
      const double w = static_cast<double>(inl) / static_cast<double>(n);
      const double all_in = std::pow(w, sample_size);
      if (all_in >= 1.0 - 1e-15) {
        needed = it + 1;
      } else if (all_in > 0.0) {
        const double bound = std::log(1.0 - params.confidence) / std::log(1.0 - all_in);
        needed = static_cast<int>(std::min<double>(std::ceil(bound), params.max_iterations));
      }
    }
  }
  if (!best.ok) {
    CylinderFit failed;
    failed.iterations = it;
    return failed;
  }

  CylinderFit fit = best;
  for (int round = 0; round < 3; ++round) {
    const auto in = inliers_of(points, fit, t);
    if (in.size() < 6) break;
    CylinderFit trial = fit;
    if (!fit_section(in, trial.axis_dir, trial)) break;
    trial.axis_dir = cone.project(refine_direction(in, trial.axis_point, trial.axis_dir, trial.radius));
    if (!fit_section(in, trial.axis_dir, trial)) break;
    fit = trial;
  }
  // Put the reported axis point next to the data.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(n);
  fit.axis_point += (mean - fit.axis_point).dot(fit.axis_dir) * fit.axis_dir;

  fit.msac_score = score_of(points, fit, t2, &fit.inlier_count);
  fit.iterations = it;
  fit.ok = std::isfinite(fit.radius) && fit.radius >= params.r_min_mm && fit.radius <= params.r_max_mm &&
           fit.inlier_count >= params.min_inlier_fraction * static_cast<double>(n);
  return fit;
}

PointCloud radius_of_curvature_field(const PointCloud& cloud, const CurvatureParams& params) {
  params.validate();
  const auto k = static_cast<std::size_t>(params.k_neighbors);
  if (cloud.size() < k) {
    throw_validation("radius_of_curvature_field: cloud has " + std::to_string(cloud.size()) +
                     " points, fewer than k_neighbors = " + std::to_string(k));
  }
  const KdTree tree(cloud.points);
  PointCloud out = cloud;
  out.radius.assign(cloud.size(), 0.0);
  std::vector<std::uint8_t> fitted(cloud.size(), 0);
  std::vector<std::vector<std::size_t>> neighbours(cloud.size());
  std::vector<Vec3> pts(k), nrm;
  if (cloud.has_normals()) nrm.resize(k);
  std::size_t failures = 0;
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    neighbours[p] = tree.knn(cloud.points[p], k);
    if (!cloud.valid[p]) {
      ++failures;
      continue;
    }
    for (std::size_t q = 0; q < k; ++q) {
      pts[q] = cloud.points[neighbours[p][q]];
      if (cloud.has_normals()) nrm[q] = cloud.normals[neighbours[p][q]];
    }
    const auto fit = fit_cylinder_msac(pts, nrm, params, split_seed(params.rng_seed, p));
    if (fit.ok) {
      out.radius[p] = fit.radius;
      fitted[p] = 1;
    } else {
      ++failures;
    }
  }
  if (2 * failures > cloud.size()) {
    throw_numeric("radius_of_curvature_field: " + std::to_string(failures) + " of " +
                  std::to_string(cloud.size()) + " cylinder fits failed");
  }
  std::vector<double> pool;
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    if (fitted[p]) continue;
    pool.clear();
    for (auto q : neighbours[p])
      if (fitted[q]) pool.push_back(out.radius[q]);
    if (pool.empty()) {
      out.valid[p] = 0;
      continue;
    }
    const auto mid = pool.begin() + static_cast<std::ptrdiff_t>(pool.size() / 2);
    std::nth_element(pool.begin(), mid, pool.end());
    double median = *mid;
    if (pool.size() % 2 == 0) median = 0.5 * (median + *std::max_element(pool.begin(), mid));
    out.radius[p] = median;
    out.valid[p] = cloud.valid[p];
  }
  // A point whose own normal was unusable stays invalid even when filled.
  return out;
}

}  // namespace wallkin
