#include "wallkin/registration.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "wallkin/error.hpp"
#include "wallkin/filters.hpp"
#include "wallkin/parallel.hpp"

namespace wallkin {

void RegistrationConfig::validate() const {
  if (!(lambda >= 0.0)) throw_validation("registration.lambda must be >= 0");
  if (!(lcc_sigma_voxels > 0.0)) throw_validation("registration.lcc_sigma_voxels must be > 0");
  for (int a = 0; a < 3; ++a) {
    if (control_spacing_voxels[a] < 1) throw_validation("registration.control_spacing must be >= 1");
  }
  if (pyramid_levels < 1) throw_validation("registration.pyramid_levels must be >= 1");
  if (max_iterations < 0) throw_validation("registration.max_iterations must be >= 0");
  if (!(gradient_tolerance >= 0.0)) throw_validation("registration.gradient_tolerance must be >= 0");
  if (!(tv_epsilon_mm > 0.0)) throw_validation("registration.tv_epsilon_mm must be > 0");
  if (!(lcc_epsilon > 0.0)) throw_validation("registration.lcc_epsilon must be > 0");
  if (!(presmooth_sigma_voxels >= 0.0)) throw_validation("registration.presmooth_sigma_voxels must be >= 0");
}

namespace {

// Maps each voxel index along one axis to its control cell and local weight.
struct AxisTable {
  std::vector<int> cell;
  std::vector<double> frac;
};

AxisTable make_axis_table(int dims, int spacing, int nodes) {
  AxisTable t;
  t.cell.resize(dims);
  t.frac.resize(dims);
  for (int i = 0; i < dims; ++i) {
    const int c = std::min(i / spacing, nodes - 2);
    t.cell[i] = c;
    t.frac[i] = static_cast<double>(i - c * spacing) / spacing;
  }
  return t;
}

// Fixed chunking for reductions: results never depend on the thread count.
std::size_t reduction_chunks(int slices) { return static_cast<std::size_t>(std::min(slices, 16)); }

}  // namespace

struct LccMetric::Impl {
  Geometry geom;
  std::array<double, 3> sigma{};
  double eps = 0.0;         // fixed-image variance floor
  double eps_moving = 0.0;  // warped-image variance floor
  std::vector<double> fixed, moving, fixed_mean, fixed_var;

  struct Warp {
    std::vector<double> value;
    std::array<std::vector<double>, 3> grad;  // d moving / d x, intensity per mm
  };

  struct Tables {
    std::array<AxisTable, 3> axis;
  };

  Tables tables_for(const ControlGrid& g) const {
    if (!g.anchor().matches(geom)) {
      throw_validation("control grid anchor does not match the image geometry");
    }
    Tables t;
    for (int a = 0; a < 3; ++a) {
      t.axis[a] = make_axis_table(geom.dims[a], g.spacing_voxels()[a], g.grid_dims()[a]);
    }
    return t;
  }

  template <typename Fn>
  void for_each_voxel_weights(const ControlGrid& g, const Tables& t, int k, Fn&& fn) const {
    const auto& gd = g.grid_dims();
    const std::size_t sy = gd[0], sz = static_cast<std::size_t>(gd[0]) * gd[1];
    const int ck = t.axis[2].cell[k];
    const double fz = t.axis[2].frac[k];
    for (int j = 0; j < geom.dims[1]; ++j) {
      const int cj = t.axis[1].cell[j];
      const double fy = t.axis[1].frac[j];
      for (int i = 0; i < geom.dims[0]; ++i) {
        const int ci = t.axis[0].cell[i];
        const double fx = t.axis[0].frac[i];
        const std::size_t o = ck * sz + cj * sy + ci;
        const std::array<std::size_t, 8> nodes{o,      o + 1,      o + sy,      o + sy + 1,
                                               o + sz, o + sz + 1, o + sz + sy, o + sz + sy + 1};
        const std::array<double, 8> w{(1 - fx) * (1 - fy) * (1 - fz), fx * (1 - fy) * (1 - fz),
                                      (1 - fx) * fy * (1 - fz),       fx * fy * (1 - fz),
                                      (1 - fx) * (1 - fy) * fz,       fx * (1 - fy) * fz,
                                      (1 - fx) * fy * fz,             fx * fy * fz};
        fn(i, j, nodes, w);
      }
    }
  }

  Warp warp(const ControlGrid& g, const Tables& t, bool with_gradient) const {
    const std::size_t n = geom.voxel_count();
    Warp out;
    out.value.resize(n);
    if (with_gradient)
      for (auto& c : out.grad) c.resize(n);
    const auto& disp = g.displacements();
    const Vec3 inv_spacing = geom.spacing.cwiseInverse();
    parallel_chunks(geom.dims[2], geom.dims[2], [&](std::size_t kb, std::size_t ke, std::size_t) {
      for (int k = static_cast<int>(kb); k < static_cast<int>(ke); ++k) {
        for_each_voxel_weights(g, t, k, [&](int i, int j, const auto& nodes, const auto& w) {
          Vec3 d = Vec3::Zero();
          for (int q = 0; q < 8; ++q) d += w[q] * disp[nodes[q]];
          const Vec3 idx = Vec3(i, j, k) + d.cwiseProduct(inv_spacing);
          const std::size_t lin = geom.linear(i, j, k);
          if (with_gradient) {
            Vec3 gi;
            out.value[lin] = sample_trilinear_with_gradient(std::span<const double>(moving), geom.dims, idx, gi);
            for (int a = 0; a < 3; ++a) out.grad[a][lin] = gi[a] * inv_spacing[a];
          } else {
            out.value[lin] = sample_trilinear(std::span<const double>(moving), geom.dims, idx);
          }
        });
      }
    });
    return out;
  }

  EnergyGradient run(const ControlGrid& g, bool with_gradient) const {
    const Tables t = tables_for(g);
    const std::size_t n = geom.voxel_count();
    const Warp w = warp(g, t, with_gradient);

    std::vector<double> prod(n), sq(n);
    for (std::size_t x = 0; x < n; ++x) {
      prod[x] = fixed[x] * w.value[x];
      sq[x] = w.value[x] * w.value[x];
    }
    std::vector<double> mean_fj(n), mean_j(n), mean_jj(n);
    smooth_gaussian(prod, mean_fj, geom.dims, sigma);
    smooth_gaussian(w.value, mean_j, geom.dims, sigma);
    smooth_gaussian(sq, mean_jj, geom.dims, sigma);

    // Partial derivatives of cc with respect to <FJ>, <J> and <J^2>.
    std::vector<double> d_fj, d_j, d_jj;
    if (with_gradient) {
      d_fj.resize(n);
      d_j.resize(n);
      d_jj.resize(n);
    }
    const std::size_t plane = static_cast<std::size_t>(geom.dims[0]) * geom.dims[1];
    const std::size_t chunks = reduction_chunks(geom.dims[2]);
    std::vector<double> partial(chunks, 0.0);
    parallel_chunks(geom.dims[2], chunks, [&](std::size_t kb, std::size_t ke, std::size_t c) {
      double acc = 0.0;
      for (std::size_t x = kb * plane; x < ke * plane; ++x) {
        const double a = fixed_var[x];
        const double b = mean_jj[x] - mean_j[x] * mean_j[x] + eps_moving;
        const double num = mean_fj[x] - fixed_mean[x] * mean_j[x];
        const double s = 1.0 / std::sqrt(a * b);
        acc += num * s;
        if (with_gradient) {
          d_fj[x] = s;
          d_j[x] = -fixed_mean[x] * s + num * mean_j[x] * s / b;
          d_jj[x] = -0.5 * num * s / b;
        }
      }
      partial[c] = acc;
    });
    double cc_sum = 0.0;
    for (double p : partial) cc_sum += p;
    const double v = geom.voxel_volume();

    EnergyGradient out;
    out.value = -v * cc_sum;
    if (!with_gradient) return out;

    std::vector<double> t_fj(n), t_j(n), t_jj(n);
    smooth_gaussian_transpose(d_fj, t_fj, geom.dims, sigma);
    smooth_gaussian_transpose(d_j, t_j, geom.dims, sigma);
    smooth_gaussian_transpose(d_jj, t_jj, geom.dims, sigma);

    const auto m = g.size();
    std::vector<std::vector<Vec3>> grad_parts(chunks, std::vector<Vec3>(m, Vec3::Zero()));
    parallel_chunks(geom.dims[2], chunks, [&](std::size_t kb, std::size_t ke, std::size_t c) {
      auto& gp = grad_parts[c];
      for (int k = static_cast<int>(kb); k < static_cast<int>(ke); ++k) {
        for_each_voxel_weights(g, t, k, [&](int i, int j, const auto& nodes, const auto& wts) {
          const std::size_t x = geom.linear(i, j, k);
          const double de_dj = -v * (fixed[x] * t_fj[x] + t_j[x] + 2.0 * w.value[x] * t_jj[x]);
          const Vec3 gm(w.grad[0][x], w.grad[1][x], w.grad[2][x]);
          const Vec3 contrib = de_dj * gm;
          for (int q = 0; q < 8; ++q) gp[nodes[q]] += wts[q] * contrib;
        });
      }
    });
    out.gradient.assign(m, Vec3::Zero());
    for (const auto& gp : grad_parts)
      for (std::size_t q = 0; q < m; ++q) out.gradient[q] += gp[q];
    return out;
  }
};

LccMetric::LccMetric(const Volume3& fixed, const Volume3& moving, const RegistrationConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
  if (!fixed.geometry().matches(moving.geometry())) {
    throw_validation("fixed and moving images must share geometry");
  }
  auto& s = *impl_;
  s.geom = fixed.geometry();
  s.sigma = {cfg.lcc_sigma_voxels, cfg.lcc_sigma_voxels, cfg.lcc_sigma_voxels};
  s.fixed = fixed.to_double();
  s.moving = moving.to_double();
  const auto floor_for = [&](const Volume3& v) {
    const double range = static_cast<double>(v.max_value()) - v.min_value();
    const double e = cfg.lcc_epsilon * range * range;
    return e > 0.0 ? e : cfg.lcc_epsilon;
  };
  s.eps = floor_for(fixed);
  s.eps_moving = floor_for(moving);
  const std::size_t n = s.fixed.size();
  std::vector<double> sq(n);
  for (std::size_t x = 0; x < n; ++x) sq[x] = s.fixed[x] * s.fixed[x];
  s.fixed_mean.resize(n);
  s.fixed_var.resize(n);
  std::vector<double> mean_sq(n);
  smooth_gaussian(s.fixed, s.fixed_mean, s.geom.dims, s.sigma);
  smooth_gaussian(sq, mean_sq, s.geom.dims, s.sigma);
  for (std::size_t x = 0; x < n; ++x) {
    s.fixed_var[x] = mean_sq[x] - s.fixed_mean[x] * s.fixed_mean[x] + s.eps;
  }
}

LccMetric::~LccMetric() = default;
LccMetric::LccMetric(LccMetric&&) noexcept = default;
LccMetric& LccMetric::operator=(LccMetric&&) noexcept = default;

EnergyGradient LccMetric::evaluate(const ControlGrid& g) const { return impl_->run(g, true); }
double LccMetric::value(const ControlGrid& g) const { return impl_->run(g, false).value; }

std::vector<double> LccMetric::warped_moving(const ControlGrid& g) const {
  return impl_->warp(g, impl_->tables_for(g), false).value;
}

EnergyGradient lcc_energy(const Volume3& fixed, const Volume3& moving, const ControlGrid& g,
                          const RegistrationConfig& cfg) {
  return LccMetric(fixed, moving, cfg).evaluate(g);
}

EnergyGradient tv_energy(const ControlGrid& g, double tv_epsilon_mm) {
  const auto& gd = g.grid_dims();
  const Vec3 h = g.spacing_mm();
  const double eta = g.cell_volume();
  const auto& k = g.displacements();
  EnergyGradient out;
  out.gradient.assign(g.size(), Vec3::Zero());
  const double eps2 = tv_epsilon_mm * tv_epsilon_mm;
  double sum = 0.0;
  for (int c = 0; c < gd[2]; ++c) {
    for (int b = 0; b < gd[1]; ++b) {
      for (int a = 0; a < gd[0]; ++a) {
        const std::size_t m = g.linear(a, b, c);
        const std::array<int, 3> at{a, b, c};
        std::array<Vec3, 3> diff;
        std::array<std::size_t, 3> next{};
        std::array<bool, 3> has{};
        double sq = 0.0;
        for (int i = 0; i < 3; ++i) {
          has[i] = at[i] + 1 < gd[i];
          if (!has[i]) {
            diff[i].setZero();
            continue;
          }
          std::array<int, 3> nb = at;
          ++nb[i];
          next[i] = g.linear(nb[0], nb[1], nb[2]);
          diff[i] = (k[next[i]] - k[m]) / h[i];
          sq += diff[i].squaredNorm();
        }
        const double norm = std::sqrt(sq + eps2);
        sum += norm - tv_epsilon_mm;
        for (int i = 0; i < 3; ++i) {
          if (!has[i]) continue;
          const Vec3 d = eta * diff[i] / (norm * h[i]);
          out.gradient[next[i]] += d;
          out.gradient[m] -= d;
        }
      }
    }
  }
  out.value = eta * sum;
  return out;
}

ObjectiveValue objective(const Volume3& fixed, const Volume3& moving, const ControlGrid& g,
                         const RegistrationConfig& cfg) {
  const auto data = lcc_energy(fixed, moving, g, cfg);
  const auto reg = tv_energy(g, cfg.tv_epsilon_mm);
  ObjectiveValue out;
  out.data_term = data.value;
  out.regularizer = reg.value;
  out.total = data.value + cfg.lambda * reg.value;
  out.gradient = data.gradient;
  for (std::size_t m = 0; m < out.gradient.size(); ++m) out.gradient[m] += cfg.lambda * reg.gradient[m];
  return out;
}

namespace {

using Eigen::VectorXd;

VectorXd flatten(const std::vector<Vec3>& v) {
  VectorXd x(3 * v.size());
  for (std::size_t m = 0; m < v.size(); ++m) x.segment<3>(3 * m) = v[m];
  return x;
}

void unflatten(const VectorXd& x, std::vector<Vec3>& v) {
  for (std::size_t m = 0; m < v.size(); ++m) v[m] = x.segment<3>(3 * m);
}

struct Evaluation {
  double data_term = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
  VectorXd gradient;
};

class LevelOptimizer {
 public:
  LevelOptimizer(const LccMetric& metric, const RegistrationConfig& cfg)
      : metric_(metric), cfg_(cfg) {}

  Evaluation evaluate(ControlGrid& g, const VectorXd& x) const {
    unflatten(x, g.displacements());
    const auto data = metric_.evaluate(g);
    const auto reg = tv_energy(g, cfg_.tv_epsilon_mm);
    Evaluation e;
    e.data_term = data.value;
    e.regularizer = reg.value;
    e.total = data.value + cfg_.lambda * reg.value;
    e.gradient = flatten(data.gradient) + cfg_.lambda * flatten(reg.gradient);
    return e;
  }

  // Returns {converged, iterations}.
  std::pair<bool, int> run(ControlGrid& g, int level, std::vector<HistoryEntry>& history) const {
    constexpr int kMemory = 7;
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxBacktracks = 40;
    // Relative objective decrease below which an accepted step counts as a stall.
    constexpr double kStall = 1e-10;

    VectorXd x = flatten(g.displacements());
    Evaluation cur = evaluate(g, x);
    if (!std::isfinite(cur.total) || !cur.gradient.allFinite()) {
      throw_numeric("registration objective is not finite at the initial grid");
    }
    history.push_back({level, 0, cur.data_term, cur.regularizer, cur.total});

    const double g0 = cur.gradient.lpNorm<Eigen::Infinity>();
    const double tol = cfg_.gradient_tolerance * g0;
    if (g0 == 0.0) return {true, 0};
    // First step moves the largest control by half a voxel.
    const double first_step = 0.5 * g.anchor().spacing.minCoeff();

    std::deque<VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    bool converged = false;
    int it = 0;
    while (it < cfg_.max_iterations) {
      const double gmax = cur.gradient.lpNorm<Eigen::Infinity>();
      if (gmax <= tol) {
        converged = true;
        break;
      }
      VectorXd dir;
      if (s_hist.empty()) {
        dir = -cur.gradient * (first_step / gmax);
      } else {
        // Two-loop recursion.
        VectorXd q = cur.gradient;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
          alpha[i] = rho_hist[i] * s_hist[i].dot(q);
          q -= alpha[i] * y_hist[i];
        }
        const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        q *= gamma;
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
          const double beta = rho_hist[i] * y_hist[i].dot(q);
          q += (alpha[i] - beta) * s_hist[i];
        }
        dir = -q;
      }
      double slope = cur.gradient.dot(dir);
      if (!(slope < 0.0)) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        dir = -cur.gradient * (first_step / gmax);
        slope = cur.gradient.dot(dir);
      }

      double step = 1.0;
      bool accepted = false;
      VectorXd x_next;
      Evaluation next;
      for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        x_next = x + step * dir;
        next = evaluate(g, x_next);
        if (std::isfinite(next.total) && next.total <= cur.total + kArmijo * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted || next.total > cur.total) {
        unflatten(x, g.displacements());
        if (!s_hist.empty()) {
          s_hist.clear();
          y_hist.clear();
          rho_hist.clear();
          continue;
        }
        // No descent even along the scaled gradient: stationary to round-off.
        converged = true;
        break;
      }
      if (cur.total - next.total <= kStall * std::max({1.0, std::abs(cur.total), std::abs(next.total)})) {
        unflatten(x, g.displacements());
        if (!s_hist.empty()) {
          s_hist.clear();
          y_hist.clear();
          rho_hist.clear();
          continue;
        }
        // A plain gradient step no longer lowers the objective measurably.
        converged = true;
        break;
      }
      ++it;
      const VectorXd s = x_next - x;
      const VectorXd y = next.gradient - cur.gradient;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        s_hist.push_back(s);
        y_hist.push_back(y);
        rho_hist.push_back(1.0 / sy);
        if (static_cast<int>(s_hist.size()) > kMemory) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho_hist.pop_front();
        }
      }
      x = std::move(x_next);
      cur = std::move(next);
      history.push_back({level, it, cur.data_term, cur.regularizer, cur.total});
    }
    unflatten(x, g.displacements());
    if (!converged && cur.gradient.lpNorm<Eigen::Infinity>() <= tol) converged = true;
    return {converged, it};
  }

 private:
  const LccMetric& metric_;
  const RegistrationConfig& cfg_;
};

bool can_downsample(const Geometry& g) {
  return g.dims[0] >= 4 && g.dims[1] >= 4 && g.dims[2] >= 4;
}

}  // namespace

RegistrationResult register_volumes(const Volume3& fixed, const Volume3& moving,
                                    const RegistrationConfig& cfg) {
  cfg.validate();
  if (!fixed.geometry().matches(moving.geometry())) {
    throw_validation("fixed and moving images must share geometry");
  }
  std::vector<Volume3> fixed_levels, moving_levels;
  if (cfg.presmooth_sigma_voxels > 0.0) {
    const Vec3 sigma = cfg.presmooth_sigma_voxels * fixed.spacing();
    fixed_levels.push_back(gaussian_smooth(fixed, sigma));
    moving_levels.push_back(gaussian_smooth(moving, sigma));
  } else {
    fixed_levels.push_back(fixed);
    moving_levels.push_back(moving);
  }
  for (int l = 1; l < cfg.pyramid_levels && can_downsample(fixed_levels.back().geometry()); ++l) {
    fixed_levels.push_back(downsample2(fixed_levels.back()));
    moving_levels.push_back(downsample2(moving_levels.back()));
  }
  const int levels = static_cast<int>(fixed_levels.size());

  RegistrationResult result;
  result.iterations_used.assign(levels, 0);
  result.converged = true;
  ControlGrid grid;
  for (int level = levels - 1; level >= 0; --level) {
    const auto& geom = fixed_levels[level].geometry();
    grid = level == levels - 1 ? ControlGrid(geom, cfg.control_spacing_voxels)
                               : resample_grid(grid, geom, cfg.control_spacing_voxels);
    const LccMetric metric(fixed_levels[level], moving_levels[level], cfg);
    const LevelOptimizer opt(metric, cfg);
    const auto [ok, iters] = opt.run(grid, level, result.objective_history);
    result.iterations_used[level] = iters;
    if (level == 0) result.converged = ok;
  }
  result.control_grid = std::move(grid);
  return result;
}

Volume3 warp_with_grid(const Volume3& moving, const ControlGrid& g) {
  const auto& geom = moving.geometry();
  if (!g.anchor().matches(geom)) {
    throw_validation("warp_with_grid: control grid anchor does not match the image geometry");
  }
  Volume3 out(geom);
  for (int k = 0; k < geom.dims[2]; ++k)
    for (int j = 0; j < geom.dims[1]; ++j)
      for (int i = 0; i < geom.dims[0]; ++i) {
        const Vec3 p = geom.center(i, j, k);
        out(i, j, k) = sample_trilinear(moving, p + interpolate_displacement(g, p));
      }
  return out;
}

void save_history_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_io("cannot write " + path.string());
  out.precision(17);
  out << "level,iteration,E_D,E_R,total\n";
  for (const auto& h : history) {
    out << h.level << ',' << h.iteration << ',' << h.data_term << ',' << h.regularizer << ','
        << h.total << '\n';
  }
  if (!out) throw_io("write failed for " + path.string());
}

}  // namespace wallkin
