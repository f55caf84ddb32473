#include "wallkin/verification.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include <json.hpp>

#include "wallkin/error.hpp"

namespace wallkin {

namespace {

void check_pair(std::span<const double> t, std::span<const double> e, const char* what) {
  if (t.size() != e.size()) throw_validation(std::string(what) + ": length mismatch");
  if (t.empty()) throw_validation(std::string(what) + ": empty input");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double r_squared_identity(std::span<const double> truth, std::span<const double> estimate) {
  check_pair(truth, estimate, "r_squared_identity");
  const double m = mean_of(truth);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
    ss_tot += (truth[i] - m) * (truth[i] - m);
  }
  if (!(ss_tot > 0.0)) throw_validation("r_squared_identity: truth has zero variance");
  return 1.0 - ss_res / ss_tot;
}

double nrmse(std::span<const double> truth, std::span<const double> estimate, NrmseNorm norm) {
  check_pair(truth, estimate, "nrmse");
  double ss = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) ss += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
  const double rmse = std::sqrt(ss / static_cast<double>(truth.size()));
  double scale = 0.0;
  if (norm == NrmseNorm::range) {
    const auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
    scale = *hi - *lo;
  } else {
    scale = summary_stats(truth).sample_std;
  }
  if (!(scale > 0.0)) throw_validation("nrmse: truth has zero spread");
  return rmse / scale;
}

std::optional<double> angle_between(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return std::nullopt;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

std::vector<std::pair<double, double>> qq_pairs(std::span<const double> truth,
                                                std::span<const double> estimate, int n) {
  if (truth.empty() || estimate.empty()) throw_validation("qq_pairs: empty input");
  if (n < 2) throw_validation("qq_pairs: n must be >= 2");
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double p = 0.5 + 99.0 * i / (n - 1);
    out.emplace_back(percentile(truth, p), percentile(estimate, p));
  }
  return out;
}

Histogram histogram_gaussian_fit(std::span<const double> diffs, int bins) {
  if (diffs.size() < 2) throw_validation("histogram_gaussian_fit: need at least 2 values");
  if (bins < 1) throw_validation("histogram_gaussian_fit: bins must be >= 1");
  const auto st = summary_stats(diffs);
  Histogram h;
  h.mu = st.mean;
  h.sigma = st.sample_std;
  if (st.max == st.min) {
    h.edges = {st.min, st.max};
    h.counts = {diffs.size()};
    h.sigma = 0.0;
    return h;
  }
  const double width = (st.max - st.min) / bins;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(st.min + b * width);
  h.edges.back() = st.max;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : diffs) {
    auto b = static_cast<int>((v - st.min) / width);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

const ChannelMetrics& VerificationReport::channel(const std::string& name) const {
  for (const auto& c : channels)
    if (c.name == name) return c;
  throw_validation("VerificationReport: no channel '" + name + "'");
}

namespace {

ChannelMetrics channel_metrics(const std::string& name, const std::vector<double>& t,
                               const std::vector<double>& e, NrmseNorm norm) {
  ChannelMetrics m;
  m.name = name;
  m.n_points = t.size();
  const auto st = summary_stats(t);
  // Zero spread, or spread at rounding level, leaves the metric undefined.
  const double scale = std::max({1.0, std::abs(st.min), std::abs(st.max)});
  if (st.max - st.min > 1e-12 * scale) {
    m.r_squared = r_squared_identity(t, e);
    m.nrmse = nrmse(t, e, norm);
  }
  m.truth_p99 = percentile(t, 99.0);
  m.estimate_p99 = percentile(e, 99.0);
  return m;
}

std::vector<double> absolute(std::vector<double> v) {
  for (double& x : v) x = std::abs(x);
  return v;
}

}  // namespace

VerificationReport build_report(const WallKinematics& truth, const WallKinematics& estimate,
                                const ReportOptions& opts) {
  if (truth.size() != estimate.size()) throw_validation("build_report: point sets differ in size");
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if ((truth.points[p] - estimate.points[p]).norm() > 1e-9) {
      throw_validation("build_report: point sets differ at index " + std::to_string(p));
    }
    if (truth.valid[p] != estimate.valid[p]) {
      throw_validation("build_report: validity masks differ at index " + std::to_string(p));
    }
  }
  VerificationReport r;
  std::vector<double> tm, em, tn, en, tt, et, ts, es, diff;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if (!truth.valid[p]) continue;
    tm.push_back(truth.displacement[p].norm());
    em.push_back(estimate.displacement[p].norm());
    tn.push_back(truth.u_normal[p]);
    en.push_back(estimate.u_normal[p]);
    tt.push_back(truth.t_magnitude[p]);
    et.push_back(estimate.t_magnitude[p]);
    ts.push_back(truth.strain[p]);
    es.push_back(estimate.strain[p]);
    diff.push_back(estimate.u_normal[p] - truth.u_normal[p]);
    r.angles_deg.push_back(angle_between(estimate.displacement[p], truth.displacement[p]));
  }
  if (tm.empty()) throw_validation("build_report: no valid points");
  r.channels.push_back(channel_metrics("magnitude", tm, em, opts.nrmse_norm));
  r.channels.push_back(channel_metrics("normal", tn, en, opts.nrmse_norm));
  r.channels.push_back(channel_metrics("tangential", tt, et, opts.nrmse_norm));
  r.channels.push_back(channel_metrics("strain", ts, es, opts.nrmse_norm));
  r.strain_p99_truth = percentile(absolute(ts), 99.0);
  r.strain_p99_estimate = percentile(absolute(es), 99.0);
  r.strain_p99_relative_difference =
      r.strain_p99_truth > 0.0
          ? std::abs(r.strain_p99_estimate - r.strain_p99_truth) / r.strain_p99_truth
          : (r.strain_p99_estimate == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  r.qq = qq_pairs(tn, en, opts.qq_points);
  if (diff.size() >= 2) {
    r.histogram = histogram_gaussian_fit(diff, opts.histogram_bins);
    const auto st = summary_stats(diff);
    r.paired_t_statistic =
        st.sample_std > 0.0 ? st.mean / (st.sample_std / std::sqrt(static_cast<double>(st.count))) : 0.0;
  }
  r.truth_normal = std::move(tn);
  r.estimate_normal = std::move(en);
  return r;
}

double mean_abs_intensity_difference(const Volume3& a, const Volume3& b) {
  if (!a.geometry().matches(b.geometry())) throw_validation("mean_abs_intensity_difference: geometry mismatch");
  const auto da = a.data();
  const auto db = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) s += std::abs(static_cast<double>(da[i]) - db[i]);
  return s / static_cast<double>(da.size());
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json("undefined");
}

}  // namespace

std::string report_to_json(const VerificationReport& r) {
  nlohmann::ordered_json j;
  auto& ch = j["channels"];
  ch = nlohmann::ordered_json::object();
  for (const auto& c : r.channels) {
    ch[c.name] = {{"n_points", c.n_points},
                  {"r_squared", opt_json(c.r_squared)},
                  {"nrmse", opt_json(c.nrmse)},
                  {"truth_p99", c.truth_p99},
                  {"estimate_p99", c.estimate_p99}};
  }
  j["strain_p99"] = {{"truth", r.strain_p99_truth},
                     {"estimate", r.strain_p99_estimate},
                     {"relative_difference", r.strain_p99_relative_difference}};
  j["normal_error_histogram"] = {{"edges", r.histogram.edges},
                                 {"counts", r.histogram.counts},
                                 {"mu", r.histogram.mu},
                                 {"sigma", r.histogram.sigma}};
  j["paired_t_statistic"] = r.paired_t_statistic;
  j["mean_abs_intensity_difference"] = opt_json(r.mean_abs_intensity_difference);
  auto qq = nlohmann::ordered_json::array();
  for (const auto& [t, e] : r.qq) qq.push_back({t, e});
  j["qq_normal"] = std::move(qq);
  return j.dump(2);
}

void save_report_json(const VerificationReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_io("cannot write " + path.string());
  out << report_to_json(r) << '\n';
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_io("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void save_report_csv(const VerificationReport& r, const std::filesystem::path& dir) {
  {
    auto out = open_csv(dir / "scatter.csv");
    out << "truth_normal,estimate_normal,angle_deg\n";
    for (std::size_t i = 0; i < r.truth_normal.size(); ++i) {
      out << r.truth_normal[i] << ',' << r.estimate_normal[i] << ',';
      if (r.angles_deg[i]) out << *r.angles_deg[i];
      out << '\n';
    }
  }
  {
    auto out = open_csv(dir / "qq.csv");
    out << "truth_quantile,estimate_quantile\n";
    for (const auto& [t, e] : r.qq) out << t << ',' << e << '\n';
  }
  {
    auto out = open_csv(dir / "histogram.csv");
    out << "lo,hi,count\n";
    for (std::size_t b = 0; b < r.histogram.counts.size(); ++b) {
      out << r.histogram.edges[b] << ',' << r.histogram.edges[b + 1] << ',' << r.histogram.counts[b] << '\n';
    }
  }
}

void save_plot_script(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_io("cannot write " + path.string());
  out << R"PY(#!/usr/bin/env python3
# Plots the verification CSVs that sit next to this script.
import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def rows(name):
    with open(os.path.join(here, name)) as f:
        return list(csv.DictReader(f))


scatter = rows("scatter.csv")
qq = rows("qq.csv")
hist = rows("histogram.csv")

fig, ax = plt.subplots(1, 3, figsize=(15, 4.5))
t = [float(r["truth_normal"]) for r in scatter]
e = [float(r["estimate_normal"]) for r in scatter]
ang = [float(r["angle_deg"]) if r["angle_deg"] else math.nan for r in scatter]
sc = ax[0].scatter(t, e, c=ang, s=4, cmap="viridis")
lo, hi = min(t + e), max(t + e)
ax[0].plot([lo, hi], [lo, hi], "k--", lw=1)
ax[0].set_xlabel("truth normal displacement (mm)")
ax[0].set_ylabel("registration normal displacement (mm)")
fig.colorbar(sc, ax=ax[0], label="angle (deg)")

qt = [float(r["truth_quantile"]) for r in qq]
qe = [float(r["estimate_quantile"]) for r in qq]
ax[1].plot(qt, qe, "o", ms=3)
ax[1].plot([min(qt), max(qt)], [min(qt), max(qt)], "k--", lw=1)
ax[1].set_xlabel("truth quantile (mm)")
ax[1].set_ylabel("registration quantile (mm)")

lo_e = [float(r["lo"]) for r in hist]
hi_e = [float(r["hi"]) for r in hist]
cnt = [float(r["count"]) for r in hist]
widths = [b - a for a, b in zip(lo_e, hi_e)]
ax[2].bar(lo_e, cnt, width=widths, align="edge", alpha=0.6)
n = sum(cnt)
mu = sum((a + b) / 2 * c for a, b, c in zip(lo_e, hi_e, cnt)) / n
var = sum(((a + b) / 2 - mu) ** 2 * c for a, b, c in zip(lo_e, hi_e, cnt)) / max(n - 1, 1)
if var > 0 and widths[0] > 0:
    xs = [lo_e[0] + i * (hi_e[-1] - lo_e[0]) / 200 for i in range(201)]
    pdf = [n * widths[0] * math.exp(-((x - mu) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var) for x in xs]
    ax[2].plot(xs, pdf, "r-")
ax[2].set_xlabel("normal displacement error (mm)")
ax[2].set_ylabel("count")

fig.tight_layout()
fig.savefig(os.path.join(here, "verification.png"), dpi=150)
)PY";
}

}  // namespace wallkin
