#pragma once

// The validation suite: analytic cross-checks and Monte Carlo comparisons
// between the simulated flow and the closed-form laws. Each check yields one
// CriterionResult; run_validation collects them together with the
// supporting tables (crossing ladder, Euler-Maruyama errors).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "flowcross/analytic.hpp"
#include "flowcross/crossings.hpp"
#include "flowcross/flowsim.hpp"
#include "flowcross/kernel.hpp"
#include "flowcross/parallel.hpp"
#include "flowcross/quad.hpp"
#include "flowcross/rng.hpp"
#include "flowcross/stats.hpp"
#include "flowcross/table.hpp"

namespace flowcross {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double metric = 0.0;     ///< the quantity compared against the threshold
  double threshold = 0.0;
  std::string detail;
};

/// Sample sizes. The defaults are the full-size runs; quick() shrinks every
/// Monte Carlo budget by roughly 5-10x for smoke runs.
struct ValidationSizes {
  std::size_t reduced_samples = 100000;
  std::size_t reduced_steps = 512;
  std::size_t flow_reps = 2000;       // crossing campaign and marginal law
  std::size_t flow_steps = 400;
  std::size_t stationarity_reps = 2000;
  std::size_t em_reps = 200;
  std::size_t bridge_reps = 2000;
  std::size_t bridge_steps = 16384;

  static ValidationSizes quick() {
    ValidationSizes s;
    s.reduced_samples = 20000;
    s.flow_reps = 200;
    s.stationarity_reps = 400;
    s.em_reps = 40;
    s.bridge_reps = 200;
    s.bridge_steps = 4096;
    return s;
  }
};

struct ValidationOptions {
  std::uint64_t seed = 1;
  ValidationSizes sizes;
  double kernel_radius = 1.0;
  double flow_t = 0.5;
  std::vector<double> crossing_levels = {0.1, 0.3, 1.0};
  /// Called after each criterion finishes (progress reporting).
  std::function<void(const CriterionResult&)> on_result;
};

struct ValidationReport {
  std::vector<CriterionResult> results;
  std::vector<Row> crossing_rows;  ///< schema: crossing_ladder_schema()
  std::vector<Row> em_rows;        ///< schema: em_schema()

  bool all_passed() const {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  }
};

inline Schema criteria_schema() {
  return {{"id", ColumnType::kInteger},   {"name", ColumnType::kText},
          {"passed", ColumnType::kInteger}, {"metric", ColumnType::kReal},
          {"threshold", ColumnType::kReal}, {"detail", ColumnType::kText}};
}

inline Schema crossing_ladder_schema() {
  return {{"c", ColumnType::kReal},        {"step", ColumnType::kInteger},
          {"max_du", ColumnType::kReal},   {"max_dlogp", ColumnType::kReal},
          {"mean_points", ColumnType::kReal}, {"mc_mean", ColumnType::kReal},
          {"mc_stderr", ColumnType::kReal}, {"mu_bar", ColumnType::kReal}};
}

inline Schema em_schema() {
  return {{"n", ColumnType::kInteger}, {"error", ColumnType::kReal}, {"stderr", ColumnType::kReal}};
}

inline std::vector<Row> criteria_rows(const std::vector<CriterionResult>& results) {
  std::vector<Row> rows;
  for (const auto& r : results) {
    rows.push_back({std::int64_t{r.id}, r.name, std::int64_t{r.passed ? 1 : 0}, r.metric,
                    r.threshold, r.detail});
  }
  return rows;
}

/// One human-readable line: "PASS  3 normalizations  metric=... threshold=...".
inline std::string format_criterion(const CriterionResult& r) {
  std::string id = std::to_string(r.id);
  if (id.size() < 2) id = " " + id;
  return std::string(r.passed ? "PASS " : "FAIL ") + id + " " + r.name +
         "  metric=" + format_real(r.metric) + " threshold=" + format_real(r.threshold) + "  " +
         r.detail;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream per criterion.
inline RngStream criterion_stream(std::uint64_t seed, int id) {
  return {splitmix64(seed ^ (std::uint64_t{0x5eed} << 32) ^ static_cast<std::uint64_t>(id)), 0};
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

inline const ModelParams kUnitModel{1.0, 1.0, 1.0};

/// int_0^inf f(z1) dz1 for lognormal-like mass, in log coordinates over
/// +-width standard deviations.
template <class F>
double integrate_log_axis(const F& f, double a, double rel_tol, double width = 14.0) {
  const double m = -0.5 * a;
  const double s = std::sqrt(a);
  auto g = [&](double y) {
    const double z = std::exp(y);
    return f(z) * z;
  };
  return integrate_adaptive(g, m - width * s, m + width * s, rel_tol).value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual criteria

inline CriterionResult check_intensity_vs_rice() {
  const auto& P = detail::kUnitModel;
  double worst = 0.0;
  std::string d;
  for (double c : {1.0, 5.0, 20.0}) {
    const double a = intensity(P, c);
    const double b = intensity_rice(P, c);
    const double r = detail::rel_diff(a, b);
    worst = std::max(worst, r);
    d += "c=" + format_real(c) + ":" + format_real(a) + "/" + format_real(b) + " ";
  }
  d.pop_back();
  return {1, "intensity_vs_rice", worst <= 1e-6, worst, 1e-6, d};
}

inline CriterionResult check_joint_change_of_variables(const RngStream& rng) {
  const auto& P = detail::kUnitModel;
  double worst = 0.0;
  for (std::uint32_t i = 0; i < 20; ++i) {
    const auto u = rng.uniform_pair(StreamTag::kAux, 2, i);
    const double z1 = 0.3 + 2.7 * u[0];
    const double z2 = -3.0 + 6.0 * u[1];
    const double lhs = joint_density_p(P, z1, z2);
    const double rhs = joint_density_X(P, 1.0 / z1, z2 / (z1 * z1)) / std::pow(z1, 5);
    worst = std::max(worst, detail::rel_diff(lhs, rhs));
  }
  return {2, "joint_change_of_variables", worst <= 1e-10, worst, 1e-10, "20 points"};
}

inline CriterionResult check_normalizations() {
  const auto& P = detail::kUnitModel;
  const double a = P.a();
  auto one_d = [&](auto&& dens) {
    return detail::integrate_log_axis([&](double z) { return dens(P, z); }, a, 1e-12);
  };
  const double n_p = one_d(density_p);
  const double n_dxdu = one_d(density_dxdu);
  const double x2_scale = std::sqrt(P.l2 * P.t);
  // 2D integrals stop at 6 sd in log z1 (neglected mass ~2e-9); further out
  // the joint densities are no longer resolvable to relative accuracy
  constexpr double kWidth = 6.0;
  const double n_x = detail::integrate_log_axis(
      [&](double z1) {
        auto inner = [&](double z2) { return joint_density_X(P, z1, z2, 1e-9); };
        return 2.0 * integrate_to_infinity(inner, 0.0, x2_scale * (1.0 + z1), 1e-7).value;
      },
      a, 1e-6, kWidth);
  const double n_jp = detail::integrate_log_axis(
      [&](double z1) {
        auto inner = [&](double z2) { return joint_density_p(P, z1, z2, 1e-9); };
        return 2.0 * integrate_to_infinity(inner, 0.0, x2_scale * z1 * (1.0 + z1), 1e-7).value;
      },
      a, 1e-6, kWidth);
  const double n_s = detail::integrate_log_axis(
      [&](double z1) {
        auto inner = [&](double z2) { return joint_density_X1_sigma2(P, z1, z2, 1e-9); };
        return integrate_to_infinity(inner, 0.0, P.t * (1.0 + z1 * z1), 1e-7).value;
      },
      a, 1e-6, kWidth);
  const double e1 = std::max(std::abs(n_p - 1.0), std::abs(n_dxdu - 1.0));
  const double e2 = std::max({std::abs(n_x - 1.0), std::abs(n_jp - 1.0), std::abs(n_s - 1.0)});
  const bool ok = e1 <= 1e-8 && e2 <= 1e-3;
  const std::string d = "density_p=" + format_real(n_p) + " density_dxdu=" + format_real(n_dxdu) +
                        " joint_X=" + format_real(n_x) + " joint_p=" + format_real(n_jp) +
                        " joint_X1_sigma2=" + format_real(n_s);
  // metric: the 2D deviation (the binding tolerance); 1D is reported in detail
  return {3, "normalizations", ok, e2, 1e-3, d};
}

inline CriterionResult check_lognormal_identity(const RngStream& rng) {
  double worst = 0.0;
  for (std::uint32_t i = 0; i < 1000; ++i) {
    const auto u = rng.uniform_pair(StreamTag::kAux, 4, i);
    const ModelParams P{0.1 + 3.0 * u[0], 0.5 + 2.0 * u[1], 1.0};
    const auto v = rng.uniform_pair(StreamTag::kAux, 5, i);
    const double a = P.a();
    // z within +-5 sd of the log-mean
    const double y = -0.5 * a + std::sqrt(a) * (10.0 * v[0] - 5.0);
    const double z = std::exp(y);
    const double ref = std::exp(-(y + 0.5 * a) * (y + 0.5 * a) / (2.0 * a)) /
                       (z * std::sqrt(2.0 * std::numbers::pi * a));
    worst = std::max(worst, detail::rel_diff(density_p(P, z), ref));
  }
  const double median_err = std::abs(tail_p_exact(detail::kUnitModel, std::exp(-0.5)) - 0.5);
  const bool ok = worst <= 1e-12 && median_err <= 1e-12;
  return {4, "lognormal_identity", ok, worst, 1e-12,
          "median_tail_error=" + format_real(median_err)};
}

inline CriterionResult check_intensity_asymptotics() {
  const auto& P = detail::kUnitModel;
  std::vector<double> dev;
  std::string d;
  for (double c : {1e3, 1e4, 1e5, 1e6}) {
    const double r = intensity(P, c) / intensity_asymptotic(P, c);
    dev.push_back(std::abs(r - 1.0));
    d += "c=" + format_real(c) + ":" + format_real(r) + " ";
  }
  d.pop_back();
  bool decreasing = true;
  for (std::size_t i = 1; i < dev.size(); ++i) decreasing = decreasing && dev[i] < dev[i - 1];
  const bool ok = decreasing && dev.back() < 0.15;
  return {5, "intensity_asymptotics", ok, dev.back(), 0.15, d};
}

inline CriterionResult check_reduced_system(const ValidationSizes& sz, const RngStream& rng) {
  const auto& P = detail::kUnitModel;
  const std::size_t n = sz.reduced_samples;
  std::vector<ReducedSample> s(n);
  parallel_for(n, [&](std::size_t r) {
    s[r] = simulate_reduced(P, sz.reduced_steps, rng.with_replica(static_cast<std::uint32_t>(r)));
  });
  std::vector<double> x1(n), x2(n), x2sq(n);
  std::vector<std::pair<double, double>> p12(n), p1s(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = s[i].x1;
    x2[i] = s[i].x2;
    x2sq[i] = s[i].x2 * s[i].x2;
    p12[i] = {s[i].x1, s[i].x2};
    p1s[i] = {s[i].x1, s[i].sigma2};
  }
  const auto m1 = mc_aggregate(x1);
  const auto m2 = mc_aggregate(x2);
  const auto v2 = mc_aggregate(x2sq);  // E x2 = 0, so E x2^2 is the variance
  const double z1 = (m1.mean - 1.0) / m1.std_error;
  const double z2 = m2.mean / m2.std_error;
  const double z3 = (v2.mean - (std::numbers::e - 1.0)) / v2.std_error;
  const bool moments_ok = std::abs(z1) <= 3.0 && std::abs(z2) <= 3.0 && std::abs(z3) <= 3.0;

  std::vector<double> ex1;
  for (int i = -4; i <= 4; ++i) ex1.push_back(std::exp(-0.5 + 0.5 * i));
  const std::vector<double> ex2 = {-4, -3, -2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2, 3, 4};
  const std::vector<double> es = {0, 0.25, 0.5, 0.75, 1, 1.25, 1.5, 2, 2.5, 3, 4, 6};
  const auto g12 = chi2_binned_2d(
      p12, [&](double a, double b) { return joint_density_X(P, a, b, 1e-9); }, ex1, ex2);
  const auto g1s = chi2_binned_2d(
      p1s, [&](double a, double b) { return joint_density_X1_sigma2(P, a, b, 1e-9); }, ex1, es);
  const bool ok = moments_ok && g12.p_value > 0.01 && g1s.p_value > 0.01;
  const std::string d = "z(E x1)=" + format_real(z1) + " z(E x2)=" + format_real(z2) +
                        " z(Var x2)=" + format_real(z3) + " chi2_p(x1,x2)=" +
                        format_real(g12.p_value) + " chi2_p(x1,sigma2)=" +
                        format_real(g1s.p_value) + " n=" + std::to_string(n);
  return {6, "reduced_system", ok, std::min(g12.p_value, g1s.p_value), 0.01, d};
}

/// Criteria 7 and 8 share one crossing campaign.
inline std::pair<CriterionResult, CriterionResult> check_flow_marginal_and_crossings(
    const ValidationOptions& opt, const RngStream& rng, std::vector<Row>* ladder_rows) {
  const KernelSpec k = make_bump_kernel(opt.kernel_radius);
  SimGrid g;
  g.t = opt.flow_t;
  g.n_time = opt.sizes.flow_steps;
  const CampaignOptions copt;
  const auto camp =
      run_crossing_campaign(k, g, opt.crossing_levels, opt.sizes.flow_reps, rng, copt);
  const ModelParams P = ModelParams::from_kernel(k, opt.flow_t);

  const auto ks = ks_test(camp.probe_values,
                          [&](double z) { return z > 0.0 ? 1.0 - tail_p_exact(P, z) : 0.0; });
  CriterionResult r7{7, "flow_marginal_law", ks.p_value > 0.01, ks.p_value, 0.01,
                     "ks_statistic=" + format_real(ks.statistic) +
                         " n=" + std::to_string(ks.n) + " u=" + format_real(copt.probe_u)};

  bool ok = true;
  double worst = 0.0;
  std::string d;
  for (std::size_t l = 0; l < camp.levels.size(); ++l) {
    const double c = camp.levels[l];
    const double mu = intensity(P, c);
    const auto& est = camp.estimates[l];
    const bool stable = resolution_stable(est);
    const double z = (est.back().mean - mu) / est.back().std_error;
    ok = ok && stable && std::abs(z) <= 3.0;
    worst = std::max(worst, std::abs(z));
    d += "c=" + format_real(c) + ":z=" + format_real(z) + (stable ? ",stable " : ",unstable ");
    for (std::size_t m = 0; m < est.size(); ++m) {
      if (ladder_rows) {
        ladder_rows->push_back({c, static_cast<std::int64_t>(m), copt.ladder[m].max_du,
                                copt.ladder[m].max_dlogp, camp.mean_points[m], est[m].mean,
                                est[m].std_error, mu});
      }
    }
  }
  d.pop_back();
  CriterionResult r8{8, "crossing_intensity", ok, worst, 3.0, d};
  return {r7, r8};
}

inline CriterionResult check_stationarity(const ValidationSizes& sz, const RngStream& rng) {
  const KernelSpec k = make_bump_kernel(1.0);
  SimGrid gg;
  gg.t = 1.0;
  gg.n_time = 200;
  const SimGrid g = gg.resolved(k);
  const double l1 = k.constants().l1;
  const std::array<double, 2> u = {0.0, 7.3};
  const std::size_t n = sz.stationarity_reps;
  std::vector<double> d0(n), d1(n), wu(n), wu2(n);
  parallel_for(n, [&](std::size_t r) {
    const auto pts = detail::run_points(k, l1, g, u, rng.with_replica(static_cast<std::uint32_t>(r)));
    d0[r] = pts[0].x - u[0];
    d1[r] = pts[1].x - u[1];
    wu[r] = pts[0].wu / std::sqrt(g.t);
    wu2[r] = pts[0].wu * pts[0].wu;
  });
  const auto two = ks_two_sample(d0, d1);
  const auto var = mc_aggregate(wu2);
  const double zv = (var.mean - g.t) / var.std_error;
  const boost::math::normal_distribution<double> std_normal;
  const auto ksw = ks_test(wu, [&](double x) { return boost::math::cdf(std_normal, x); });
  const bool ok = two.p_value > 0.01 && std::abs(zv) <= 3.0 && ksw.p_value > 0.01;
  const std::string d = "ks2_p=" + format_real(two.p_value) + " z(Var wu)=" + format_real(zv) +
                        " ks_wu_p=" + format_real(ksw.p_value) + " n=" + std::to_string(n);
  return {9, "stationarity_martingale", ok, std::min(two.p_value, ksw.p_value), 0.01, d};
}

inline CriterionResult check_em_rate(const ValidationSizes& sz, const RngStream& rng,
                                     std::vector<Row>* em_rows) {
  const KernelSpec k = make_bump_kernel(1.0);
  SimGrid g;
  g.n_space = 11;
  const std::array<std::size_t, 4> ns = {8, 16, 32, 64};
  const auto rows = em_convergence_study(k, 0.5, g, ns, sz.em_reps, rng);
  const double slope = loglog_slope(rows);
  std::string d = "errors";
  for (const auto& r : rows) {
    d += " n=" + std::to_string(r.n) + ":" + format_real(r.error);
    if (em_rows) em_rows->push_back({static_cast<std::int64_t>(r.n), r.error, r.std_error});
  }
  const bool ok = slope >= -0.75 && slope <= -0.25;
  return {10, "euler_maruyama_rate", ok, slope, -0.25, d};
}

inline CriterionResult check_bridge_factor(const ValidationSizes& sz, const RngStream& rng) {
  const double ln_c = 50.0;
  const double c = std::exp(ln_c);
  const auto est = bridge_factor(ModelParams{1.0, 1.0, 1.0}, c, sz.bridge_steps, sz.bridge_reps, rng);
  const double rel = std::abs(est.mean / 0.1 - 1.0);
  const auto det = bridge_factor(ModelParams{1.0, 1e-12, 1.0}, c, sz.bridge_steps, 64, rng);
  const double exact = std::sqrt(-std::expm1(-2.0 * ln_c) / (2.0 * ln_c));
  const double zd = std::abs(det.mean - exact) / std::max(det.std_error, 1e-15 * exact);
  const bool ok = rel <= 0.10 && zd <= 3.0;
  const std::string d = "mc=" + format_real(est.mean) + "+-" + format_real(est.std_error) +
                        " deterministic_limit=" + format_real(det.mean) +
                        " exact=" + format_real(exact) + " z=" + format_real(zd);
  return {11, "bridge_factor", ok, rel, 0.10, d};
}

// ---------------------------------------------------------------------------

/// Criteria 1-11. Criterion 12 (run-to-run determinism) needs two complete
/// runs and is evaluated by the caller.
inline ValidationReport run_validation(const ValidationOptions& opt) {
  ValidationReport rep;
  auto add = [&](CriterionResult r) {
    if (opt.on_result) opt.on_result(r);
    rep.results.push_back(std::move(r));
  };
  auto stream = [&](int id) { return detail::criterion_stream(opt.seed, id); };
  add(check_intensity_vs_rice());
  add(check_joint_change_of_variables(stream(2)));
  add(check_normalizations());
  add(check_lognormal_identity(stream(4)));
  add(check_intensity_asymptotics());
  add(check_reduced_system(opt.sizes, stream(6)));
  auto [r7, r8] = check_flow_marginal_and_crossings(opt, stream(7), &rep.crossing_rows);
  add(std::move(r7));
  add(std::move(r8));
  add(check_stationarity(opt.sizes, stream(9)));
  add(check_em_rate(opt.sizes, stream(10), &rep.em_rows));
  add(check_bridge_factor(opt.sizes, stream(11)));
  return rep;
}

/// In-process determinism check: renders the stochastic criteria twice from
/// the same seed at smoke-test sizes and compares the CSV bytes.
inline CriterionResult check_in_process_determinism(std::uint64_t seed) {
  ValidationSizes sz = ValidationSizes::quick();
  sz.reduced_samples = 2000;
  sz.stationarity_reps = 100;
  sz.em_reps = 4;
  sz.bridge_reps = 20;
  sz.bridge_steps = 1024;
  auto once = [&] {
    std::vector<CriterionResult> r;
    std::vector<Row> em;
    r.push_back(check_stationarity(sz, detail::criterion_stream(seed, 9)));
    r.push_back(check_em_rate(sz, detail::criterion_stream(seed, 10), &em));
    r.push_back(check_bridge_factor(sz, detail::criterion_stream(seed, 11)));
    return render_csv(criteria_rows(r), criteria_schema()) + render_csv(em, em_schema());
  };
  const bool same = once() == once();
  return {12, "determinism", same, same ? 0.0 : 1.0, 0.0, "in-process rerun"};
}

}  // namespace flowcross
