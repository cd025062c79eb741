#pragma once

// Euler-Maruyama simulation of the kernel-smoothed flow
//   dx(u,t) = int phi(x(u,t) - q) W(dq, dt)
// together with its first two spatial derivatives, the reduced
// two-dimensional system for (X1, X2), and the Brownian-bridge factor that
// appears in the large-level asymptotics.
//
// The noise sheet is discretized into cells of width q_step on a fixed
// global lattice (cell j has centre (j + 1/2) q_step). Each cell increment is
// a counter-based normal keyed by (seed, replica, step, cell), so a point's
// trajectory does not depend on which other points are simulated with it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "flowcross/analytic.hpp"
#include "flowcross/errors.hpp"
#include "flowcross/kernel.hpp"
#include "flowcross/parallel.hpp"
#include "flowcross/rng.hpp"
#include "flowcross/stats.hpp"

namespace flowcross {

/// Space-time discretization. q_step and q_pad of 0 select the defaults
/// radius/32 and radius.
struct SimGrid {
  double u_min = 0.0;
  double u_max = 1.0;
  std::size_t n_space = 101;
  std::size_t n_time = 400;
  double t = 1.0;
  double q_pad = 0.0;
  double q_step = 0.0;

  /// Copy with q_step / q_pad filled in for kernel k, after validation.
  SimGrid resolved(const KernelSpec& k) const {
    SimGrid g = *this;
    if (g.q_step == 0.0) g.q_step = k.radius() / 32.0;
    if (g.q_pad == 0.0) g.q_pad = k.radius();
    g.validate(k);
    return g;
  }

  void validate(const KernelSpec& k) const {
    if (!(u_min < u_max) || !std::isfinite(u_min) || !std::isfinite(u_max)) {
      throw DomainError("SimGrid: u_min must be below u_max");
    }
    if (n_space < 2) throw DomainError("SimGrid: n_space must be at least 2");
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("SimGrid: t must be positive");
    if (!(q_step > 0.0) || q_step > k.radius() / 8.0 * (1.0 + 1e-12)) {
      throw DomainError("SimGrid: q_step must lie in (0, radius/8]");
    }
    if (!(q_pad >= k.radius()) || !std::isfinite(q_pad)) {
      throw DomainError("SimGrid: q_pad must be at least the kernel radius");
    }
  }

  std::vector<double> u_grid() const {
    std::vector<double> u(n_space);
    const double du = (u_max - u_min) / static_cast<double>(n_space - 1);
    for (std::size_t i = 0; i < n_space; ++i) u[i] = u_min + du * static_cast<double>(i);
    u.back() = u_max;
    return u;
  }
};

/// Terminal state of the flow at time t on a grid of starting points.
struct FlowPath {
  std::vector<double> u;
  std::vector<double> x;
  std::vector<double> jac;   ///< dx/du, exponential form
  std::vector<double> hess;  ///< d2x/du2
  std::vector<double> wu;    ///< normalized martingale driving log(jac)
  /// dx/du of the discrete scheme itself, prod_k (1 + sum_j phi'(x_k - q_j) dW_kj).
  /// Agrees with jac up to the time-discretization error.
  std::vector<double> jac_euler;
};

namespace detail {

struct PointState {
  double x = 0.0;
  double log_jac = 0.0;
  double x2 = 0.0;  // hess / jac
  double wu = 0.0;
  double jac_euler = 1.0;
};

inline constexpr std::int64_t kCellOffset = std::int64_t{1} << 31;

inline std::uint32_t cell_counter(std::int64_t j) {
  const std::int64_t c = j + kCellOffset;
  if (c < 0 || c > std::int64_t{0xffffffff}) {
    throw InternalError("flow left the addressable noise lattice (|x| too large for q_step)");
  }
  return static_cast<std::uint32_t>(c);
}

/// Independent N(0, var) increments per (step, cell); pairs of cells share
/// one Box-Muller draw.
class SheetNoise {
 public:
  SheetNoise(RngStream rng, double sd) : rng_(rng), sd_(sd) {}

  void fill(std::size_t step, std::int64_t j_lo, std::size_t count, double* out) const {
    const auto s = static_cast<std::uint32_t>(step);
    std::int64_t j = j_lo;
    const std::int64_t j_end = j_lo + static_cast<std::int64_t>(count);
    while (j < j_end) {
      const std::uint32_t c = cell_counter(j);
      const auto pair = rng_.normal_pair(StreamTag::kSheet, s, c >> 1);
      const std::size_t i = static_cast<std::size_t>(j - j_lo);
      if ((c & 1u) == 0u) {
        out[i] = sd_ * pair[0];
        if (j + 1 < j_end) out[i + 1] = sd_ * pair[1];
        j += 2;
      } else {
        out[i] = sd_ * pair[1];
        j += 1;
      }
    }
  }

 private:
  RngStream rng_;
  double sd_;
};

/// Increments of a coarse step as sums of `factor` consecutive fine steps,
/// so a coarse run sees exactly the same sheet as the fine one.
class AggregatedNoise {
 public:
  AggregatedNoise(SheetNoise fine, std::size_t factor) : fine_(fine), factor_(factor) {}

  void fill(std::size_t step, std::int64_t j_lo, std::size_t count, double* out) const {
    std::fill(out, out + count, 0.0);
    buf_.resize(count);
    for (std::size_t i = 0; i < factor_; ++i) {
      fine_.fill(step * factor_ + i, j_lo, count, buf_.data());
      for (std::size_t c = 0; c < count; ++c) out[c] += buf_[c];
    }
  }

 private:
  SheetNoise fine_;
  std::size_t factor_;
  mutable std::vector<double> buf_;
};

/// Advances every point through n_steps steps of size dt.
template <class Noise>
void advance_points(const KernelSpec& k, double l1, double q_step, double q_pad, double dt,
                    std::size_t n_steps, const Noise& noise, std::span<PointState> pts) {
  if (pts.empty()) return;
  const double r = k.radius();
  const double inv_h = 1.0 / q_step;
  const double inv_sqrt_l1 = 1.0 / std::sqrt(l1);
  const double half_l1_dt = 0.5 * l1 * dt;
  std::vector<double> dw;
  for (std::size_t step = 0; step < n_steps; ++step) {
    double lo = pts[0].x, hi = pts[0].x;
    for (const auto& p : pts) {
      lo = std::min(lo, p.x);
      hi = std::max(hi, p.x);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw InternalError("flow positions became non-finite");
    }
    const auto j_lo = static_cast<std::int64_t>(std::floor((lo - q_pad) * inv_h));
    const auto j_hi = static_cast<std::int64_t>(std::ceil((hi + q_pad) * inv_h));
    const auto count = static_cast<std::size_t>(j_hi - j_lo + 1);
    dw.resize(count);
    noise.fill(step, j_lo, count, dw.data());

    for (auto& p : pts) {
      // cells whose centre lies strictly inside the support around x
      auto j0 = static_cast<std::int64_t>(std::ceil((p.x - r) * inv_h - 0.5));
      auto j1 = static_cast<std::int64_t>(std::floor((p.x + r) * inv_h - 0.5));
      j0 = std::max(j0, j_lo);
      j1 = std::min(j1, j_hi);
      double s0 = 0.0, s1 = 0.0, s2 = 0.0;
      for (std::int64_t j = j0; j <= j1; ++j) {
        const auto v = k.values(p.x - (static_cast<double>(j) + 0.5) * q_step);
        const double w = dw[static_cast<std::size_t>(j - j_lo)];
        s0 += v.phi * w;
        s1 += v.d1 * w;
        s2 += v.d2 * w;
      }
      const double jac = std::exp(p.log_jac);
      p.x2 += jac * s2;
      p.log_jac += s1 - half_l1_dt;
      p.wu += s1 * inv_sqrt_l1;
      p.jac_euler *= 1.0 + s1;
      p.x += s0;
    }
  }
}

inline std::vector<PointState> initial_states(std::span<const double> u) {
  std::vector<PointState> pts(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) pts[i].x = u[i];
  return pts;
}

inline SheetNoise sheet_noise(const RngStream& rng, double q_step, double dt) {
  return SheetNoise(rng, std::sqrt(q_step * dt));
}

/// Terminal states of the points starting at u (one replica, g resolved).
inline std::vector<PointState> run_points(const KernelSpec& k, double l1, const SimGrid& g,
                                          std::span<const double> u, const RngStream& rng) {
  auto pts = initial_states(u);
  if (g.n_time == 0) return pts;
  const double dt = g.t / static_cast<double>(g.n_time);
  advance_points(k, l1, g.q_step, g.q_pad, dt, g.n_time, sheet_noise(rng, g.q_step, dt), pts);
  return pts;
}

inline double terminal_x(const KernelSpec& k, double l1, const SimGrid& g, double u,
                         const RngStream& rng) {
  const double uu[1] = {u};
  return run_points(k, l1, g, uu, rng)[0].x;
}

}  // namespace detail

/// One realization of the flow on g's u-grid at time g.t. n_time = 0 gives
/// the identity map.
inline FlowPath simulate_flow(const KernelSpec& k, const SimGrid& grid, const RngStream& rng) {
  const SimGrid g = grid.resolved(k);
  const double l1 = k.constants().l1;
  FlowPath path;
  path.u = g.u_grid();
  const auto pts = detail::run_points(k, l1, g, path.u, rng);
  const std::size_t n = pts.size();
  path.x.resize(n);
  path.jac.resize(n);
  path.hess.resize(n);
  path.wu.resize(n);
  path.jac_euler.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double jac = std::exp(pts[i].log_jac);
    path.x[i] = pts[i].x;
    path.jac[i] = jac;
    path.hess[i] = jac * pts[i].x2;
    path.wu[i] = pts[i].wu;
    path.jac_euler[i] = pts[i].jac_euler;
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(path.x[i] > path.x[i - 1])) {
      throw InternalError("simulated flow lost monotonicity; increase n_time");
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Density path p_t(u) = 1 / (dx/du)(x^{-1}(u, t), t)

struct DensitySamplePath {
  std::vector<double> u;
  std::vector<double> p;

  std::size_t size() const noexcept { return u.size(); }

  void validate() const {
    if (u.size() != p.size()) throw DomainError("DensitySamplePath: u and p differ in length");
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!(p[i] > 0.0)) throw DomainError("DensitySamplePath: p must be positive");
      if (i > 0 && !(u[i] > u[i - 1])) {
        throw DomainError("DensitySamplePath: u must be strictly increasing");
      }
    }
  }

  /// Every stride-th sample (stride 1 returns a copy). Used to build nested
  /// refinement chains from one fine simulation.
  DensitySamplePath subsample(std::size_t stride) const {
    DensitySamplePath out;
    for (std::size_t i = 0; i < u.size(); i += stride) {
      out.u.push_back(u[i]);
      out.p.push_back(p[i]);
    }
    return out;
  }

  /// Linear interpolation of p at u0 (u0 must lie within the sampled range).
  double interpolate(double u0) const {
    if (u.empty() || u0 < u.front() || u0 > u.back()) {
      throw DomainError("DensitySamplePath: interpolation point outside sampled range");
    }
    const auto it = std::upper_bound(u.begin(), u.end(), u0);
    if (it == u.end()) return p.back();
    const auto i = static_cast<std::size_t>(it - u.begin());
    const double w = (u0 - u[i - 1]) / (u[i] - u[i - 1]);
    return p[i - 1] + w * (p[i] - p[i - 1]);
  }
};

/// Starting points [v_lo, v_hi] whose images bracket [u_min, u_max].
struct PreimageWindow {
  double v_lo = 0.0;
  double v_hi = 0.0;
};

namespace detail {

// Largest v on a bisection path with x(v) <= target (or smallest v with
// x(v) >= target when `upper`), to within tol.
inline double bracket_preimage(const KernelSpec& k, double l1, const SimGrid& g,
                               const RngStream& rng, double target, double lo, double hi,
                               bool upper, double tol) {
  // invariant: x(lo) <= target <= x(hi)
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (terminal_x(k, l1, g, mid, rng) <= target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return upper ? hi : lo;
}

}  // namespace detail

/// Locates the preimage of [g.u_min, g.u_max] under x(., g.t) for this
/// replica. The search starts from [u_min - m, u_max + m], m = 6 sqrt(t) + radius,
/// and doubles m up to three times.
inline PreimageWindow find_preimage_window(const KernelSpec& k, const SimGrid& grid,
                                           const RngStream& rng) {
  const SimGrid g = grid.resolved(k);
  const double l1 = k.constants().l1;
  double m = 6.0 * std::sqrt(g.t) + k.radius();
  for (int attempt = 0; attempt <= 3; ++attempt, m *= 2.0) {
    const double lo = g.u_min - m;
    const double hi = g.u_max + m;
    const double x_lo = detail::terminal_x(k, l1, g, lo, rng);
    const double x_hi = detail::terminal_x(k, l1, g, hi, rng);
    if (!(x_lo <= g.u_min) || !(x_hi >= g.u_max)) continue;
    const double tol = 1e-3 * (g.u_max - g.u_min);
    PreimageWindow w;
    w.v_lo = detail::bracket_preimage(k, l1, g, rng, g.u_min, lo, hi, false, tol);
    w.v_hi = detail::bracket_preimage(k, l1, g, rng, g.u_max, w.v_lo, hi, true, tol);
    return w;
  }
  throw InternalError("simulate_p_path: image window not covered after 3 extensions");
}

/// Density path sampled at n_points starting points spread uniformly over
/// the given preimage window.
inline DensitySamplePath simulate_p_path_on(const KernelSpec& k, const SimGrid& grid,
                                            const RngStream& rng, const PreimageWindow& w,
                                            std::size_t n_points) {
  SimGrid g = grid;
  g.u_min = w.v_lo;
  g.u_max = w.v_hi;
  g.n_space = n_points;
  const FlowPath f = simulate_flow(k, g, rng);
  DensitySamplePath out;
  out.u = f.x;
  out.p.resize(f.jac.size());
  for (std::size_t i = 0; i < f.jac.size(); ++i) out.p[i] = 1.0 / f.jac[i];
  return out;
}

/// Samples (x(v_j, t), 1 / dx/du(v_j, t)) for g.n_space starting points whose
/// images cover [g.u_min, g.u_max].
inline DensitySamplePath simulate_p_path(const KernelSpec& k, const SimGrid& g,
                                         const RngStream& rng) {
  const auto w = find_preimage_window(k, g, rng);
  return simulate_p_path_on(k, g, rng, w, g.n_space);
}

inline DensitySamplePath simulate_p_path(const KernelSpec& k, double t, const SimGrid& g,
                                         const RngStream& rng) {
  SimGrid gg = g;
  gg.t = t;
  return simulate_p_path(k, gg, rng);
}

/// Refinement tolerance: an interval between neighbouring samples is split
/// (at its midpoint in the starting coordinate) while its image is longer
/// than max_du or p changes by more than a factor exp(max_dlogp) across it.
struct RefineTolerance {
  double max_du = 1.0 / 32.0;
  double max_dlogp = 0.25;
};

/// A density path refined through a sequence of tolerances. level[j] is the
/// index of the first tolerance whose refinement produced sample j (base
/// samples have level 0), so the samples with level <= m are exactly the
/// path refined to tolerance m alone.
struct RefinedPath {
  DensitySamplePath path;
  std::vector<std::uint8_t> level;

  DensitySamplePath at_level(std::size_t m) const {
    DensitySamplePath out;
    for (std::size_t j = 0; j < level.size(); ++j) {
      if (level[j] <= m) {
        out.u.push_back(path.u[j]);
        out.p.push_back(path.p[j]);
      }
    }
    return out;
  }
};

/// Density path over the preimage window w, starting from n_base uniform
/// starting points and refined adaptively for each tolerance in turn. Only
/// intervals whose image meets [g.u_min, g.u_max] are refined.
inline RefinedPath simulate_p_path_refined(const KernelSpec& k, const SimGrid& grid,
                                           const RngStream& rng, const PreimageWindow& w,
                                           std::size_t n_base,
                                           std::span<const RefineTolerance> tolerances,
                                           std::size_t max_points = 1u << 16) {
  SimGrid g = grid.resolved(k);
  const double l1 = k.constants().l1;
  if (n_base < 2 || n_base > max_points) {
    throw DomainError("simulate_p_path_refined: n_base must lie in [2, max_points]");
  }

  struct Sample {
    double v, x, log_p;
    std::uint8_t level;
  };
  auto simulate = [&](std::span<const double> v, std::uint8_t level) {
    const auto pts = detail::run_points(k, l1, g, v, rng);
    std::vector<Sample> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = {v[i], pts[i].x, -pts[i].log_jac, level};
    return out;
  };

  std::vector<double> base(n_base);
  for (std::size_t i = 0; i < n_base; ++i) {
    base[i] = w.v_lo + (w.v_hi - w.v_lo) * static_cast<double>(i) / static_cast<double>(n_base - 1);
  }
  base.back() = w.v_hi;
  std::vector<Sample> samples = simulate(base, 0);

  for (std::size_t m = 0; m < tolerances.size(); ++m) {
    const auto tol = tolerances[m];
    for (;;) {
      std::vector<double> mids;
      for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        const Sample& a = samples[i];
        const Sample& b = samples[i + 1];
        if (b.x < g.u_min || a.x > g.u_max) continue;
        const bool wide = b.x - a.x > tol.max_du || std::abs(b.log_p - a.log_p) > tol.max_dlogp;
        if (wide && b.v - a.v > 1e-12 * (w.v_hi - w.v_lo)) mids.push_back(0.5 * (a.v + b.v));
      }
      if (mids.empty()) break;
      if (samples.size() + mids.size() > max_points) {
        throw InternalError("simulate_p_path_refined: refinement exceeded the point budget");
      }
      const auto fresh = simulate(mids, static_cast<std::uint8_t>(m));
      std::vector<Sample> merged;
      merged.reserve(samples.size() + fresh.size());
      std::merge(samples.begin(), samples.end(), fresh.begin(), fresh.end(),
                 std::back_inserter(merged),
                 [](const Sample& a, const Sample& b) { return a.v < b.v; });
      samples = std::move(merged);
    }
  }

  RefinedPath out;
  out.path.u.reserve(samples.size());
  for (const auto& s : samples) {
    out.path.u.push_back(s.x);
    out.path.p.push_back(std::exp(s.log_p));
    out.level.push_back(s.level);
  }
  for (std::size_t i = 1; i < out.path.u.size(); ++i) {
    if (!(out.path.u[i] > out.path.u[i - 1])) {
      throw InternalError("simulated flow lost monotonicity; increase n_time");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reduced system for (X1, X2) and the time integral of X1^2

struct ReducedSample {
  double x1 = 1.0;
  double x2 = 0.0;
  double sigma2 = 0.0;
};

/// X1 = exp(-L't/2 + sqrt(L') W1) exactly at the nodes, X2 = sqrt(L'') int X1 dW2
/// as a left-point sum, sigma2 = int_0^t X1^2 by the trapezoid rule.
inline ReducedSample simulate_reduced(const ModelParams& p, std::size_t n_steps,
                                      const RngStream& rng) {
  p.validate();
  if (n_steps < 1) throw DomainError("simulate_reduced: n_steps must be at least 1");
  const double dt = p.t / static_cast<double>(n_steps);
  const double sdt = std::sqrt(dt);
  const double sl1 = std::sqrt(p.l1);
  const double sl2 = std::sqrt(p.l2);
  double w1 = 0.0;
  double x1 = 1.0;
  double x2 = 0.0;
  double sq_sum = 0.5;  // X1(0)^2 / 2
  for (std::size_t k = 0; k < n_steps; ++k) {
    const auto z = rng.normal_pair(StreamTag::kReduced, static_cast<std::uint32_t>(k), 0);
    x2 += sl2 * x1 * sdt * z[1];
    w1 += sdt * z[0];
    const double s = dt * static_cast<double>(k + 1);
    x1 = std::exp(-0.5 * p.l1 * s + sl1 * w1);
    sq_sum += (k + 1 == n_steps ? 0.5 : 1.0) * x1 * x1;
  }
  return {x1, x2, sq_sum * dt};
}

// ---------------------------------------------------------------------------
// Brownian-bridge factor

namespace detail {

/// int_0^h exp(a + (b - a) s / h) ds, stable when a ~ b.
inline double exp_linear_integral(double a, double b, double h) {
  const double d = b - a;
  if (std::abs(d) < 1e-8) return h * std::exp(a) * (1.0 + 0.5 * d + d * d / 6.0);
  return h * std::exp(a) * std::expm1(d) / d;
}

}  // namespace detail

/// Monte Carlo estimate of E sqrt( int_0^1 exp(-2 ln c s + 2 sqrt(L't) B(s)) ds )
/// with B a standard Brownian bridge. B is built as W(s) - s W(1) on n_steps
/// uniform nodes; the exponent is integrated exactly between nodes.
inline MCEstimate bridge_factor(const ModelParams& p, double c, std::size_t n_steps,
                                std::size_t n_reps, const RngStream& rng) {
  p.validate();
  if (!(c > 1.0)) throw DomainError("bridge_factor: c must exceed 1");
  if (n_steps < 1 || n_reps < 2) throw DomainError("bridge_factor: need n_steps >= 1, n_reps >= 2");
  const double two_ln_c = 2.0 * std::log(c);
  const double scale = 2.0 * std::sqrt(p.a());
  const double h = 1.0 / static_cast<double>(n_steps);
  const double sh = std::sqrt(h);
  std::vector<double> values(n_reps);
  parallel_for(n_reps, [&](std::size_t r) {
    const RngStream s = rng.with_replica(static_cast<std::uint32_t>(r));
    std::vector<double> w(n_steps + 1, 0.0);
    for (std::size_t i = 0; i < n_steps; i += 2) {
      const auto z = s.normal_pair(StreamTag::kBridge, 0, static_cast<std::uint32_t>(i / 2));
      w[i + 1] = w[i] + sh * z[0];
      if (i + 2 <= n_steps) w[i + 2] = w[i + 1] + sh * z[1];
    }
    const double w1 = w[n_steps];
    double integral = 0.0;
    double e_prev = 0.0;  // exponent at s = 0
    for (std::size_t i = 1; i <= n_steps; ++i) {
      const double si = static_cast<double>(i) * h;
      const double e = -two_ln_c * si + scale * (w[i] - si * w1);
      integral += detail::exp_linear_integral(e_prev, e, h);
      e_prev = e;
    }
    values[r] = std::sqrt(integral);
  });
  return mc_aggregate(values, rng.seed);
}

// ---------------------------------------------------------------------------
// Strong convergence study

struct ConvergenceRow {
  std::size_t n = 0;
  double error = 0.0;      ///< mean over replicas of sup_u |x_n(u) - x_ref(u)|
  double std_error = 0.0;
};

/// Coupled-refinement study of the Euler-Maruyama strong error. The reference
/// uses n_ref = 64 max(n_list) steps; each coarse run sums the reference
/// increments over blocks of n_ref / n steps.
inline std::vector<ConvergenceRow> em_convergence_study(const KernelSpec& k, double t,
                                                        const SimGrid& grid,
                                                        std::span<const std::size_t> n_list,
                                                        std::size_t n_reps, const RngStream& rng) {
  if (n_list.empty()) throw DomainError("em_convergence_study: empty n_list");
  if (n_reps < 2) throw DomainError("em_convergence_study: need at least 2 replicas");
  SimGrid gg = grid;
  gg.t = t;
  const SimGrid g = gg.resolved(k);
  const std::size_t n_max = *std::max_element(n_list.begin(), n_list.end());
  const std::size_t n_ref = 64 * n_max;
  for (std::size_t n : n_list) {
    if (n == 0 || n_ref % n != 0) throw DomainError("em_convergence_study: n must divide n_ref");
  }
  const double l1 = k.constants().l1;
  const auto u = g.u_grid();
  const double dt_ref = t / static_cast<double>(n_ref);

  std::vector<std::vector<double>> err(n_list.size(), std::vector<double>(n_reps));
  parallel_for(n_reps, [&](std::size_t r) {
    const RngStream s = rng.with_replica(static_cast<std::uint32_t>(r));
    const detail::SheetNoise fine = detail::sheet_noise(s, g.q_step, dt_ref);
    auto ref = detail::initial_states(u);
    detail::advance_points(k, l1, g.q_step, g.q_pad, dt_ref, n_ref, fine, ref);
    for (std::size_t m = 0; m < n_list.size(); ++m) {
      const std::size_t n = n_list[m];
      auto pts = detail::initial_states(u);
      const detail::AggregatedNoise coarse(fine, n_ref / n);
      detail::advance_points(k, l1, g.q_step, g.q_pad, t / static_cast<double>(n), n, coarse,
                             pts);
      double sup = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) sup = std::max(sup, std::abs(pts[i].x - ref[i].x));
      err[m][r] = sup;
    }
  });
  std::vector<ConvergenceRow> rows;
  for (std::size_t m = 0; m < n_list.size(); ++m) {
    const auto e = mc_aggregate(err[m], rng.seed);
    rows.push_back({n_list[m], e.mean, e.std_error});
  }
  return rows;
}

/// Least-squares slope of log(error) against log(n).
inline double loglog_slope(std::span<const ConvergenceRow> rows) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double m = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double x = std::log(static_cast<double>(r.n));
    const double y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace flowcross
