#pragma once

// Adaptive Gauss-Kronrod integration plus the two integral families that the
// closed-form laws are built from: the oscillatory-decaying core
//   int_0^inf exp(-v^2/(2a)) sinh(v) sin(pi v/a) g(v) dv
// and the Hartman-Watson function i_y(z).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "flowcross/errors.hpp"

namespace flowcross {

struct QuadResult {
  double value = 0.0;
  double err_estimate = 0.0;
  std::size_t evaluations = 0;
  /// Integral of |f| (as seen by the rule); sets the roundoff floor.
  double l1_norm = 0.0;
};

struct QuadOptions {
  double rel_tol = 1e-10;
  double abs_tol = 0.0;
  std::size_t max_panels = 4000;
};

namespace detail {

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
inline constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};
inline constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208931299971, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
// Gauss weights for the odd-indexed Kronrod nodes 1,3,5,7,9.
inline constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Panel {
  double lo = 0.0;
  double hi = 0.0;
  double value = 0.0;
  double err = 0.0;
  double abs_value = 0.0;

  bool operator<(const Panel& other) const { return err < other.err; }
};

inline void check_finite(double fx, double x) {
  if (!std::isfinite(fx)) {
    throw DomainError("integrand is not finite at x = " + std::to_string(x));
  }
}

template <class F>
Panel gauss_kronrod_21(const F& f, double lo, double hi) {
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  constexpr double kTiny = std::numeric_limits<double>::min();
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);

  std::array<double, 21> fv{};
  fv[10] = f(center);
  check_finite(fv[10], center);
  for (std::size_t j = 0; j < 10; ++j) {
    const double dx = half * kKronrodNodes[j];
    fv[j] = f(center - dx);
    check_finite(fv[j], center - dx);
    fv[20 - j] = f(center + dx);
    check_finite(fv[20 - j], center + dx);
  }

  double kronrod = kKronrodWeights[10] * fv[10];
  double gauss = 0.0;
  double abs_sum = kKronrodWeights[10] * std::abs(fv[10]);
  for (std::size_t j = 0; j < 10; ++j) {
    const double pair = fv[j] + fv[20 - j];
    kronrod += kKronrodWeights[j] * pair;
    abs_sum += kKronrodWeights[j] * (std::abs(fv[j]) + std::abs(fv[20 - j]));
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * pair;
  }
  const double mean = 0.5 * kronrod;
  double asc = kKronrodWeights[10] * std::abs(fv[10] - mean);
  for (std::size_t j = 0; j < 10; ++j) {
    asc += kKronrodWeights[j] * (std::abs(fv[j] - mean) + std::abs(fv[20 - j] - mean));
  }

  Panel p;
  p.lo = lo;
  p.hi = hi;
  p.value = kronrod * half;
  p.abs_value = abs_sum * std::abs(half);
  asc *= std::abs(half);
  double err = std::abs((kronrod - gauss) * half);
  if (asc != 0.0 && err != 0.0) {
    err = asc * std::min(1.0, std::pow(200.0 * err / asc, 1.5));
  }
  if (p.abs_value > kTiny / (50.0 * kEps)) {
    err = std::max(50.0 * kEps * p.abs_value, err);
  }
  p.err = err;
  return p;
}

}  // namespace detail

/// Globally adaptive integration over consecutive panels [breaks[i], breaks[i+1]].
/// Stops once the summed error estimate is below max(abs_tol, rel_tol*|I|) or
/// below the roundoff floor 100*eps*int|f|, whichever is larger.
template <class F>
QuadResult integrate_panels(const F& f, std::span<const double> breaks,
                            const QuadOptions& opts = {}) {
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  if (breaks.size() < 2) throw DomainError("integrate_panels: need at least two breakpoints");
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    if (!(breaks[i - 1] < breaks[i])) {
      throw DomainError("integrate_panels: breakpoints must be strictly increasing");
    }
  }
  if (!(opts.rel_tol > 0.0) || opts.abs_tol < 0.0) {
    throw DomainError("integrate_panels: tolerances must be positive");
  }

  std::priority_queue<detail::Panel> queue;
  QuadResult out;
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    queue.push(detail::gauss_kronrod_21(f, breaks[i - 1], breaks[i]));
    out.evaluations += 21;
  }

  double value = 0.0, err = 0.0, l1 = 0.0;
  auto resum = [&]() {
    // priority_queue hides its container; the copy is cheap next to f evaluations
    auto copy = queue;
    value = err = l1 = 0.0;
    while (!copy.empty()) {
      value += copy.top().value;
      err += copy.top().err;
      l1 += copy.top().abs_value;
      copy.pop();
    }
  };
  auto tolerance = [&]() {
    return std::max({opts.abs_tol, opts.rel_tol * std::abs(value), 100.0 * kEps * l1});
  };

  resum();
  std::size_t since_resum = 0;
  for (;;) {
    if (err <= tolerance()) {
      resum();
      if (err <= tolerance()) break;
    }
    if (queue.size() >= opts.max_panels) {
      throw ConvergenceError("adaptive quadrature did not converge within " +
                                 std::to_string(opts.max_panels) + " panels",
                             value, err);
    }
    const detail::Panel worst = queue.top();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(worst.lo < mid && mid < worst.hi)) {
      throw ConvergenceError("adaptive quadrature exhausted floating-point resolution", value,
                             err);
    }
    queue.pop();
    const auto left = detail::gauss_kronrod_21(f, worst.lo, mid);
    const auto right = detail::gauss_kronrod_21(f, mid, worst.hi);
    out.evaluations += 42;
    queue.push(left);
    queue.push(right);
    value += left.value + right.value - worst.value;
    err += left.err + right.err - worst.err;
    l1 += left.abs_value + right.abs_value - worst.abs_value;
    if (++since_resum == 64) {
      resum();
      since_resum = 0;
    }
  }
  out.value = value;
  out.err_estimate = err;
  out.l1_norm = l1;
  return out;
}

/// Adaptive integral of f over [a, b].
template <class F>
QuadResult integrate_adaptive(const F& f, double a, double b, double rel_tol = 1e-10,
                              double abs_tol = 0.0) {
  if (!(a < b)) throw DomainError("integrate_adaptive: require a < b");
  const std::array<double, 2> breaks = {a, b};
  return integrate_panels(f, breaks, QuadOptions{rel_tol, abs_tol});
}

/// Integral of f over [a, inf) via x = a + scale * s / (1 - s).
template <class F>
QuadResult integrate_to_infinity(const F& f, double a, double scale, double rel_tol = 1e-10,
                                 double abs_tol = 0.0) {
  if (!(scale > 0.0)) throw DomainError("integrate_to_infinity: scale must be positive");
  auto mapped = [&](double s) {
    const double one_minus = 1.0 - s;
    const double x = a + scale * s / one_minus;
    const double fx = f(x);
    if (fx == 0.0) return 0.0;
    return fx * scale / (one_minus * one_minus);
  };
  const std::array<double, 5> breaks = {0.0, 0.25, 0.5, 0.75, 1.0};
  return integrate_panels(mapped, breaks, QuadOptions{rel_tol, abs_tol});
}

// ---------------------------------------------------------------------------
// Oscillatory core

/// Smallest a = L't for which the literal oscillatory forms are evaluated.
/// Below it the e^{pi^2/(2a)} prefactor cancels more than ~9 digits.
inline constexpr double kOscillatoryMinA = 0.25;
inline constexpr double kOscillatoryMaxA = 25.0;

inline double oscillatory_truncation_point(double a) { return a + 12.0 * std::sqrt(a) + 5.0; }

/// Bound on int_{v_max}^inf exp(-v^2/(2a)) sinh(v) dv (Gaussian tail of the envelope).
inline double oscillatory_tail_envelope(double a, double v_max) {
  return 0.5 * std::exp(0.5 * a) * std::sqrt(0.5 * std::numbers::pi * a) *
         std::erfc((v_max - a) / std::sqrt(2.0 * a));
}

inline void check_oscillatory_domain(double a) {
  if (!(a > 0.0)) throw DomainError("oscillatory_core: a must be positive");
  if (a < kOscillatoryMinA || a > kOscillatoryMaxA) {
    throw StabilityError("oscillatory_core: a = " + std::to_string(a) +
                         " outside the stable range [" + std::to_string(kOscillatoryMinA) +
                         ", " + std::to_string(kOscillatoryMaxA) + "]");
  }
}

/// int_0^inf exp(-v^2/(2a)) sinh(v) sin(pi v / a) g(v) dv.
///
/// The range is truncated at v_max = a + 12 sqrt(a) + 5 and split into panels
/// of width a (half-periods of the sine). `g_tail_bound` must bound |g| on
/// [v_max, inf); the discarded tail contributes at most
/// g_tail_bound * oscillatory_tail_envelope(a, v_max), which is added to the
/// error estimate.
template <class G>
QuadResult oscillatory_core(double a, const G& g, double rel_tol, double g_tail_bound) {
  check_oscillatory_domain(a);
  const double v_max = oscillatory_truncation_point(a);
  const auto n_panels = static_cast<std::size_t>(std::ceil(v_max / a));
  std::vector<double> breaks(n_panels + 1);
  for (std::size_t i = 0; i <= n_panels; ++i) breaks[i] = a * static_cast<double>(i);

  const double inv_2a = 0.5 / a;
  const double omega = std::numbers::pi / a;
  auto integrand = [&](double v) {
    const double gv = g(v);
    if (gv == 0.0) return 0.0;
    // e^{-v^2/2a} sinh v, written to avoid overflow of sinh alone
    const double env = 0.5 * (std::exp(v - v * v * inv_2a) - std::exp(-v - v * v * inv_2a));
    return env * std::sin(omega * v) * gv;
  };
  QuadResult r = integrate_panels(integrand, breaks, QuadOptions{rel_tol, 0.0, 8000});
  r.err_estimate += std::abs(g_tail_bound) * oscillatory_tail_envelope(a, breaks.back());
  return r;
}

/// Same, with |g| on the tail bounded by |g(v_max)| (g non-increasing in
/// magnitude beyond the truncation point).
template <class G>
QuadResult oscillatory_core(double a, const G& g, double rel_tol = 1e-10) {
  check_oscillatory_domain(a);
  const double v_max =
      a * std::ceil(oscillatory_truncation_point(a) / a);
  return oscillatory_core(a, g, rel_tol, std::abs(g(v_max)));
}

// ---------------------------------------------------------------------------
// Hartman-Watson function

inline constexpr double kHartmanWatsonMinY = 0.5 * kOscillatoryMinA;

/// i_y(z) split as exp(log_scale) * integral.value so that callers can fold
/// further exponential factors in before exponentiating.
struct ScaledIntegral {
  double log_scale = 0.0;
  QuadResult integral;

  double value() const {
    if (integral.value <= 0.0) return 0.0;
    return std::exp(log_scale + std::log(integral.value));
  }
};

/// i_y(z) = z e^{pi^2/(4y)} / (pi sqrt(pi y)) * int_0^inf exp(-z cosh v - v^2/(4y))
///          sinh v sin(pi v/(2y)) dv,
/// with the factor e^{-z} pulled out of the integrand into log_scale.
inline ScaledIntegral hartman_watson_scaled(double y, double z, double rel_tol = 1e-10) {
  if (!(y > 0.0) || !(z > 0.0)) throw DomainError("hartman_watson_i: require y > 0 and z > 0");
  if (y < kHartmanWatsonMinY) {
    throw StabilityError("hartman_watson_i: y = " + std::to_string(y) +
                         " below stability floor " + std::to_string(kHartmanWatsonMinY));
  }
  ScaledIntegral out;
  const double pi = std::numbers::pi;
  out.log_scale = std::log(z) + pi * pi / (4.0 * y) - std::log(pi * std::sqrt(pi * y)) - z;
  auto g = [z](double v) {
    const double sh = std::sinh(0.5 * v);
    return std::exp(-2.0 * z * sh * sh);  // e^{-z (cosh v - 1)}
  };
  out.integral = oscillatory_core(2.0 * y, g, rel_tol, g(oscillatory_truncation_point(2.0 * y)));
  return out;
}

/// Hartman-Watson function. Values below the quadrature's absolute resolution
/// (deep small-z region, where the integral cancels almost completely) are
/// reported as 0.
inline double hartman_watson_i(double y, double z) { return hartman_watson_scaled(y, z).value(); }

}  // namespace flowcross
