#pragma once

// Closed-form one- and two-dimensional laws of the flow derivative and of the
// image density p_t, and the level-crossing intensity of p_t.
//
// Everything is parameterized by (t, L', L''), so nothing here depends on the
// choice of kernel; ModelParams::from_kernel bridges the two.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "flowcross/errors.hpp"
#include "flowcross/kernel.hpp"
#include "flowcross/quad.hpp"

namespace flowcross {

struct ModelParams {
  double t = 1.0;
  double l1 = 1.0;  ///< L'
  double l2 = 1.0;  ///< L''

  double a() const noexcept { return l1 * t; }

  void validate() const {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("ModelParams: t must be positive");
    if (!(l1 > 0.0) || !std::isfinite(l1)) throw DomainError("ModelParams: l1 must be positive");
    if (!(l2 > 0.0) || !std::isfinite(l2)) throw DomainError("ModelParams: l2 must be positive");
  }

  static ModelParams from_kernel(const KernelSpec& k, double t) {
    const auto& c = k.constants();
    ModelParams p{t, c.l1, c.l2};
    p.validate();
    return p;
  }
};

namespace detail {

/// log(sinh x) for x > 0 without overflow.
inline double log_sinh(double x) {
  if (x > 20.0) return x - std::numbers::ln2 + std::log1p(-std::exp(-2.0 * x));
  return std::log(std::sinh(x));
}

inline double positive_part_times_exp(double log_scale, double integral) {
  if (integral <= 0.0) return 0.0;
  return std::exp(log_scale + std::log(integral));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One-dimensional laws

/// Density of p_t(u):
///   1/sqrt(2 pi L't) * exp[-(ln z + 3/2 L't)^2 / (2 L't) + L't],  z > 0.
inline double density_p(const ModelParams& p, double z) {
  p.validate();
  if (!(z > 0.0)) throw DomainError("density_p: z must be positive");
  const double a = p.a();
  const double shifted = std::log(z) + 1.5 * a;
  return std::exp(-shifted * shifted / (2.0 * a) + a) / std::sqrt(2.0 * std::numbers::pi * a);
}

/// Density of dx/du(u, t). Same law as p_t(u).
inline double density_dxdu(const ModelParams& p, double z) {
  p.validate();
  if (!(z > 0.0)) throw DomainError("density_dxdu: z must be positive");
  const double a = p.a();
  const double shifted = std::log(z) + 1.5 * a;
  return std::exp(-shifted * shifted / (2.0 * a) + a) / std::sqrt(2.0 * std::numbers::pi * a);
}

/// P{p_t(u) > c}: upper Gaussian tail of ln p_t(u) ~ N(-a/2, a).
inline double tail_p_exact(const ModelParams& p, double c) {
  p.validate();
  if (!(c > 0.0)) throw DomainError("tail_p_exact: c must be positive");
  const double a = p.a();
  return 0.5 * std::erfc((std::log(c) + 0.5 * a) / std::sqrt(2.0 * a));
}

/// Leading-order large-c behaviour of P{p_t(u) > c}.
inline double tail_p_asymptotic(const ModelParams& p, double c) {
  p.validate();
  if (!(c > 1.0)) throw DomainError("tail_p_asymptotic: c must exceed 1");
  const double a = p.a();
  const double lc = std::log(c);
  return std::exp(-a / 8.0) * std::sqrt(a) / std::sqrt(2.0 * std::numbers::pi) /
         (std::sqrt(c) * lc) * std::exp(-lc * lc / (2.0 * a));
}

// ---------------------------------------------------------------------------
// Two-dimensional laws

namespace detail {

/// log of e^{pi^2/(2a) - a/8} / (pi sqrt(2 pi L'' t)), shared by both joint laws.
inline double log_joint_prefactor(const ModelParams& p) {
  const double pi = std::numbers::pi;
  const double a = p.a();
  return pi * pi / (2.0 * a) - a / 8.0 - std::log(pi * std::sqrt(2.0 * pi * p.l2 * p.t));
}

}  // namespace detail

/// Joint density of X1 = dx/du and X2 = (d2x/du2)/(dx/du) at time t.
inline QuadResult joint_density_X_detail(const ModelParams& p, double z1, double z2,
                                         double rel_tol = 1e-10) {
  p.validate();
  if (!(z1 > 0.0)) throw DomainError("joint_density_X: z1 must be positive");
  const double kappa = p.l1 / p.l2;
  const double base = 1.0 + z1 * z1 + kappa * z2 * z2;
  auto g = [=](double v) {
    const double d = base + 2.0 * z1 * std::cosh(v);
    return 1.0 / (d * std::sqrt(d));
  };
  QuadResult r = oscillatory_core(p.a(), g, rel_tol);
  const double scale = std::exp(detail::log_joint_prefactor(p) - 0.5 * std::log(z1));
  r.value = std::max(r.value, 0.0) * scale;
  r.err_estimate *= scale;
  r.l1_norm *= scale;
  return r;
}

inline double joint_density_X(const ModelParams& p, double z1, double z2,
                              double rel_tol = 1e-10) {
  return joint_density_X_detail(p, z1, z2, rel_tol).value;
}

/// Joint density of p_t(u) and its spatial derivative p_t'(u).
inline QuadResult joint_density_p_detail(const ModelParams& p, double z1, double z2,
                                         double rel_tol = 1e-10) {
  p.validate();
  if (!(z1 > 0.0)) throw DomainError("joint_density_p: z1 must be positive");
  const double kappa = p.l1 / p.l2;
  const double z1_sq = z1 * z1;
  const double base = z1_sq + z1_sq * z1_sq + kappa * z2 * z2;
  const double cube = 2.0 * z1_sq * z1;
  auto g = [=](double v) {
    const double d = base + cube * std::cosh(v);
    return 1.0 / (d * std::sqrt(d));
  };
  QuadResult r = oscillatory_core(p.a(), g, rel_tol);
  const double scale = std::exp(detail::log_joint_prefactor(p) + 1.5 * std::log(z1));
  r.value = std::max(r.value, 0.0) * scale;
  r.err_estimate *= scale;
  r.l1_norm *= scale;
  return r;
}

inline double joint_density_p(const ModelParams& p, double z1, double z2,
                              double rel_tol = 1e-10) {
  return joint_density_p_detail(p, z1, z2, rel_tol).value;
}

/// Joint density of X1(t) and sigma_t^2 = int_0^t X1(s)^2 ds, via the
/// Hartman-Watson function i_{L't/2}.
inline double joint_density_X1_sigma2(const ModelParams& p, double z1, double z2,
                                      double rel_tol = 1e-10) {
  p.validate();
  if (!(z1 > 0.0) || !(z2 > 0.0)) {
    throw DomainError("joint_density_X1_sigma2: z1 and z2 must be positive");
  }
  const double a = p.a();
  const auto hw = hartman_watson_scaled(0.5 * a, z1 / (p.l1 * z2), rel_tol);
  const double log_factor = -a / 8.0 - (1.0 + z1 * z1) / (2.0 * p.l1 * z2) -
                            std::log(2.0 * z2) - 1.5 * std::log(z1);
  return detail::positive_part_times_exp(log_factor + hw.log_scale, hw.integral.value);
}

// ---------------------------------------------------------------------------
// Level-crossing intensity

namespace detail {

inline double log_intensity_prefactor(const ModelParams& p) {
  const double pi = std::numbers::pi;
  const double a = p.a();
  return 0.5 * std::log(2.0 * p.l2) - a / 8.0 - std::log(pi * p.l1 * std::sqrt(pi * p.t));
}

}  // namespace detail

/// Expected number of crossings of level c by u -> p_t(u) on [0, 1].
///
/// Evaluated through the sign-definite representation obtained by moving the
/// integration contour of the oscillatory form from the real axis to
/// Im v = pi, where only the branch cut |Re v| > |ln c| contributes:
///   mu = C c^{-1/2} int_{|ln c|}^inf e^{-w^2/(2a)} sinh w / sqrt(2 cosh w / c - 1 - 1/c^2) dw,
///   C = sqrt(2 L'') e^{-a/8} / (pi L' sqrt(pi t)).
/// With w = |ln c| + r^2 the integrand is smooth and positive, so the value
/// keeps full relative precision for every c > 0, including the far tail
/// where the oscillatory form cancels to nothing.
inline QuadResult intensity_detail(const ModelParams& p, double c, double rel_tol = 1e-12) {
  p.validate();
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("intensity: c must be positive");
  const double a = p.a();
  const double w0 = std::abs(std::log(c));

  // r e^{-(w^2-w0^2)/(2a)} sinh w / sqrt(sinh(w0 + r^2/2) sinh(r^2/2)), w = w0 + r^2,
  // evaluated in logs; the c^{-1/2} cancels against the square root
  auto integrand = [=](double r) {
    const double r2 = r * r;
    const double half = 0.5 * r2;
    if (half == 0.0) return 0.0;
    const double w = w0 + r2;
    const double log_den = 0.5 * (detail::log_sinh(w0 + half) + detail::log_sinh(half));
    const double log_num = std::log(r) - r2 * (2.0 * w0 + r2) / (2.0 * a) + detail::log_sinh(w);
    return std::exp(log_num - log_den);
  };
  // Gaussian decay sets in at r^2 ~ a / w0 (large c) or r^4 ~ 2a (c ~ 1)
  const double scale = w0 > 0.0 ? std::min(std::sqrt(a / w0), std::pow(2.0 * a, 0.25))
                                 : std::pow(2.0 * a, 0.25);
  QuadResult r = integrate_to_infinity(integrand, 0.0, scale, rel_tol);
  const double log_scale = detail::log_intensity_prefactor(p) - w0 * w0 / (2.0 * a);
  const double factor = std::exp(log_scale);
  r.value *= factor;
  r.err_estimate *= factor;
  r.l1_norm *= factor;
  return r;
}

inline double intensity(const ModelParams& p, double c) { return intensity_detail(p, c).value; }

/// The same intensity through its literal oscillatory form
///   C e^{pi^2/(2a)} c^{-1/2} int_0^inf e^{-v^2/(2a)} sinh v sin(pi v/a)
///       / sqrt(1 + 2 cosh v / c + 1/c^2) dv.
/// Only usable inside the oscillatory stability range and for moderate c.
inline QuadResult intensity_direct_detail(const ModelParams& p, double c,
                                          double rel_tol = 1e-10) {
  p.validate();
  if (!(c > 0.0)) throw DomainError("intensity_direct: c must be positive");
  const double inv_c = 1.0 / c;
  const double base = 1.0 + inv_c * inv_c;
  auto g = [=](double v) { return 1.0 / std::sqrt(base + 2.0 * std::cosh(v) * inv_c); };
  QuadResult r = oscillatory_core(p.a(), g, rel_tol);
  const double pi = std::numbers::pi;
  const double factor = std::exp(detail::log_intensity_prefactor(p) + pi * pi / (2.0 * p.a()) -
                                 0.5 * std::log(c));
  r.value *= factor;
  r.err_estimate *= factor;
  r.l1_norm *= factor;
  return r;
}

inline double intensity_direct(const ModelParams& p, double c) {
  return intensity_direct_detail(p, c).value;
}

/// Rice form: 2 int_0^inf z * joint_density_p(c, z) dz.
/// The error estimate adds a bound on the propagated inner-quadrature error.
inline QuadResult intensity_rice_detail(const ModelParams& p, double c, double rel_tol = 1e-9) {
  p.validate();
  if (!(c > 0.0)) throw DomainError("intensity_rice: c must be positive");
  const double inner_tol = std::max(0.01 * rel_tol, 1e-13);
  const double scale = c * (1.0 + c) * std::sqrt(p.l2 / p.l1);
  double worst_inner = 0.0;
  auto integrand = [&](double z) {
    const auto d = joint_density_p_detail(p, c, z, inner_tol);
    worst_inner = std::max(worst_inner, 2.0 * z * d.err_estimate);
    return 2.0 * z * d.value;
  };
  // integrate in s with z = scale * s / (1 - s) so the inner error can be
  // bounded on the finite s-range
  double worst_mapped = 0.0;
  auto mapped = [&](double s) {
    const double om = 1.0 - s;
    const double z = scale * s / om;
    const double jac = scale / (om * om);
    worst_inner = 0.0;
    const double v = integrand(z) * jac;
    worst_mapped = std::max(worst_mapped, worst_inner * jac);
    return v;
  };
  const std::array<double, 6> breaks = {0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  QuadResult r = integrate_panels(mapped, breaks, QuadOptions{rel_tol, 0.0});
  r.err_estimate += worst_mapped;
  return r;
}

inline double intensity_rice(const ModelParams& p, double c) {
  return intensity_rice_detail(p, c).value;
}

/// Leading-order large-c intensity:
///   e^{-L't/8} sqrt(L'') / (pi sqrt(2L')) * sqrt(c / ln c) * exp[-(ln c)^2 / (2L't)].
inline double intensity_asymptotic(const ModelParams& p, double c) {
  p.validate();
  if (!(c > 1.0)) throw DomainError("intensity_asymptotic: c must exceed 1");
  const double a = p.a();
  const double lc = std::log(c);
  return std::exp(-a / 8.0) * std::sqrt(p.l2) / (std::numbers::pi * std::sqrt(2.0 * p.l1)) *
         std::sqrt(c / lc) * std::exp(-lc * lc / (2.0 * a));
}

}  // namespace flowcross
