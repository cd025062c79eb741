#pragma once

// The smooth compactly supported kernel phi that drives the flow, built on the
// standard bump exp(-1/(1-s^2)), s = q/radius, scaled so that int phi^2 = 1.

#include <array>
#include <cmath>

#include "flowcross/errors.hpp"
#include "flowcross/quad.hpp"

namespace flowcross {

struct KernelConstants {
  double l1 = 0.0;  ///< L'  = int phi'^2
  double l2 = 0.0;  ///< L'' = int phi''^2
};

/// phi(q) = norm_const * exp(-1/(1 - (q/radius)^2)) on |q| < radius, 0 elsewhere.
/// Immutable after construction.
class KernelSpec {
 public:
  double radius() const noexcept { return radius_; }
  double norm_const() const noexcept { return norm_const_; }
  /// Diameter of the support.
  double support_diameter() const noexcept { return 2.0 * radius_; }

  /// phi and its first two derivatives at q, computed together (they share
  /// the exponential). Exactly 0 for |q| >= radius.
  struct Values {
    double phi = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
  };

  Values values(double q) const noexcept {
    const double s = q * inv_radius_;
    const double d = 1.0 - s * s;
    if (!(d > 0.0)) return {};
    const double inv_d = 1.0 / d;
    const double e = norm_const_ * std::exp(-inv_d);
    // g(s) = -1/(1-s^2): g' = -2s/(1-s^2)^2, g'' = -(2+6s^2)/(1-s^2)^3
    const double g1 = -2.0 * s * inv_d * inv_d;
    const double g2 = -(2.0 + 6.0 * s * s) * inv_d * inv_d * inv_d;
    return {e, e * g1 * inv_radius_, e * (g1 * g1 + g2) * inv_radius_ * inv_radius_};
  }

  double operator()(double q) const noexcept { return values(q).phi; }

  /// L' and L'', computed once at construction.
  const KernelConstants& constants() const noexcept { return constants_; }

 private:
  friend KernelSpec make_bump_kernel(double radius);
  KernelSpec(double radius, double norm_const)
      : radius_(radius), inv_radius_(1.0 / radius), norm_const_(norm_const) {}

  double radius_;
  double inv_radius_;
  double norm_const_;
  KernelConstants constants_;
};

inline KernelConstants kernel_constants(const KernelSpec& k);

/// Bump kernel of half-width `radius`, normalized so that int phi^2 = 1.
inline KernelSpec make_bump_kernel(double radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw DomainError("make_bump_kernel: radius must be positive and finite");
  }
  // int phi^2 = norm^2 * radius * int_{-1}^{1} exp(-2/(1-s^2)) ds
  auto shape_sq = [](double s) {
    const double d = 1.0 - s * s;
    return d > 0.0 ? std::exp(-2.0 / d) : 0.0;
  };
  const double base = integrate_adaptive(shape_sq, -1.0, 1.0, 1e-14).value;
  KernelSpec k(radius, 1.0 / std::sqrt(radius * base));
  k.constants_ = kernel_constants(k);
  return k;
}

/// phi^(order)(q) for order in {0, 1, 2}.
inline double kernel_eval(const KernelSpec& k, double q, int order) {
  const auto v = k.values(q);
  switch (order) {
    case 0:
      return v.phi;
    case 1:
      return v.d1;
    case 2:
      return v.d2;
    default:
      throw DomainError("kernel_eval: order must be 0, 1 or 2");
  }
}

inline KernelConstants kernel_constants(const KernelSpec& k) {
  const double r = k.radius();
  auto d1_sq = [&k](double q) {
    const double v = k.values(q).d1;
    return v * v;
  };
  auto d2_sq = [&k](double q) {
    const double v = k.values(q).d2;
    return v * v;
  };
  // split at 0: both integrands are even, the halves are evaluated the same way
  const std::array<double, 3> breaks = {-r, 0.0, r};
  return {integrate_panels(d1_sq, breaks, {1e-12}).value,
          integrate_panels(d2_sq, breaks, {1e-12}).value};
}

/// Phi(z) = int phi(z + q) phi(q) dq, the spatial covariance of the flow.
inline double covariance_phi(const KernelSpec& k, double z) {
  const double r = k.radius();
  const double az = std::abs(z);
  if (az >= 2.0 * r) return 0.0;
  // phi is even, so Phi is even; integrate over the overlap for |z|
  auto prod = [&k, az](double q) { return k(az + q) * k(q); };
  return integrate_adaptive(prod, -r, r - az, 1e-13).value;
}

}  // namespace flowcross
