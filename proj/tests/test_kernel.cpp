#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flowcross/kernel.hpp"

using namespace flowcross;

namespace {
// Reference values from 40-digit quadrature of the bump shape
constexpr double kNorm = 2.7411551457069723135;
constexpr double kL1 = 3.0776091312317771544;
constexpr double kL2 = 81.407946543257983170;
}  // namespace

TEST(Kernel, Construction) {
  const auto k = make_bump_kernel(1.0);
  EXPECT_EQ(k.radius(), 1.0);
  EXPECT_EQ(k.support_diameter(), 2.0);
  EXPECT_NEAR(k.norm_const(), kNorm, 1e-12 * kNorm);
  EXPECT_EQ(k(1.0), 0.0);
  EXPECT_EQ(k(-1.0), 0.0);
  EXPECT_NEAR(k(0.0), k.norm_const() * std::exp(-1.0), 1e-15);
}

TEST(Kernel, RejectsBadRadius) {
  EXPECT_THROW(make_bump_kernel(0.0), DomainError);
  EXPECT_THROW(make_bump_kernel(-1.0), DomainError);
  EXPECT_THROW(make_bump_kernel(INFINITY), DomainError);
}

TEST(Kernel, Normalization) {
  for (double r : {0.25, 1.0, 3.0}) {
    const auto k = make_bump_kernel(r);
    const double m =
        integrate_adaptive([&](double q) { return k(q) * k(q); }, -r, r, 1e-13).value;
    EXPECT_NEAR(m, 1.0, 1e-10) << r;
  }
}

TEST(Kernel, EvalOrders) {
  const auto k = make_bump_kernel(1.0);
  EXPECT_EQ(kernel_eval(k, 2.0, 0), 0.0);
  EXPECT_EQ(kernel_eval(k, 0.0, 1), 0.0);
  EXPECT_NEAR(kernel_eval(k, 0.5, 0), 0.72256065153955597325, 1e-14);
  EXPECT_NEAR(kernel_eval(k, 0.5, 1), -1.2845522694036549685, 1e-13);
  EXPECT_NEAR(kernel_eval(k, 0.5, 2), -3.7109287782772254645, 1e-12);
  EXPECT_THROW(kernel_eval(k, 0.0, 3), DomainError);
  for (int order = 0; order <= 2; ++order) {
    EXPECT_EQ(kernel_eval(k, 1.0, order), 0.0);
    EXPECT_EQ(kernel_eval(k, -1.0, order), 0.0);
  }
}

TEST(Kernel, ExactSymmetry) {
  const auto k = make_bump_kernel(1.3);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> dist(-1.5, 1.5);
  for (int i = 0; i < 100; ++i) {
    const double q = dist(gen);
    const auto p = k.values(q);
    const auto m = k.values(-q);
    EXPECT_EQ(p.phi, m.phi);
    EXPECT_EQ(p.d1, -m.d1);
    EXPECT_EQ(p.d2, m.d2);
    EXPECT_GE(p.phi, 0.0);
  }
}

TEST(Kernel, DerivativesMatchFiniteDifferences) {
  const auto k = make_bump_kernel(1.0);
  const double h = 1e-5;
  for (double q = -0.9; q <= 0.9; q += 0.05) {
    const double fd1 = (k(q + h) - k(q - h)) / (2.0 * h);
    const double fd2 = (k(q + h) - 2.0 * k(q) + k(q - h)) / (h * h);
    EXPECT_NEAR(kernel_eval(k, q, 1), fd1, 1e-6) << q;
    EXPECT_NEAR(kernel_eval(k, q, 2), fd2, 1e-4) << q;
    // order-1 is the derivative of order-0; order-2 of order-1
    const double fd21 = (kernel_eval(k, q + h, 1) - kernel_eval(k, q - h, 1)) / (2.0 * h);
    EXPECT_NEAR(kernel_eval(k, q, 2), fd21, 1e-6) << q;
  }
}

TEST(Kernel, Constants) {
  const auto c = kernel_constants(make_bump_kernel(1.0));
  EXPECT_NEAR(c.l1, kL1, 1e-10 * kL1);
  EXPECT_NEAR(c.l2, kL2, 1e-10 * kL2);
}

TEST(Kernel, ConstantsScaling) {
  // Under radius r -> s r with unit L2 norm kept: L' ~ 1/s^2, L'' ~ 1/s^4
  const auto c1 = kernel_constants(make_bump_kernel(1.0));
  const auto c2 = kernel_constants(make_bump_kernel(2.0));
  EXPECT_NEAR(c2.l1, c1.l1 / 4.0, 1e-8);
  EXPECT_NEAR(c2.l2, c1.l2 / 16.0, 1e-8);
}

TEST(Kernel, ConstantsMatchRiemannSum) {
  const auto k = make_bump_kernel(1.0);
  const int n = 1000000;
  const double h = 2.0 / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = k.values(-1.0 + (i + 0.5) * h).d1;
    s += d * d;
  }
  EXPECT_NEAR(kernel_constants(k).l1, s * h, 1e-6);
}

TEST(Kernel, Covariance) {
  const auto k = make_bump_kernel(1.0);
  EXPECT_NEAR(covariance_phi(k, 0.0), 1.0, 1e-10);
  EXPECT_EQ(covariance_phi(k, 2.0), 0.0);
  EXPECT_EQ(covariance_phi(k, -2.5), 0.0);
  EXPECT_NEAR(covariance_phi(k, 0.3), covariance_phi(k, -0.3), 1e-12);
  EXPECT_NEAR(covariance_phi(k, 0.3), 0.87920452061494492063, 1e-12);
  EXPECT_NEAR(covariance_phi(k, 1.0), 0.25448009084824563554, 1e-12);
  for (double z = -2.2; z <= 2.2; z += 0.1) {
    const double v = covariance_phi(k, z);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}
