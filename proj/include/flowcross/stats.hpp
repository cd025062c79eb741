#pragma once

// Goodness-of-fit tests and Monte Carlo aggregation.

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "flowcross/errors.hpp"
#include "flowcross/quad.hpp"

namespace flowcross {

struct GofResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  int dof = 0;  ///< chi-square only
};

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_reps = 0;
  std::uint64_t seed = 0;
};

/// Sample mean and standard error sd / sqrt(n).
inline MCEstimate mc_aggregate(std::span<const double> values, std::uint64_t seed = 0) {
  const std::size_t n = values.size();
  if (n < 2) throw DomainError("mc_aggregate: need at least two values");
  // two-pass for accuracy; summation order is fixed so results are reproducible
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n)), n, seed};
}

/// P(K > lambda) for the Kolmogorov limit distribution.
inline double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  const double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // theta-function form converges fast for small lambda
    const double x = -pi * pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 20; k += 2) s += std::exp(x * k * k);
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += sign * term;
    if (term < 1e-300) break;
    sign = -sign;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

namespace detail {

// Stephens' finite-n adjustment of the asymptotic scaling
inline double ks_p_value(double d, double n_eff) {
  const double rn = std::sqrt(n_eff);
  return kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d);
}

}  // namespace detail

/// One-sample Kolmogorov-Smirnov test against a continuous cdf.
inline GofResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf) {
  const std::size_t n = samples.size();
  if (n < 20) throw DomainError("ks_test: need at least 20 samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double dn = static_cast<double>(n);
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / dn - f, f - static_cast<double>(i) / dn});
  }
  return {d, detail::ks_p_value(d, dn), n, 0};
}

/// The statistic alone, without the sample-size floor (used for hand checks).
inline double ks_statistic(std::span<const double> samples,
                           const std::function<double(double)>& cdf) {
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double dn = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / dn - f, f - static_cast<double>(i) / dn});
  }
  return d;
}

/// Two-sample Kolmogorov-Smirnov test.
inline GofResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 20 || b.size() < 20) throw DomainError("ks_two_sample: need at least 20 samples each");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return {d, detail::ks_p_value(d, nx * ny / (nx + ny)), x.size() + y.size(), 0};
}

/// Pearson chi-square from observed counts and bin probabilities.
/// Bins are merged in the given order until every expected count is >= 5;
/// degrees of freedom = (merged bins - 1).
inline GofResult chi2_from_counts(std::span<const double> observed,
                                  std::span<const double> probabilities) {
  if (observed.size() != probabilities.size() || observed.empty()) {
    throw DomainError("chi2: observed and expected bin counts differ in length");
  }
  double total = 0.0;
  for (double o : observed) total += o;
  if (!(total > 0.0)) throw DomainError("chi2: all bins are empty");

  std::vector<std::pair<double, double>> merged;  // (observed, expected)
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o_acc += observed[i];
    e_acc += std::max(probabilities[i], 0.0) * total;
    if (e_acc >= 5.0) {
      merged.emplace_back(o_acc, e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (merged.empty()) {
      merged.emplace_back(o_acc, e_acc);
    } else {
      merged.back().first += o_acc;
      merged.back().second += e_acc;
    }
  }
  if (merged.size() < 2) throw DomainError("chi2: fewer than two bins after merging");

  double stat = 0.0;
  for (const auto& [o, e] : merged) {
    if (e <= 0.0) {
      if (o > 0.0) return {INFINITY, 0.0, static_cast<std::size_t>(total), 0};
      continue;
    }
    stat += (o - e) * (o - e) / e;
  }
  const int dof = static_cast<int>(merged.size()) - 1;
  const double p = boost::math::gamma_q(0.5 * dof, 0.5 * stat);
  return {stat, p, static_cast<std::size_t>(total), dof};
}

/// One-dimensional binned chi-square. Bin probabilities come from adaptive
/// quadrature of `density` over each cell of `edges`; the mass outside
/// [edges.front(), edges.back()] forms one extra bin.
inline GofResult chi2_binned(std::span<const double> samples,
                             const std::function<double(double)>& density,
                             std::span<const double> edges) {
  if (edges.size() < 2) throw DomainError("chi2_binned: need at least one bin");
  if (!std::is_sorted(edges.begin(), edges.end())) {
    throw DomainError("chi2_binned: edges must be increasing");
  }
  const std::size_t nb = edges.size() - 1;
  std::vector<double> obs(nb + 1, 0.0);
  std::vector<double> prob(nb + 1, 0.0);
  for (double s : samples) {
    if (s < edges.front() || s >= edges.back()) {
      obs[nb] += 1.0;
      continue;
    }
    const auto it = std::upper_bound(edges.begin(), edges.end(), s);
    obs[static_cast<std::size_t>(it - edges.begin()) - 1] += 1.0;
  }
  double inside = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    prob[i] = integrate_adaptive(density, edges[i], edges[i + 1], 1e-10).value;
    inside += prob[i];
  }
  prob[nb] = std::max(0.0, 1.0 - inside);
  return chi2_from_counts(obs, prob);
}

/// Two-dimensional binned chi-square on a product partition. Cell
/// probabilities use a fixed tensor Gauss-Legendre rule (the densities here
/// are smooth inside cells); the complement of the box is one extra bin.
inline GofResult chi2_binned_2d(std::span<const std::pair<double, double>> samples,
                                const std::function<double(double, double)>& density,
                                std::span<const double> edges_x, std::span<const double> edges_y) {
  if (edges_x.size() < 2 || edges_y.size() < 2) throw DomainError("chi2_binned_2d: need bins");
  if (!std::is_sorted(edges_x.begin(), edges_x.end()) ||
      !std::is_sorted(edges_y.begin(), edges_y.end())) {
    throw DomainError("chi2_binned_2d: edges must be increasing");
  }
  const std::size_t nx = edges_x.size() - 1;
  const std::size_t ny = edges_y.size() - 1;
  const std::size_t outside = nx * ny;
  std::vector<double> obs(outside + 1, 0.0);
  for (const auto& [a, b] : samples) {
    if (a < edges_x.front() || a >= edges_x.back() || b < edges_y.front() || b >= edges_y.back()) {
      obs[outside] += 1.0;
      continue;
    }
    const auto ix = static_cast<std::size_t>(
        std::upper_bound(edges_x.begin(), edges_x.end(), a) - edges_x.begin() - 1);
    const auto iy = static_cast<std::size_t>(
        std::upper_bound(edges_y.begin(), edges_y.end(), b) - edges_y.begin() - 1);
    obs[ix * ny + iy] += 1.0;
  }

  using Rule = boost::math::quadrature::gauss<double, 10>;
  const auto& nodes = Rule::abscissa();
  const auto& weights = Rule::weights();
  // boost stores the non-negative half of the symmetric rule
  std::vector<std::pair<double, double>> rule;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    rule.emplace_back(nodes[i], weights[i]);
    if (nodes[i] != 0.0) rule.emplace_back(-nodes[i], weights[i]);
  }

  std::vector<double> prob(outside + 1, 0.0);
  double inside = 0.0;
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const double cx = 0.5 * (edges_x[ix] + edges_x[ix + 1]);
    const double hx = 0.5 * (edges_x[ix + 1] - edges_x[ix]);
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const double cy = 0.5 * (edges_y[iy] + edges_y[iy + 1]);
      const double hy = 0.5 * (edges_y[iy + 1] - edges_y[iy]);
      double s = 0.0;
      for (const auto& [xa, wa] : rule) {
        for (const auto& [ya, wb] : rule) s += wa * wb * density(cx + hx * xa, cy + hy * ya);
      }
      prob[ix * ny + iy] = s * hx * hy;
      inside += prob[ix * ny + iy];
    }
  }
  prob[outside] = std::max(0.0, 1.0 - inside);
  return chi2_from_counts(obs, prob);
}

}  // namespace flowcross
