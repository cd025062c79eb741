#pragma once

// Level crossings of sampled density paths and Monte Carlo estimates of the
// crossing intensity on [0, 1].

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "flowcross/errors.hpp"
#include "flowcross/flowsim.hpp"
#include "flowcross/parallel.hpp"
#include "flowcross/stats.hpp"

namespace flowcross {

enum class CrossingKind { kAll, kUp };

/// Sign changes of p - c between consecutive samples with u in [lo, hi].
/// A sample exactly at c inherits the sign of its predecessor.
inline std::size_t count_crossings(const DensitySamplePath& path, double c, double lo, double hi,
                                   CrossingKind kind = CrossingKind::kAll) {
  if (path.u.size() != path.p.size()) throw DomainError("count_crossings: malformed path");
  std::size_t retained = 0;
  std::size_t count = 0;
  int prev = 0;
  for (std::size_t i = 0; i < path.u.size(); ++i) {
    if (path.u[i] < lo || path.u[i] > hi) continue;
    ++retained;
    int s = path.p[i] > c ? 1 : (path.p[i] < c ? -1 : prev);
    if (prev != 0 && s != 0 && s != prev) {
      if (kind == CrossingKind::kAll || s > 0) ++count;
    }
    if (s != 0) prev = s;
  }
  if (retained < 2) throw DomainError("count_crossings: fewer than two samples in window");
  return count;
}

inline std::size_t count_crossings(const DensitySamplePath& path, double c,
                                   CrossingKind kind = CrossingKind::kAll) {
  return count_crossings(path, c, 0.0, 1.0, kind);
}

/// Monte Carlo estimate of the expected number of crossings of level c on
/// [0, 1] at time t. g.n_space sets the number of sample points per path.
inline MCEstimate estimate_intensity_mc(const KernelSpec& k, double t, double c,
                                        const SimGrid& g, std::size_t n_reps,
                                        const RngStream& rng,
                                        CrossingKind kind = CrossingKind::kAll) {
  if (!(c > 0.0)) throw DomainError("estimate_intensity_mc: c must be positive");
  if (n_reps < 2) throw DomainError("estimate_intensity_mc: need at least 2 replicas");
  SimGrid gg = g;
  gg.t = t;
  gg.u_min = 0.0;
  gg.u_max = 1.0;
  std::vector<double> counts(n_reps);
  parallel_for(n_reps, [&](std::size_t r) {
    const auto path = simulate_p_path(k, gg, rng.with_replica(static_cast<std::uint32_t>(r)));
    counts[r] = static_cast<double>(count_crossings(path, c, kind));
  });
  return mc_aggregate(counts, rng.seed);
}

/// Tolerances du0 / 2^m, dlogp0 / 2^m for m = 0..n-1.
inline std::vector<RefineTolerance> halving_ladder(double du0, double dlogp0, std::size_t n) {
  if (!(du0 > 0.0) || !(dlogp0 > 0.0) || n == 0) throw DomainError("halving_ladder: bad arguments");
  std::vector<RefineTolerance> out;
  for (std::size_t m = 0; m < n; ++m) {
    const double f = std::ldexp(1.0, -static_cast<int>(m));
    out.push_back({du0 * f, dlogp0 * f});
  }
  return out;
}

struct CampaignOptions {
  std::size_t n_base = 17;
  std::vector<RefineTolerance> ladder = halving_ladder(1.0 / 32.0, 0.25, 4);
  double probe_u = 0.5;
  CrossingKind kind = CrossingKind::kAll;
};

/// Crossing counts for several levels along a nested refinement ladder,
/// plus the path value at a probe point, all from one simulation per replica.
struct CrossingCampaign {
  std::vector<double> levels;
  std::vector<double> mean_points;                 ///< average samples per path, per ladder step
  std::vector<std::vector<MCEstimate>> estimates;  ///< [level][ladder step]
  std::vector<double> probe_values;                ///< p at the probe point, per replica
};

/// Runs n_reps replicas on the window [0, 1] at time g.t.
inline CrossingCampaign run_crossing_campaign(const KernelSpec& k, const SimGrid& g,
                                              std::span<const double> levels,
                                              std::size_t n_reps, const RngStream& rng,
                                              const CampaignOptions& opt = {}) {
  if (n_reps < 2) throw DomainError("run_crossing_campaign: need at least 2 replicas");
  if (opt.ladder.empty()) throw DomainError("run_crossing_campaign: empty refinement ladder");
  for (double c : levels) {
    if (!(c > 0.0)) throw DomainError("run_crossing_campaign: levels must be positive");
  }
  SimGrid gg = g;
  gg.u_min = 0.0;
  gg.u_max = 1.0;
  const std::size_t n_res = opt.ladder.size();
  // counts[level][res][rep]
  std::vector<std::vector<std::vector<double>>> counts(
      levels.size(), std::vector<std::vector<double>>(n_res, std::vector<double>(n_reps)));
  std::vector<std::vector<double>> points(n_res, std::vector<double>(n_reps));
  std::vector<double> probe(n_reps);
  parallel_for(n_reps, [&](std::size_t r) {
    const RngStream s = rng.with_replica(static_cast<std::uint32_t>(r));
    const auto w = find_preimage_window(k, gg, s);
    const auto refined = simulate_p_path_refined(k, gg, s, w, opt.n_base, opt.ladder);
    probe[r] = refined.path.interpolate(opt.probe_u);
    for (std::size_t res = 0; res < n_res; ++res) {
      const auto sub = refined.at_level(res);
      points[res][r] = static_cast<double>(sub.size());
      for (std::size_t l = 0; l < levels.size(); ++l) {
        counts[l][res][r] = static_cast<double>(count_crossings(sub, levels[l], opt.kind));
      }
    }
  });
  CrossingCampaign out;
  out.levels.assign(levels.begin(), levels.end());
  for (std::size_t res = 0; res < n_res; ++res) {
    double total = 0.0;
    for (double v : points[res]) total += v;
    out.mean_points.push_back(total / static_cast<double>(n_reps));
  }
  out.estimates.resize(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    for (std::size_t res = 0; res < n_res; ++res) {
      out.estimates[l].push_back(mc_aggregate(counts[l][res], rng.seed));
    }
  }
  out.probe_values = std::move(probe);
  return out;
}

/// True when each of the last two doublings moves the estimate by at most
/// two standard errors of the finer estimate.
inline bool resolution_stable(std::span<const MCEstimate> ladder) {
  if (ladder.size() < 3) return false;
  for (std::size_t i = ladder.size() - 2; i < ladder.size(); ++i) {
    const double tol = 2.0 * ladder[i].std_error;
    if (std::abs(ladder[i].mean - ladder[i - 1].mean) > tol) return false;
  }
  return true;
}

}  // namespace flowcross
