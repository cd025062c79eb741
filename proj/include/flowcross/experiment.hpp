#pragma once

// Table builders behind the command-line tool, and run_experiment, which
// produces every output a configuration asks for plus a JSON manifest.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "flowcross/analytic.hpp"
#include "flowcross/config.hpp"
#include "flowcross/crossings.hpp"
#include "flowcross/flowsim.hpp"
#include "flowcross/kernel.hpp"
#include "flowcross/parallel.hpp"
#include "flowcross/stats.hpp"
#include "flowcross/table.hpp"
#include "flowcross/validation.hpp"

#ifndef FLOWCROSS_VERSION
#define FLOWCROSS_VERSION "0.0.0"
#endif

namespace flowcross {

inline constexpr const char* kToolVersion = FLOWCROSS_VERSION;

struct TableOutput {
  std::string file;
  Schema schema;
  std::vector<Row> rows;
};

// ---------------------------------------------------------------------------
// Analytic tables

inline TableOutput kernel_info_table(double radius) {
  const KernelSpec k = make_bump_kernel(radius);
  const auto& c = k.constants();
  return {"kernel_info.csv",
          {{"radius"}, {"l1"}, {"l2"}, {"phi0"}},
          {{radius, c.l1, c.l2, covariance_phi(k, 0.0)}}};
}

/// Linearly spaced z in [z_min, z_max].
inline TableOutput density_table(const ModelParams& p, double z_min, double z_max, std::size_t n) {
  if (!(z_min > 0.0) || !(z_max > z_min) || n < 2) {
    throw DomainError("density grid: need 0 < z_min < z_max and n >= 2");
  }
  TableOutput out{"density.csv", {{"z"}, {"pdf"}}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double z = i + 1 == n ? z_max
                                : z_min + (z_max - z_min) * static_cast<double>(i) /
                                              static_cast<double>(n - 1);
    out.rows.push_back({z, density_p(p, z)});
  }
  return out;
}

/// mu_asymptotic and ratio are nan for c <= 1, where the large-c form is undefined.
inline TableOutput intensity_table(const ModelParams& p, const std::vector<double>& levels,
                                   const std::string& file = "intensity.csv") {
  TableOutput out{file, {{"c"}, {"mu_bar"}, {"mu_asymptotic"}, {"ratio"}}, {}};
  for (double c : levels) {
    const double mu = intensity(p, c);
    const double asym = c > 1.0 ? intensity_asymptotic(p, c) : NAN;
    out.rows.push_back({c, mu, asym, c > 1.0 ? mu / asym : NAN});
  }
  return out;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  v.front() = lo;
  v.back() = hi;
  return v;
}

inline TableOutput asymptotics_table(const ModelParams& p, double c_min, double c_max,
                                     std::size_t n) {
  return intensity_table(p, log_spaced(c_min, c_max, n), "asymptotics.csv");
}

// ---------------------------------------------------------------------------
// Monte Carlo tables

namespace detail {

// Each Monte Carlo output draws from its own stream family.
inline RngStream output_stream(std::uint64_t seed, int which) {
  return criterion_stream(seed ^ 0xf10c0000ULL, which);
}

}  // namespace detail

/// Per-u ensemble moments of the simulated flow at time g.t.
inline TableOutput flow_moments_table(const KernelSpec& k, const SimGrid& g, std::size_t reps,
                                      std::uint64_t seed) {
  if (reps < 2) throw DomainError("simulate_flow: need at least 2 replicas");
  const RngStream rng = detail::output_stream(seed, 1);
  std::vector<FlowPath> paths(reps);
  parallel_for(reps, [&](std::size_t r) {
    paths[r] = simulate_flow(k, g, rng.with_replica(static_cast<std::uint32_t>(r)));
  });
  const double a = k.constants().l1 * g.t;
  TableOutput out{"flow_moments.csv",
                  {{"u"},
                   {"mean_dx"},
                   {"stderr_dx"},
                   {"mean_log_jac"},
                   {"stderr_log_jac"},
                   {"var_log_jac"},
                   {"expected_mean_log_jac"},
                   {"expected_var_log_jac"},
                   {"mean_jac"},
                   {"stderr_jac"},
                   {"var_wu"}},
                  {}};
  const std::size_t n = paths.front().u.size();
  std::vector<double> dx(reps), lj(reps), jac(reps), wu_sq(reps);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < reps; ++r) {
      dx[r] = paths[r].x[i] - paths[r].u[i];
      lj[r] = std::log(paths[r].jac[i]);
      jac[r] = paths[r].jac[i];
      wu_sq[r] = paths[r].wu[i] * paths[r].wu[i];
    }
    const auto mdx = mc_aggregate(dx, seed);
    const auto mlj = mc_aggregate(lj, seed);
    const auto mj = mc_aggregate(jac, seed);
    const auto mw = mc_aggregate(wu_sq, seed);
    const double var_lj = mlj.std_error * mlj.std_error * static_cast<double>(reps);
    out.rows.push_back({paths.front().u[i], mdx.mean, mdx.std_error, mlj.mean, mlj.std_error,
                        var_lj, -0.5 * a, a, mj.mean, mj.std_error, mw.mean});
  }
  return out;
}

/// Moments of the reduced system against their exact values.
inline TableOutput reduced_moments_table(const ModelParams& p, std::size_t n_steps,
                                         std::size_t reps, std::uint64_t seed) {
  if (reps < 2) throw DomainError("simulate_flow: need at least 2 replicas");
  const RngStream rng = detail::output_stream(seed, 2);
  std::vector<ReducedSample> s(reps);
  parallel_for(reps, [&](std::size_t r) {
    s[r] = simulate_reduced(p, n_steps, rng.with_replica(static_cast<std::uint32_t>(r)));
  });
  std::vector<double> x1(reps), x2(reps), x2sq(reps), lx1(reps), sig(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    x1[r] = s[r].x1;
    x2[r] = s[r].x2;
    x2sq[r] = s[r].x2 * s[r].x2;
    lx1[r] = std::log(s[r].x1);
    sig[r] = s[r].sigma2;
  }
  const double growth = std::expm1(p.a()) / p.l1;  // int_0^t e^{L's} ds
  TableOutput out{"reduced_moments.csv",
                  {{"statistic", ColumnType::kText},
                   {"mc_mean"},
                   {"mc_stderr"},
                   {"exact"},
                   {"z_score"}},
                  {}};
  auto add = [&](const char* name, const std::vector<double>& v, double exact) {
    const auto e = mc_aggregate(v, seed);
    out.rows.push_back({std::string(name), e.mean, e.std_error, exact,
                        e.std_error > 0.0 ? (e.mean - exact) / e.std_error : 0.0});
  };
  add("E[x1]", x1, 1.0);
  add("E[log x1]", lx1, -0.5 * p.a());
  add("E[x2]", x2, 0.0);
  add("E[x2^2]", x2sq, p.l2 * growth);
  add("E[sigma2]", sig, growth);
  return out;
}

struct CrossingTables {
  TableOutput summary;  ///< c, mc_mean, mc_stderr, mu_bar, z_score (finest ladder step)
  TableOutput ladder;   ///< every ladder step
};

/// Crossing counts on [0, 1] against the analytic intensity with the kernel's
/// L', L''. With up-crossings the analytic value is halved.
inline CrossingTables crossings_tables(const KernelSpec& k, const SimGrid& g,
                                       const CrossingsConfig& cc, std::uint64_t seed) {
  CampaignOptions opt;
  opt.n_base = cc.n_base;
  opt.ladder = halving_ladder(cc.max_du, cc.max_dlogp, cc.ladder_steps);
  opt.kind = cc.upcrossings ? CrossingKind::kUp : CrossingKind::kAll;
  const auto camp =
      run_crossing_campaign(k, g, cc.levels, cc.reps, detail::output_stream(seed, 3), opt);
  const ModelParams p = ModelParams::from_kernel(k, g.t);
  CrossingTables out;
  out.summary = {"crossings.csv",
                 {{"c"}, {"mc_mean"}, {"mc_stderr"}, {"mu_bar"}, {"z_score"}},
                 {}};
  out.ladder = {"crossings_ladder.csv", crossing_ladder_schema(), {}};
  for (std::size_t l = 0; l < camp.levels.size(); ++l) {
    const double c = camp.levels[l];
    const double mu = intensity(p, c) * (cc.upcrossings ? 0.5 : 1.0);
    const auto& est = camp.estimates[l];
    const auto& fin = est.back();
    out.summary.rows.push_back({c, fin.mean, fin.std_error, mu,
                                fin.std_error > 0.0 ? (fin.mean - mu) / fin.std_error : NAN});
    for (std::size_t m = 0; m < est.size(); ++m) {
      out.ladder.rows.push_back({c, static_cast<std::int64_t>(m), opt.ladder[m].max_du,
                                 opt.ladder[m].max_dlogp, camp.mean_points[m], est[m].mean,
                                 est[m].std_error, mu});
    }
  }
  return out;
}

struct ValidationTables {
  std::vector<TableOutput> tables;
  std::vector<CriterionResult> results;
  bool passed = false;
};

inline ValidationTables validation_tables(std::uint64_t seed, bool quick,
                                          std::ostream* log = nullptr) {
  ValidationOptions opt;
  opt.seed = seed;
  if (quick) opt.sizes = ValidationSizes::quick();
  if (log) {
    opt.on_result = [log](const CriterionResult& r) {
      *log << "  criterion " << r.id << " " << r.name << ": " << (r.passed ? "pass" : "FAIL")
           << std::endl;
    };
  }
  auto rep = run_validation(opt);
  rep.results.push_back(check_in_process_determinism(seed));
  if (opt.on_result) opt.on_result(rep.results.back());
  ValidationTables out;
  out.results = rep.results;
  out.passed = rep.all_passed();
  out.tables.push_back({"validation.csv", criteria_schema(), criteria_rows(rep.results)});
  out.tables.push_back({"validation_crossings.csv", crossing_ladder_schema(), rep.crossing_rows});
  out.tables.push_back({"validation_em.csv", em_schema(), rep.em_rows});
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct RunManifest {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string tool_version = kToolVersion;
  std::string started;
  std::string finished;
  double wall_time_s = 0.0;
  std::vector<std::string> outputs;
  std::optional<bool> validation_passed;  ///< set when the run included validation
  std::vector<CriterionResult> criteria;  ///< validation results; not serialized

  Json to_json() const {
    Json j = {{"seed", seed},
              {"config_digest", config_digest},
              {"tool_version", tool_version},
              {"started", started},
              {"finished", finished},
              {"wall_time_s", wall_time_s},
              {"outputs", outputs}};
    if (validation_passed) j["validation_passed"] = *validation_passed;
    return j;
  }
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline ModelParams model_params(const Config& c) {
  const KernelSpec k = make_bump_kernel(c.radius);
  ModelParams p = ModelParams::from_kernel(k, c.t);
  if (c.l1) p.l1 = *c.l1;
  if (c.l2) p.l2 = *c.l2;
  p.validate();
  return p;
}

/// Writes every output requested by `cfg` into out_dir, then manifest.json.
/// On failure the files written so far are removed and the error rethrown,
/// so a manifest is present only for complete runs.
inline RunManifest run_experiment(const Config& cfg, const std::filesystem::path& out_dir,
                                  std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::system_clock::now();
  const auto s0 = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  }
  const fs::path manifest_path = out_dir / "manifest.json";
  fs::remove(manifest_path, ec);

  RunManifest m;
  m.seed = cfg.seed;
  m.config_digest = config_digest(cfg);
  m.started = utc_timestamp(t0);

  std::vector<fs::path> written;
  auto emit = [&](const TableOutput& t) {
    const fs::path path = out_dir / t.file;
    emit_table(t.rows, t.schema, path);
    written.push_back(path);
    m.outputs.push_back(t.file);
    if (log) *log << "wrote " << path.string() << std::endl;
  };

  try {
    const KernelSpec k = make_bump_kernel(cfg.radius);
    const ModelParams p = model_params(cfg);
    SimGrid g = cfg.grid;
    g.t = cfg.t;
    for (const auto& name : known_outputs()) {
      if (!cfg.wants(name)) continue;
      if (log) *log << "running " << name << std::endl;
      if (name == "kernel_info") {
        emit(kernel_info_table(cfg.radius));
      } else if (name == "density") {
        emit(density_table(p, cfg.density.z_min, cfg.density.z_max, cfg.density.n));
      } else if (name == "intensity") {
        emit(intensity_table(p, cfg.intensity_levels));
      } else if (name == "asymptotics") {
        emit(asymptotics_table(p, cfg.asymptotics.c_min, cfg.asymptotics.c_max,
                               cfg.asymptotics.n));
      } else if (name == "simulate_flow") {
        emit(flow_moments_table(k, g, cfg.flow.reps, cfg.seed));
        emit(reduced_moments_table(p, g.n_time, cfg.flow.reps, cfg.seed));
      } else if (name == "crossings") {
        const auto t = crossings_tables(k, g, cfg.crossings, cfg.seed);
        emit(t.summary);
        emit(t.ladder);
      } else if (name == "validate") {
        const auto v = validation_tables(cfg.seed, cfg.validate.quick, log);
        for (const auto& t : v.tables) emit(t);
        m.validation_passed = v.passed;
        m.criteria = v.results;
      }
    }
    m.finished = utc_timestamp(std::chrono::system_clock::now());
    m.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    write_file_atomic(manifest_path, m.to_json().dump(2) + "\n");
  } catch (...) {
    for (const auto& path : written) fs::remove(path, ec);
    throw;
  }
  return m;
}

inline RunManifest run_experiment(const std::filesystem::path& config_path,
                                  const std::filesystem::path& out_dir,
                                  std::ostream* log = nullptr) {
  return run_experiment(load_config(config_path), out_dir, log);
}

}  // namespace flowcross
