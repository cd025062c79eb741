// flowcross command-line tool.
//
// Exit codes: 0 success, 1 validation criteria failed, 2 configuration or
// argument error, 3 numerical-stability error, 4 quadrature convergence
// error, 5 I/O error, 6 internal error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowcross/config.hpp"
#include "flowcross/errors.hpp"
#include "flowcross/experiment.hpp"
#include "flowcross/table.hpp"

namespace fc = flowcross;

namespace {

enum ExitCode : int {
  kOk = 0,
  kCriteriaFailed = 1,
  kConfig = 2,
  kStability = 3,
  kConvergence = 4,
  kIo = 5,
  kInternal = 6,
};

void write_table(const fc::TableOutput& t, const std::string& out) {
  if (out.empty()) {
    std::cout << fc::render_csv(t.rows, t.schema);
    std::cout.flush();
    if (!std::cout) throw fc::IoError("cannot write to standard output");
  } else {
    fc::emit_table(t.rows, t.schema, out);
  }
}

struct ModelFlags {
  double t = 1.0;
  double l1 = 1.0;
  double l2 = 1.0;

  void add_to(CLI::App* app) {
    app->add_option("--t", t, "time")->capture_default_str();
    app->add_option("--l1", l1, "L' (second moment of the kernel derivative)")
        ->capture_default_str();
    app->add_option("--l2", l2, "L'' (second moment of the second derivative)")
        ->capture_default_str();
  }

  fc::ModelParams params() const {
    fc::ModelParams p{t, l1, l2};
    try {
      p.validate();
    } catch (const fc::DomainError& e) {
      throw fc::ConfigError(e.what());
    }
    return p;
  }
};

struct DensityGrid {
  double z_min = 0.01;
  double z_max = 5.0;
  std::size_t n = 200;
};

DensityGrid parse_grid(const std::string& s) {
  DensityGrid g;
  std::istringstream in(s);
  std::string a, b, c;
  if (!std::getline(in, a, ':') || !std::getline(in, b, ':') || !std::getline(in, c) ||
      a.empty() || b.empty() || c.empty()) {
    throw fc::ConfigError("--grid: expected zmin:zmax:n, got '" + s + "'");
  }
  try {
    std::size_t pos = 0;
    g.z_min = std::stod(a, &pos);
    if (pos != a.size()) throw std::invalid_argument(a);
    g.z_max = std::stod(b, &pos);
    if (pos != b.size()) throw std::invalid_argument(b);
    const long long n = std::stoll(c, &pos);
    if (pos != c.size() || n < 2) throw std::invalid_argument(c);
    g.n = static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    throw fc::ConfigError("--grid: expected zmin:zmax:n with n >= 2, got '" + s + "'");
  }
  if (!(g.z_min > 0.0) || !(g.z_max > g.z_min)) {
    throw fc::ConfigError("--grid: need 0 < zmin < zmax");
  }
  return g;
}

void check_levels(const std::vector<double>& levels) {
  if (levels.empty()) throw fc::ConfigError("--levels: at least one level is required");
  for (double c : levels) {
    if (!(c > 0.0)) throw fc::ConfigError("--levels: levels must be positive");
  }
}

void print_manifest(const fc::RunManifest& m, const std::string& out_dir) {
  std::cerr << "run complete: " << m.outputs.size() << " file(s) in " << out_dir
            << ", config digest " << m.config_digest << std::endl;
}

int run(int argc, char** argv) {
  CLI::App app{"Kernel-smoothed Brownian flow: densities, level-crossing intensity and "
               "Monte Carlo validation"};
  app.set_version_flag("--version", std::string(fc::kToolVersion));
  app.require_subcommand(1);

  // kernel-info
  auto* ki = app.add_subcommand("kernel-info", "kernel constants as CSV (radius,l1,l2,phi0)");
  double ki_radius = 1.0;
  std::string ki_out;
  ki->add_option("--radius", ki_radius, "kernel radius")->capture_default_str();
  ki->add_option("--out", ki_out, "output CSV (default: stdout)");

  // density
  auto* de = app.add_subcommand("density", "density of p_t(u) on a z-grid (z,pdf)");
  ModelFlags de_model;
  de_model.add_to(de);
  std::string de_grid = "0.01:5:200";
  std::string de_out;
  de->add_option("--grid", de_grid, "zmin:zmax:n")->capture_default_str();
  de->add_option("--out", de_out, "output CSV (default: stdout)");

  // intensity
  auto* in = app.add_subcommand("intensity", "crossing intensity (c,mu_bar,mu_asymptotic,ratio)");
  ModelFlags in_model;
  in_model.add_to(in);
  std::vector<double> in_levels;
  std::string in_out;
  in->add_option("--levels", in_levels, "comma-separated levels")->delimiter(',')->required();
  in->add_option("--out", in_out, "output CSV (default: stdout)");

  // asymptotics
  auto* as = app.add_subcommand("asymptotics",
                                "intensity against its large-c form over a log-spaced c-grid");
  ModelFlags as_model;
  as_model.add_to(as);
  double as_cmin = 10.0, as_cmax = 1e6;
  std::size_t as_n = 11;
  std::string as_out;
  as->add_option("--c-min", as_cmin, "smallest level (> 1)")->capture_default_str();
  as->add_option("--c-max", as_cmax, "largest level")->capture_default_str();
  as->add_option("--n", as_n, "number of levels")->capture_default_str();
  as->add_option("--out", as_out, "output CSV (default: stdout)");

  // simulate-flow
  auto* sf = app.add_subcommand("simulate-flow",
                                "ensemble moments of the flow and the reduced system");
  std::string sf_config, sf_out;
  std::optional<std::uint64_t> sf_seed;
  std::optional<std::size_t> sf_reps;
  sf->add_option("--config", sf_config, "JSON configuration")->required();
  sf->add_option("--seed", sf_seed, "overrides the configured seed");
  sf->add_option("--reps", sf_reps, "overrides simulate_flow.reps");
  sf->add_option("--out", sf_out, "output directory")->required();

  // crossings
  auto* cr = app.add_subcommand("crossings",
                                "Monte Carlo crossing counts on [0,1] against the intensity");
  double cr_t = 0.5, cr_radius = 1.0;
  std::vector<double> cr_levels;
  std::size_t cr_reps = 200, cr_ntime = 400;
  std::optional<std::uint64_t> cr_seed;
  std::string cr_out;
  bool cr_up = false;
  cr->add_option("--t", cr_t, "time")->capture_default_str();
  cr->add_option("--radius", cr_radius, "kernel radius")->capture_default_str();
  cr->add_option("--levels", cr_levels, "comma-separated levels")->delimiter(',')->required();
  cr->add_option("--reps", cr_reps, "replicas")->capture_default_str();
  cr->add_option("--n-time", cr_ntime, "time steps")->capture_default_str();
  cr->add_option("--seed", cr_seed, "random seed")->required();
  cr->add_option("--out", cr_out, "output CSV (default: stdout)");
  cr->add_flag("--upcrossings", cr_up, "count up-crossings only (compared with half the intensity)");

  // validate
  auto* va = app.add_subcommand("validate", "run the validation suite");
  std::string va_config, va_out;
  std::optional<std::uint64_t> va_seed;
  bool va_quick = false;
  va->add_option("--config", va_config, "JSON configuration (seed, validate.quick)");
  va->add_option("--seed", va_seed, "random seed (overrides the configuration)");
  va->add_flag("--quick", va_quick, "reduced Monte Carlo budgets");
  va->add_option("--out", va_out, "output directory")->required();

  // run
  auto* ru = app.add_subcommand("run", "run every output listed in a configuration");
  std::string ru_config, ru_out;
  std::optional<std::uint64_t> ru_seed;
  ru->add_option("--config", ru_config, "JSON configuration")->required();
  ru->add_option("--seed", ru_seed, "overrides the configured seed");
  ru->add_option("--out", ru_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*ki) {
    if (!(ki_radius > 0.0)) throw fc::ConfigError("--radius must be positive");
    write_table(fc::kernel_info_table(ki_radius), ki_out);
  } else if (*de) {
    const auto g = parse_grid(de_grid);
    write_table(fc::density_table(de_model.params(), g.z_min, g.z_max, g.n), de_out);
  } else if (*in) {
    check_levels(in_levels);
    write_table(fc::intensity_table(in_model.params(), in_levels), in_out);
  } else if (*as) {
    if (!(as_cmin > 1.0) || !(as_cmax > as_cmin) || as_n < 2) {
      throw fc::ConfigError("asymptotics: need 1 < c-min < c-max and n >= 2");
    }
    write_table(fc::asymptotics_table(as_model.params(), as_cmin, as_cmax, as_n), as_out);
  } else if (*sf) {
    fc::Json ov = {{"outputs", {"simulate_flow"}}};
    if (sf_seed) ov["seed"] = *sf_seed;
    if (sf_reps) ov["simulate_flow"] = {{"reps", *sf_reps}};
    const auto m = fc::run_experiment(fc::load_config(sf_config, ov), sf_out, &std::cerr);
    print_manifest(m, sf_out);
  } else if (*cr) {
    check_levels(cr_levels);
    if (!(cr_radius > 0.0)) throw fc::ConfigError("--radius must be positive");
    if (!(cr_t > 0.0)) throw fc::ConfigError("--t must be positive");
    if (cr_reps < 2) throw fc::ConfigError("--reps must be at least 2");
    if (cr_ntime < 1) throw fc::ConfigError("--n-time must be at least 1");
    const fc::KernelSpec k = fc::make_bump_kernel(cr_radius);
    fc::SimGrid g;
    g.t = cr_t;
    g.n_time = cr_ntime;
    fc::CrossingsConfig cc;
    cc.levels = cr_levels;
    cc.reps = cr_reps;
    cc.upcrossings = cr_up;
    write_table(fc::crossings_tables(k, g, cc, *cr_seed).summary, cr_out);
  } else if (*va) {
    fc::Json ov = {{"outputs", {"validate"}}};
    if (va_seed) ov["seed"] = *va_seed;
    if (va_quick) ov["validate"] = {{"quick", true}};
    const fc::Config cfg = va_config.empty()
                               ? fc::config_from_json(fc::Json::object(), "command line", ov)
                               : fc::load_config(va_config, ov);
    const auto m = fc::run_experiment(cfg, va_out, &std::cerr);
    for (const auto& r : m.criteria) std::cout << fc::format_criterion(r) << "\n";
    std::cout.flush();
    print_manifest(m, va_out);
    return m.validation_passed.value_or(false) ? kOk : kCriteriaFailed;
  } else if (*ru) {
    fc::Json ov = fc::Json::object();
    if (ru_seed) ov["seed"] = *ru_seed;
    const auto m = fc::run_experiment(fc::load_config(ru_config, ov), ru_out, &std::cerr);
    print_manifest(m, ru_out);
    if (m.validation_passed && !*m.validation_passed) return kCriteriaFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const fc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return kConfig;
  } catch (const fc::DomainError& e) {
    std::cerr << "invalid parameter: " << e.what() << std::endl;
    return kConfig;
  } catch (const fc::StabilityError& e) {
    std::cerr << "numerical stability error: " << e.what() << std::endl;
    return kStability;
  } catch (const fc::ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << std::endl;
    return kConvergence;
  } catch (const fc::IoError& e) {
    std::cerr << "I/O error: " << e.what() << std::endl;
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << std::endl;
    return kInternal;
  }
}
