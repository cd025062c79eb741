#pragma once

// Experiment configuration: a JSON document with one section per module.
// Every field except `seed` has a default. Unknown fields are rejected so a
// typo cannot silently fall back to a default.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowcross/errors.hpp"
#include "flowcross/flowsim.hpp"
#include "flowcross/kernel.hpp"

namespace flowcross {

using Json = nlohmann::json;

/// Names accepted in `outputs`, in the order run_experiment produces them.
inline const std::vector<std::string>& known_outputs() {
  static const std::vector<std::string> names = {
      "kernel_info", "density", "intensity", "asymptotics", "simulate_flow", "crossings",
      "validate"};
  return names;
}

struct DensityConfig {
  double z_min = 0.01;
  double z_max = 5.0;
  std::size_t n = 200;
};

struct AsymptoticsConfig {
  double c_min = 10.0;
  double c_max = 1e6;
  std::size_t n = 11;  ///< log-spaced levels
};

struct FlowConfig {
  std::size_t reps = 200;
};

struct CrossingsConfig {
  std::vector<double> levels = {0.1, 0.3, 1.0};
  std::size_t reps = 200;
  bool upcrossings = false;
  std::size_t n_base = 17;
  std::size_t ladder_steps = 4;
  double max_du = 1.0 / 32.0;
  double max_dlogp = 0.25;
};

struct ValidateConfig {
  bool quick = false;
};

struct Config {
  std::uint64_t seed = 0;
  double radius = 1.0;
  double t = 0.5;
  std::optional<double> l1;  ///< unset: taken from the kernel
  std::optional<double> l2;
  SimGrid grid;
  std::vector<std::string> outputs = {"kernel_info"};
  DensityConfig density;
  std::vector<double> intensity_levels = {0.1, 0.3, 1.0, 3.0, 10.0};
  AsymptoticsConfig asymptotics;
  FlowConfig flow;
  CrossingsConfig crossings;
  ValidateConfig validate;

  /// Every field with its effective value; the digest is taken over this.
  Json resolved() const {
    Json j;
    j["seed"] = seed;
    j["kernel"] = {{"radius", radius}};
    j["model"] = {{"t", t},
                  {"l1", l1 ? Json(*l1) : Json(nullptr)},
                  {"l2", l2 ? Json(*l2) : Json(nullptr)}};
    j["grid"] = {{"u_min", grid.u_min},   {"u_max", grid.u_max},   {"n_space", grid.n_space},
                 {"n_time", grid.n_time}, {"q_step", grid.q_step}, {"q_pad", grid.q_pad}};
    j["outputs"] = outputs;
    j["density"] = {{"z_min", density.z_min}, {"z_max", density.z_max}, {"n", density.n}};
    j["intensity"] = {{"levels", intensity_levels}};
    j["asymptotics"] = {
        {"c_min", asymptotics.c_min}, {"c_max", asymptotics.c_max}, {"n", asymptotics.n}};
    j["simulate_flow"] = {{"reps", flow.reps}};
    j["crossings"] = {{"levels", crossings.levels},
                      {"reps", crossings.reps},
                      {"upcrossings", crossings.upcrossings},
                      {"n_base", crossings.n_base},
                      {"ladder_steps", crossings.ladder_steps},
                      {"max_du", crossings.max_du},
                      {"max_dlogp", crossings.max_dlogp}};
    j["validate"] = {{"quick", validate.quick}};
    return j;
  }

  bool wants(const std::string& output) const {
    for (const auto& o : outputs) {
      if (o == output) return true;
    }
    return false;
  }
};

/// FNV-1a, 64 bit, as 16 lowercase hex digits.
inline std::string fnv1a64_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_digest(const Config& c) { return fnv1a64_hex(c.resolved().dump()); }

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw ConfigError(source_ + ": " + field + ": " + msg);
  }

  void check_keys(const Json& obj, const std::string& prefix,
                  const std::set<std::string>& allowed) const {
    if (!obj.is_object()) fail(prefix.empty() ? "<root>" : prefix, "must be an object");
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.count(key)) fail(join(prefix, key), "unknown field");
    }
  }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }

  double real(const Json& obj, const std::string& prefix, const std::string& key,
              double fallback) const {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_number()) fail(join(prefix, key), "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(join(prefix, key), "must be finite");
    return d;
  }

  std::size_t count(const Json& obj, const std::string& prefix, const std::string& key,
                    std::size_t fallback) const {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      fail(join(prefix, key), "must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  bool flag(const Json& obj, const std::string& prefix, const std::string& key,
            bool fallback) const {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_boolean()) fail(join(prefix, key), "must be true or false");
    return v.get<bool>();
  }

  std::vector<double> reals(const Json& obj, const std::string& prefix, const std::string& key,
                            std::vector<double> fallback) const {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_array()) fail(join(prefix, key), "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(join(prefix, key), "must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  const Json& section(const Json& root, const std::string& key) const {
    static const Json empty = Json::object();
    if (!root.contains(key)) return empty;
    return root.at(key);
  }

 private:
  std::string source_;
};

/// 1-based line and column of a byte offset.
inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

/// Checks every invariant the modules would otherwise reject later, naming
/// the offending field.
inline void validate_config(const Config& c, const std::string& source = "config") {
  const detail::ConfigReader r(source);
  if (!(c.radius > 0.0)) r.fail("kernel.radius", "must be positive");
  if (!(c.t > 0.0)) r.fail("model.t", "must be positive");
  if (c.l1 && !(*c.l1 > 0.0)) r.fail("model.l1", "must be positive");
  if (c.l2 && !(*c.l2 > 0.0)) r.fail("model.l2", "must be positive");
  const SimGrid& g = c.grid;
  if (!(g.u_min < g.u_max)) r.fail("grid.u_max", "must exceed grid.u_min");
  if (g.n_space < 2) r.fail("grid.n_space", "must be at least 2");
  if (g.n_time < 1 && (c.wants("simulate_flow") || c.wants("crossings"))) {
    r.fail("grid.n_time", "must be at least 1 for simulate_flow and crossings");
  }
  if (g.q_step < 0.0 || g.q_step > c.radius / 8.0) {
    r.fail("grid.q_step", "must lie in (0, kernel.radius/8], or be 0 for the default");
  }
  if (g.q_pad != 0.0 && g.q_pad < c.radius) {
    r.fail("grid.q_pad", "must be at least kernel.radius, or 0 for the default");
  }
  for (const auto& o : c.outputs) {
    bool known = false;
    for (const auto& k : known_outputs()) known = known || k == o;
    if (!known) r.fail("outputs", "unknown output '" + o + "'");
  }
  if (!(c.density.z_min > 0.0)) r.fail("density.z_min", "must be positive");
  if (!(c.density.z_max > c.density.z_min)) r.fail("density.z_max", "must exceed density.z_min");
  if (c.density.n < 2) r.fail("density.n", "must be at least 2");
  if (c.intensity_levels.empty()) r.fail("intensity.levels", "must not be empty");
  for (double v : c.intensity_levels) {
    if (!(v > 0.0)) r.fail("intensity.levels", "levels must be positive");
  }
  if (!(c.asymptotics.c_min > 1.0)) r.fail("asymptotics.c_min", "must exceed 1");
  if (!(c.asymptotics.c_max > c.asymptotics.c_min)) {
    r.fail("asymptotics.c_max", "must exceed asymptotics.c_min");
  }
  if (c.asymptotics.n < 2) r.fail("asymptotics.n", "must be at least 2");
  if (c.flow.reps < 2) r.fail("simulate_flow.reps", "must be at least 2");
  if (c.crossings.levels.empty()) r.fail("crossings.levels", "must not be empty");
  for (double v : c.crossings.levels) {
    if (!(v > 0.0)) r.fail("crossings.levels", "levels must be positive");
  }
  if (c.crossings.reps < 2) r.fail("crossings.reps", "must be at least 2");
  if (c.crossings.n_base < 2 || c.crossings.n_base > 4096) {
    r.fail("crossings.n_base", "must lie in [2, 4096]");
  }
  if (c.crossings.ladder_steps < 1) r.fail("crossings.ladder_steps", "must be at least 1");
  if (!(c.crossings.max_du > 0.0)) r.fail("crossings.max_du", "must be positive");
  if (!(c.crossings.max_dlogp > 0.0)) r.fail("crossings.max_dlogp", "must be positive");
}

/// Builds a Config from parsed JSON. `overrides` (same layout) is merged on
/// top first, which is how command-line flags such as --seed are applied.
inline Config config_from_json(const Json& root_in, const std::string& source = "config",
                               const Json& overrides = Json::object()) {
  Json root = root_in;
  if (!root.is_object()) throw ConfigError(source + ": top level must be an object");
  root.merge_patch(overrides);
  const detail::ConfigReader r(source);
  r.check_keys(root, "",
               {"seed", "kernel", "model", "grid", "outputs", "density", "intensity",
                "asymptotics", "simulate_flow", "crossings", "validate"});
  Config c;
  if (!root.contains("seed") || root.at("seed").is_null()) r.fail("seed", "is required");
  const Json& seed = root.at("seed");
  if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) {
    r.fail("seed", "must be a non-negative integer");
  }
  c.seed = root.at("seed").get<std::uint64_t>();

  const Json& kernel = r.section(root, "kernel");
  r.check_keys(kernel, "kernel", {"radius"});
  c.radius = r.real(kernel, "kernel", "radius", c.radius);

  const Json& model = r.section(root, "model");
  r.check_keys(model, "model", {"t", "l1", "l2"});
  c.t = r.real(model, "model", "t", c.t);
  if (model.contains("l1") && !model.at("l1").is_null()) c.l1 = r.real(model, "model", "l1", 0.0);
  if (model.contains("l2") && !model.at("l2").is_null()) c.l2 = r.real(model, "model", "l2", 0.0);

  const Json& grid = r.section(root, "grid");
  r.check_keys(grid, "grid", {"u_min", "u_max", "n_space", "n_time", "q_step", "q_pad"});
  c.grid.u_min = r.real(grid, "grid", "u_min", c.grid.u_min);
  c.grid.u_max = r.real(grid, "grid", "u_max", c.grid.u_max);
  c.grid.n_space = r.count(grid, "grid", "n_space", c.grid.n_space);
  c.grid.n_time = r.count(grid, "grid", "n_time", c.grid.n_time);
  c.grid.q_step = r.real(grid, "grid", "q_step", c.grid.q_step);
  c.grid.q_pad = r.real(grid, "grid", "q_pad", c.grid.q_pad);
  c.grid.t = c.t;

  if (root.contains("outputs")) {
    const Json& o = root.at("outputs");
    if (!o.is_array()) r.fail("outputs", "must be an array of names");
    c.outputs.clear();
    for (const auto& e : o) {
      if (!e.is_string()) r.fail("outputs", "must be an array of names");
      c.outputs.push_back(e.get<std::string>());
    }
  }

  const Json& dens = r.section(root, "density");
  r.check_keys(dens, "density", {"z_min", "z_max", "n"});
  c.density.z_min = r.real(dens, "density", "z_min", c.density.z_min);
  c.density.z_max = r.real(dens, "density", "z_max", c.density.z_max);
  c.density.n = r.count(dens, "density", "n", c.density.n);

  const Json& inten = r.section(root, "intensity");
  r.check_keys(inten, "intensity", {"levels"});
  c.intensity_levels = r.reals(inten, "intensity", "levels", c.intensity_levels);

  const Json& asym = r.section(root, "asymptotics");
  r.check_keys(asym, "asymptotics", {"c_min", "c_max", "n"});
  c.asymptotics.c_min = r.real(asym, "asymptotics", "c_min", c.asymptotics.c_min);
  c.asymptotics.c_max = r.real(asym, "asymptotics", "c_max", c.asymptotics.c_max);
  c.asymptotics.n = r.count(asym, "asymptotics", "n", c.asymptotics.n);

  const Json& flow = r.section(root, "simulate_flow");
  r.check_keys(flow, "simulate_flow", {"reps"});
  c.flow.reps = r.count(flow, "simulate_flow", "reps", c.flow.reps);

  const Json& cr = r.section(root, "crossings");
  r.check_keys(cr, "crossings",
               {"levels", "reps", "upcrossings", "n_base", "ladder_steps", "max_du", "max_dlogp"});
  c.crossings.levels = r.reals(cr, "crossings", "levels", c.crossings.levels);
  c.crossings.reps = r.count(cr, "crossings", "reps", c.crossings.reps);
  c.crossings.upcrossings = r.flag(cr, "crossings", "upcrossings", c.crossings.upcrossings);
  c.crossings.n_base = r.count(cr, "crossings", "n_base", c.crossings.n_base);
  c.crossings.ladder_steps = r.count(cr, "crossings", "ladder_steps", c.crossings.ladder_steps);
  c.crossings.max_du = r.real(cr, "crossings", "max_du", c.crossings.max_du);
  c.crossings.max_dlogp = r.real(cr, "crossings", "max_dlogp", c.crossings.max_dlogp);

  const Json& val = r.section(root, "validate");
  r.check_keys(val, "validate", {"quick"});
  c.validate.quick = r.flag(val, "validate", "quick", c.validate.quick);

  validate_config(c, source);
  return c;
}

/// Parses JSON text; syntax errors report line and column.
inline Config parse_config(const std::string& text, const std::string& source = "config",
                           const Json& overrides = Json::object()) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": JSON syntax error: " + e.what());
  }
  return config_from_json(root, source, overrides);
}

inline Config load_config(const std::filesystem::path& path,
                          const Json& overrides = Json::object()) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string(), overrides);
}

}  // namespace flowcross
