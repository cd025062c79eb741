#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "flowcross/experiment.hpp"

using namespace flowcross;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("flowcross_exp_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST(RunExperiment, MinimalKernelInfo) {
  TempDir d;
  const auto m = run_experiment(parse_config(R"({"seed": 42})"), d.path());
  EXPECT_TRUE(fs::exists(d.path() / "manifest.json"));
  const std::string csv = slurp(d.path() / "kernel_info.csv");
  EXPECT_EQ(count_lines(csv), 2u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "radius,l1,l2,phi0");
  ASSERT_EQ(m.outputs.size(), 1u);
  EXPECT_EQ(m.outputs[0], "kernel_info.csv");

  const Json j = Json::parse(slurp(d.path() / "manifest.json"));
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 42u);
  EXPECT_EQ(j.at("config_digest").get<std::string>(), m.config_digest);
  EXPECT_EQ(j.at("tool_version").get<std::string>(), kToolVersion);
  EXPECT_FALSE(j.at("started").get<std::string>().empty());
  EXPECT_FALSE(j.contains("validation_passed"));
}

TEST(RunExperiment, AnalyticOutputs) {
  TempDir d;
  const auto cfg = parse_config(R"({"seed": 1, "model": {"t": 1, "l1": 1, "l2": 1},
      "outputs": ["density", "intensity", "asymptotics"],
      "density": {"z_min": 0.5, "z_max": 2, "n": 4},
      "intensity": {"levels": [1, 5]}})");
  run_experiment(cfg, d.path());
  EXPECT_EQ(count_lines(slurp(d.path() / "density.csv")), 5u);
  const std::string inten = slurp(d.path() / "intensity.csv");
  EXPECT_NE(inten.find("\n1,0.31830988618379"), std::string::npos) << inten;
  EXPECT_EQ(count_lines(slurp(d.path() / "asymptotics.csv")), 12u);
}

TEST(RunExperiment, CrossingsAreByteIdenticalAcrossRuns) {
  TempDir a, b, c;
  const std::string text = R"({"seed": 42, "grid": {"n_time": 50},
      "outputs": ["crossings", "simulate_flow"],
      "simulate_flow": {"reps": 8},
      "crossings": {"levels": [0.3, 1.0], "reps": 6, "ladder_steps": 2}})";
  run_experiment(parse_config(text), a.path());
  run_experiment(parse_config(text), b.path());
  for (const char* f : {"crossings.csv", "crossings_ladder.csv", "flow_moments.csv",
                        "reduced_moments.csv"}) {
    EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
  }
  const std::string cr = slurp(a.path() / "crossings.csv");
  EXPECT_EQ(cr.substr(0, cr.find('\n')), "c,mc_mean,mc_stderr,mu_bar,z_score");
  EXPECT_EQ(count_lines(cr), 3u);
  EXPECT_EQ(count_lines(slurp(a.path() / "flow_moments.csv")), 102u);

  // a different seed changes the Monte Carlo output
  run_experiment(parse_config(text), c.path());
  const auto other = parse_config(text, "x", Json{{"seed", 43}});
  run_experiment(other, c.path());
  EXPECT_NE(slurp(a.path() / "flow_moments.csv"), slurp(c.path() / "flow_moments.csv"));
}

namespace {

// A non-empty directory where density.csv should go makes the final rename fail.
void block_density_output(const fs::path& dir) {
  fs::create_directories(dir / "density.csv");
  std::ofstream(dir / "density.csv" / "keep") << "x";
}

}  // namespace

TEST(RunExperiment, FailureRemovesPartialOutputs) {
  TempDir d;
  block_density_output(d.path());
  const auto cfg = parse_config(R"({"seed": 3, "outputs": ["kernel_info", "density"]})");
  EXPECT_THROW(run_experiment(cfg, d.path()), IoError);
  EXPECT_FALSE(fs::exists(d.path() / "kernel_info.csv"));
  EXPECT_FALSE(fs::exists(d.path() / "manifest.json"));
  for (const auto& e : fs::directory_iterator(d.path())) {
    EXPECT_EQ(e.path().filename(), "density.csv");  // no temporaries left
  }
}

TEST(RunExperiment, StaleManifestIsRemovedFirst) {
  TempDir d;
  run_experiment(parse_config(R"({"seed": 42})"), d.path());
  ASSERT_TRUE(fs::exists(d.path() / "manifest.json"));
  block_density_output(d.path());
  EXPECT_THROW(run_experiment(parse_config(R"({"seed": 3, "outputs": ["density"]})"), d.path()),
               IoError);
  EXPECT_FALSE(fs::exists(d.path() / "manifest.json"));
}

TEST(RunExperiment, UnwritableDirectoryIsIoError) {
  EXPECT_THROW(run_experiment(parse_config(R"({"seed": 1})"), "/proc/flowcross_nope"), IoError);
}

TEST(Tables, IntensityMarksUndefinedAsymptotics) {
  const auto t = intensity_table(ModelParams{1.0, 1.0, 1.0}, {0.5, 10.0});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_TRUE(std::isnan(std::get<double>(t.rows[0][2])));
  EXPECT_GT(std::get<double>(t.rows[1][3]), 1.0);
}

TEST(Tables, UpcrossingsHalveTheReference) {
  const KernelSpec k = make_bump_kernel(1.0);
  SimGrid g;
  g.t = 0.5;
  g.n_time = 40;
  CrossingsConfig cc;
  cc.levels = {0.3};
  cc.reps = 4;
  cc.ladder_steps = 1;
  const auto all = crossings_tables(k, g, cc, 5);
  cc.upcrossings = true;
  const auto up = crossings_tables(k, g, cc, 5);
  EXPECT_DOUBLE_EQ(std::get<double>(up.summary.rows[0][3]),
                   0.5 * std::get<double>(all.summary.rows[0][3]));
  EXPECT_LE(std::get<double>(up.summary.rows[0][1]), std::get<double>(all.summary.rows[0][1]));
}
