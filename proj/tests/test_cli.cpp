#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir =
      fs::temp_directory_path() / ("flowcross_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Result cli(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd =
      std::string("\"") + FLOWCROSS_CLI_PATH + "\" " + args + " 2>\"" + err.string() + "\"";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

class CliTest : public ::testing::Test {
 protected:
  static void TearDownTestSuite() { fs::remove_all(scratch()); }
};

}  // namespace

TEST_F(CliTest, KernelInfo) {
  const auto r = cli("kernel-info");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "radius,l1,l2,phi0");
  EXPECT_NE(r.out.find("\n1,3.07760913123177"), std::string::npos) << r.out;
}

TEST_F(CliTest, IntensityAndDensity) {
  const auto r = cli("intensity --t 1 --l1 1 --l2 1 --levels 1,5");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\n1,0.31830988618379"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\n5,0.104743360404721"), std::string::npos) << r.out;
  const auto d = cli("density --t 1 --l1 1 --l2 1 --grid 0.5:2:4");
  EXPECT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(std::count(d.out.begin(), d.out.end(), '\n'), 5);
  const auto a = cli("asymptotics --n 3");
  EXPECT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 4);
}

TEST_F(CliTest, WritesToFile) {
  const fs::path out = scratch() / "k.csv";
  const auto r = cli("kernel-info --radius 2 --out \"" + out.string() + "\"");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(slurp(out).substr(0, 18), "radius,l1,l2,phi0\n");
}

TEST_F(CliTest, ArgumentAndConfigErrorsExitTwo) {
  EXPECT_EQ(cli("kernel-info --radius 0").code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
  EXPECT_EQ(cli("intensity").code, 2);
  EXPECT_EQ(cli("intensity --levels 1 --t -1").code, 2);
  EXPECT_EQ(cli("density --grid 1:2").code, 2);
  const auto v = cli("validate --out \"" + (scratch() / "v").string() + "\"");
  EXPECT_EQ(v.code, 2);
  EXPECT_NE(v.err.find("seed"), std::string::npos) << v.err;
  const auto cfg = write_config("bad.json", R"({"seed": 1, "kernel": {"radius": 0}})");
  const auto r = cli("run --config \"" + cfg.string() + "\" --out \"" + (scratch() / "r").string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("kernel.radius"), std::string::npos) << r.err;
  const auto syntax = write_config("syntax.json", "{\n\"seed\": 1,\n}");
  const auto s = cli("run --config \"" + syntax.string() + "\" --out \"" + (scratch() / "r").string() + "\"");
  EXPECT_EQ(s.code, 2);
  EXPECT_NE(s.err.find(":3:"), std::string::npos) << s.err;
}

TEST_F(CliTest, MissingConfigIsIoError) {
  const auto r = cli("run --config /nonexistent/flowcross.json --out \"" +
                     (scratch() / "r").string() + "\"");
  EXPECT_EQ(r.code, 5) << r.err;
}

TEST_F(CliTest, SimulateFlowWritesTablesAndManifest) {
  const auto cfg = write_config("flow.json", R"({"seed": 1, "grid": {"n_time": 20, "n_space": 5}})");
  const fs::path out = scratch() / "flow";
  const auto r = cli("simulate-flow --config \"" + cfg.string() + "\" --seed 7 --reps 4 --out \"" +
                     out.string() + "\"");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "flow_moments.csv"));
  EXPECT_TRUE(fs::exists(out / "reduced_moments.csv"));
  const std::string m = slurp(out / "manifest.json");
  EXPECT_NE(m.find("\"seed\": 7"), std::string::npos) << m;
  EXPECT_NE(m.find("config_digest"), std::string::npos);
  EXPECT_NE(m.find("wall_time_s"), std::string::npos);
}

TEST_F(CliTest, CrossingsAreDeterministic) {
  const std::string args = "crossings --t 0.5 --radius 1 --levels 0.3,1 --reps 4 --n-time 40 --seed 42";
  const auto a = cli(args);
  const auto b = cli(args);
  EXPECT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.substr(0, a.out.find('\n')), "c,mc_mean,mc_stderr,mu_bar,z_score");
  const auto up = cli(args + " --upcrossings");
  EXPECT_EQ(up.code, 0) << up.err;
  EXPECT_NE(up.out, a.out);
}
