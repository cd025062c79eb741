#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "flowcross/analytic.hpp"
#include "flowcross/table.hpp"

using namespace flowcross;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("flowcross_table_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
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

}  // namespace

TEST(FormatReal, PositionalNotation) {
  EXPECT_EQ(format_real(5.0), "5");
  EXPECT_EQ(format_real(-2.5), "-2.5");
  EXPECT_EQ(format_real(0.0), "0");
  EXPECT_EQ(format_real(1e-5), "0.000010000000000000001");
  EXPECT_EQ(format_real(1e20), "100000000000000000000");
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_real(NAN), "nan");
  EXPECT_EQ(format_real(-INFINITY), "-inf");
}

TEST(FormatReal, RoundTripsExactly) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> ex(-300, 300);
  for (int i = 0; i < 5000; ++i) {
    const double v = std::ldexp(mant(gen), ex(gen));
    const std::string s = format_real(v);
    EXPECT_EQ(s.find('e'), std::string::npos) << s;
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  for (double v : {5e-324, 1.7976931348623157e308, -2.2250738585072014e-308}) {
    EXPECT_EQ(std::strtod(format_real(v).c_str(), nullptr), v);
  }
}

TEST(EmitTable, EmptyRowsGiveHeaderOnly) {
  TempDir d;
  const fs::path p = d.path() / "t.csv";
  emit_table({}, {{"c"}, {"mu_bar"}}, p);
  EXPECT_EQ(slurp(p), "c,mu_bar\n");
}

TEST(EmitTable, OneRowRoundTrip) {
  TempDir d;
  const fs::path p = d.path() / "t.csv";
  const double mu = intensity(ModelParams{1.0, 1.0, 1.0}, 5.0);
  emit_table({{5.0, mu}}, {{"c"}, {"mu_bar"}}, p);
  const std::string text = slurp(p);
  ASSERT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  const auto line2 = text.substr(text.find('\n') + 1);
  const auto comma = line2.find(',');
  EXPECT_EQ(std::strtod(line2.substr(0, comma).c_str(), nullptr), 5.0);
  EXPECT_EQ(std::strtod(line2.substr(comma + 1).c_str(), nullptr), mu);
  EXPECT_EQ(text.back(), '\n');
}

TEST(EmitTable, MixedColumnsAndQuoting) {
  const std::string csv = render_csv(
      {{std::int64_t{3}, std::string("a,b \"q\""), 0.5}},
      {{"n", ColumnType::kInteger}, {"name", ColumnType::kText}, {"x", ColumnType::kReal}});
  EXPECT_EQ(csv, "n,name,x\n3,\"a,b \"\"q\"\"\",0.5\n");
}

TEST(EmitTable, SchemaMismatchWritesNothing) {
  TempDir d;
  const fs::path p = d.path() / "t.csv";
  EXPECT_THROW(emit_table({{1.0}}, {{"a"}, {"b"}}, p), DomainError);
  EXPECT_FALSE(fs::exists(p));
  // a wrong cell type also fails, and an existing file is left as it was
  emit_table({{1.0, 2.0}}, {{"a"}, {"b"}}, p);
  const std::string before = slurp(p);
  EXPECT_THROW(emit_table({{1.0, std::string("x")}}, {{"a"}, {"b"}}, p), DomainError);
  EXPECT_EQ(slurp(p), before);
  EXPECT_THROW(emit_table({}, {}, p), DomainError);
  // no temporary files left behind
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(d.path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(EmitTable, IoErrorNamesPath) {
  const fs::path p = "/nonexistent_dir_for_flowcross/x.csv";
  try {
    emit_table({}, {{"a"}}, p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent_dir_for_flowcross/x.csv"), std::string::npos);
  }
}
