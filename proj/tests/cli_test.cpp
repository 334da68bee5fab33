#include <gtest/gtest.h>

#include "qrdyn/cli.hpp"

using namespace qrdyn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qrdyn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qrdyn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string out(const std::string& sub = "") const { return (sub.empty() ? dir_ : dir_ / sub).string(); }

  fs::path dir_;
};

}  // namespace

TEST(Io, FnvReferenceVectors) {
  EXPECT_EQ(io::hex64(io::fnv1a("", 0)), "cbf29ce484222325");
  EXPECT_EQ(io::hex64(io::fnv1a("a", 1)), "af63dc4c8601ec8c");
  EXPECT_EQ(io::hex64(io::fnv1a("foobar", 6)), "85944171f73967e8");
}

TEST_F(CliTest, CsvRoundTrip) {
  const std::vector<Point> pts{{0.1, -2.5, 0.0}, {1.0 / 3.0, 1e-300, 0.0}, {-7.25, 3.0, 0.0}};
  const fs::path path = dir_ / "pts.csv";
  io::write_points_csv(path, pts, 2);
  const auto cloud = io::read_points_csv(path);
  EXPECT_EQ(cloud.dim, 2);
  EXPECT_EQ(cloud.points, pts);
  std::ofstream(dir_ / "bad.csv") << "x,y\n1,oops\n";
  EXPECT_THROW(io::read_points_csv(dir_ / "bad.csv"), io::IoError);
}

TEST_F(CliTest, PgmRoundTrip) {
  std::vector<std::uint8_t> px(6 * 4);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 10);
  io::write_pgm(dir_ / "g.pgm", 6, 4, px);
  const auto g = io::read_pgm(dir_ / "g.pgm");
  EXPECT_EQ(g.width, 6);
  EXPECT_EQ(g.height, 4);
  EXPECT_EQ(g.pixels, px);
}

TEST(CliParse, WindowsParamsAndPoints) {
  const Box b = cli::parse_window("-4,4,-4,4");
  EXPECT_EQ(b.dim, 2);
  EXPECT_EQ(b.lo[0], -4.0);
  EXPECT_EQ(b.hi[1], 4.0);
  EXPECT_EQ(cli::parse_window("0,1,0,2,-1,1").dim, 3);
  EXPECT_THROW(cli::parse_window("1,0,0,1"), cli::UsageError);
  EXPECT_THROW(cli::parse_window("0,1,0"), cli::UsageError);
  EXPECT_EQ(cli::parse_params({"a=10", "M=2.5"}).at("M"), 2.5);
  EXPECT_THROW(cli::parse_params({"a="}), cli::UsageError);
  EXPECT_THROW(cli::parse_params({"=3"}), cli::UsageError);
  EXPECT_THROW(cli::parse_params({"a=1x"}), cli::UsageError);
  EXPECT_THROW(cli::parse_point("1,2", 3), cli::UsageError);
}

TEST_F(CliTest, ListMaps) {
  const auto r = run_cli({"list-maps"});
  EXPECT_EQ(r.code, 0);
  for (const char* name : {"zorich", "qr-sine", "fatou-mod", "annulus-fixed", "exp"})
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
  const auto j = io::json::parse(run_cli({"list-maps", "--json"}).out);
  EXPECT_GE(j.size(), 5u);
}

TEST_F(CliTest, ClassifyAnnulusBasinArea) {
  const auto r = run_cli({"classify", "--map", "annulus-fixed", "--param", "delta=0.05", "--window", "-4,4,-4,4",
                          "--res", "256", "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const double expected = std::numbers::pi * 4.0 / 64.0;
  const auto summary = io::json::parse(r.out);
  EXPECT_NEAR(summary["fractions"]["basin_0"].get<double>(), expected, 0.05 * expected);

  const auto g = io::read_pgm(dir_ / "classify.pgm");
  ASSERT_EQ(g.width, 256);
  ASSERT_EQ(g.height, 256);
  const auto basin = std::count(g.pixels.begin(), g.pixels.end(), std::uint8_t{40});
  EXPECT_NEAR(static_cast<double>(basin) / g.pixels.size(), expected, 0.05 * expected);
  EXPECT_EQ(g.pixels[128 * 256 + 128], 40);  // center of the image is near the origin

  std::ifstream mf(dir_ / "classify.manifest.json");
  const auto manifest = io::json::parse(mf);
  EXPECT_EQ(manifest["map"], "annulus-fixed");
  EXPECT_EQ(manifest["params"]["delta"], 0.05);
  ASSERT_EQ(manifest["outputs"].size(), 2u);
  for (const auto& f : manifest["outputs"])
    EXPECT_EQ(f["fnv1a64"], io::file_digest(dir_ / f["path"].get<std::string>()));
}

TEST_F(CliTest, ManifestOutputsIndependentOfWorkers) {
  const std::vector<std::string> base{"classify", "--map", "exp", "--window", "-3,5,-4,4", "--res", "96"};
  auto a = base, b = base;
  a.insert(a.end(), {"--threads", "1", "--out", out("a")});
  b.insert(b.end(), {"--threads", "5", "--out", out("b")});
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);
  std::ifstream fa(dir_ / "a" / "classify.manifest.json"), fb(dir_ / "b" / "classify.manifest.json");
  EXPECT_EQ(io::json::parse(fa)["outputs"], io::json::parse(fb)["outputs"]);
}

TEST_F(CliTest, SpatialClassifyWritesSlices) {
  const auto r = run_cli({"classify", "--map", "zorich", "--window", "-2,2,-2,2,-2,2", "--res", "6", "--kmax", "60",
                          "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int k = 0; k < 6; ++k) EXPECT_TRUE(fs::exists(dir_ / ("classify_z00" + std::to_string(k) + ".pgm")));
  std::ifstream mf(dir_ / "classify.manifest.json");
  EXPECT_EQ(io::json::parse(mf)["outputs"].size(), 7u);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({"classify", "--map", "exp", "--param", "a=", "--window", "-4,4,-4,4", "--out", out()}).code, 2);
  const auto unknown = run_cli({"classify", "--map", "nope", "--window", "-4,4,-4,4", "--out", out()});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("annulus-fixed"), std::string::npos);
  EXPECT_EQ(run_cli({"classify", "--map", "exp", "--param", "zz=1", "--window", "-4,4,-4,4", "--out", out()}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"classify", "--map", "zorich", "--window", "-4,4,-4,4", "--out", out()}).code, 2);
  EXPECT_EQ(run_cli({"capacity", "ring", "--inner", "2", "--outer", "1", "--out", out()}).code, 2);
}

TEST_F(CliTest, NumericFailureExitsThree) {
  const auto r = run_cli({"capacity", "--max-iters", "2", "ring", "--res", "64", "--out", out()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("best value"), std::string::npos);
}

TEST_F(CliTest, CapacityRing) {
  const auto r = run_cli({"capacity", "ring", "--inner", "1", "--outer", "2.718281828459045", "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = io::json::parse(r.out);
  EXPECT_NEAR(j["solve"]["value"].get<double>(), 2.0 * std::numbers::pi, 0.05 * 2.0 * std::numbers::pi);
}

TEST_F(CliTest, BackwardThenBoxdim) {
  auto r = run_cli({"julia", "--method", "backward", "--map", "exp", "--start", "2.5426413577735265,0", "--steps",
                    "3000", "--seed", "4", "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cloud = io::read_points_csv(dir_ / "julia_backward.csv");
  EXPECT_EQ(cloud.points.size(), 3000u);
  r = run_cli({"boxdim", "--csv", (dir_ / "julia_backward.csv").string(), "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = io::json::parse(r.out);
  EXPECT_GT(j["dimension"].get<double>(), 0.5);
  EXPECT_LT(j["dimension"].get<double>(), 2.0);
}

TEST_F(CliTest, SpreadingVerdicts) {
  const auto r = run_cli({"julia", "--method", "spreading", "--map", "exp", "--point", "2.5426413577735265,0",
                          "--point", "0.2591711018190738,0", "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = io::json::parse(r.out);
  EXPECT_TRUE(j["verdicts"][0]["julia_positive"].get<bool>());
  EXPECT_FALSE(j["verdicts"][1]["julia_positive"].get<bool>());
}

TEST_F(CliTest, PitsScanAndRobustness) {
  auto r = run_cli({"pits-scan", "--map", "exp", "--N", "10", "--c", "2", "--eps", "0.05", "--radii", "10,20,40,80",
                    "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::json::parse(r.out)["verdict"], "no_pits");
  r = run_cli({"pits-scan", "--map", "exp", "--alpha", "1.5", "--robustness", "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::json::parse(r.out)["agree"], true);
  EXPECT_EQ(run_cli({"pits-scan", "--map", "exp", "--robustness", "--out", out()}).code, 2);
}

TEST_F(CliTest, DilatationAndHarnack) {
  auto r = run_cli({"dilatation", "--map", "annulus-fixed", "--window", "-2.5,2.5,-2.5,2.5", "--samples", "2000",
                    "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GE(io::json::parse(r.out)["K_est"].get<double>(), 1.0);
  r = run_cli({"harnack", "--map", "exp", "--center", "5,0", "--radius", "1", "--out", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GE(io::json::parse(r.out)["theta_est"].get<double>(), 1.0);
}
