#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mflq/cli.hpp"
#include "mflq/report_io.hpp"

namespace fs = std::filesystem;

namespace {

std::string data(const std::string& name) { return std::string(MFLQ_DATA_DIR) + "/" + name; }

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = mflq::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mflq_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Cli, ValidateBenchmark) {
  const Result r = run({"validate", data("scalar_benchmark.json")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("delta = min lambda_min(R) = 1\n"), std::string::npos) << r.out;
}

TEST(Cli, ValidateSingularControlWeight) {
  const Result r = run({"validate", data("r_zero.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL definiteness:"), std::string::npos);
}

TEST(Cli, UnknownSubcommandAndFlag) {
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"validate", data("scalar_benchmark.json"), "--bogus"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
}

TEST(Cli, HelpIsSuccess) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, TurnpikeWritesDocumentedCsv) {
  const fs::path dir = fresh_dir("turnpike");
  const Result r =
      run({"turnpike", data("scalar_benchmark.json"), "--T", "10,20", "--out", dir.string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  for (int k : {10, 20}) {
    std::ifstream in(dir / ("turnpike_T" + std::to_string(k) + ".csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, mflq::kTurnpikeHeader);
    EXPECT_EQ(header,
              "t,gap_P,gap_Pi,gap_Theta,gap_Theta_hat,gap_varphi,gap_phi,gap_state_sq,"
              "gap_control_sq,w2_state");
    EXPECT_TRUE(fs::exists(dir / ("summary_T" + std::to_string(k) + ".txt")));
    EXPECT_TRUE(fs::exists(dir / ("summary_T" + std::to_string(k) + ".json")));
  }
}

TEST(Cli, RerunsAreBitIdentical) {
  const fs::path dir = fresh_dir("idempotent");
  const std::vector<std::string> sim = {"simulate", data("scalar_offsets.json"), "--particles",
                                        "300", "--seed", "9", "--T", "2", "--out", dir.string()};
  ASSERT_NE(run(sim).code, 2);
  const std::string first = slurp(dir / "simulate.csv");
  ASSERT_NE(run(sim).code, 2);
  EXPECT_EQ(first, slurp(dir / "simulate.csv"));

  const std::vector<std::string> ric = {"riccati", data("scalar_offsets.json"), "--T", "3",
                                        "--out", dir.string()};
  ASSERT_EQ(run(ric).code, 0);
  const std::string csv = slurp(dir / "riccati_T3.csv");
  ASSERT_EQ(run(ric).code, 0);
  EXPECT_EQ(csv, slurp(dir / "riccati_T3.csv"));
}

TEST(Cli, NoFilesOnInputError) {
  const fs::path dir = fresh_dir("input_error");
  EXPECT_EQ(run({"turnpike", data("missing.json"), "--out", dir.string()}).code, 2);
  EXPECT_EQ(run({"turnpike", data("scalar_benchmark.json"), "--T", "0", "--out", dir.string()}).code,
            2);
  EXPECT_EQ(run({"turnpike", data("scalar_benchmark.json"), "--x", "1,2", "--out", dir.string()}).code,
            2);
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Cli, MalformedProblemIsInputError) {
  const fs::path dir = fresh_dir("malformed");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"n": 2, "m": 1, "tau": 1, "coefficients": {"B": {"kind": "constant", "value": [[1]]}}})";
  const Result r = run({"periodic", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("B"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, AssumptionViolationIsNumericFailure) {
  const fs::path dir = fresh_dir("assumption");
  EXPECT_EQ(run({"periodic", data("r_zero.json"), "--out", dir.string()}).code, 1);
}

TEST(Cli, PeriodicAndStability) {
  const fs::path dir = fresh_dir("periodic");
  for (const char* method : {"kleinman", "horizon-extension", "both"}) {
    const Result r =
        run({"periodic", data("scalar_offsets.json"), "--method", method, "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << method << r.err;
  }
  EXPECT_TRUE(fs::exists(dir / "periodic.csv"));
  const Result s = run({"stability", data("sinusoidal_n4m2.json")});
  EXPECT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("detectable"), std::string::npos);
}
