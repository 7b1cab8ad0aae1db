#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "almostcomm/errors.hpp"
#include "almostcomm/pipeline.hpp"
#include "cli.hpp"

using namespace almostcomm;
using namespace almostcomm::cli;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "almostcomm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Outcome o;
  o.code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string fixture(const std::string& name) { return fixture_dir() + "/" + name; }

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "almostcomm_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

}  // namespace

TEST(CliCorrect, FixtureExitCodes) {
  const Outcome commuting = invoke({"correct", "--input", fixture("correct_commuting.json")});
  EXPECT_EQ(commuting.code, kExitOk) << commuting.err;
  const nlohmann::json j = nlohmann::json::parse(commuting.out);
  EXPECT_LE(j.at("result").at("dist_a").get<double>(), 1e-8);
  EXPECT_LE(j.at("result").at("dist_b").get<double>(), 1e-8);
  EXPECT_TRUE(j.at("kernel").contains("k1"));

  const Outcome small = invoke({"correct", "--input", fixture("correct_nu_1e-3.json")});
  EXPECT_EQ(small.code, kExitOk) << small.err;

  const Outcome large = invoke({"correct", "--input", fixture("correct_nu_0.5.json")});
  EXPECT_EQ(large.code, kExitFlagged);
  const auto flags = nlohmann::json::parse(large.out).at("result").at("flags");
  EXPECT_NE(std::find(flags.begin(), flags.end(), "out-of-regime"), flags.end());
}

TEST(CliCorrect, Errors) {
  const Outcome missing = invoke({"correct"});
  EXPECT_EQ(missing.code, kExitError);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);
  EXPECT_EQ(invoke({"correct", "--input", fixture("no_such_file.json")}).code, kExitError);
  EXPECT_EQ(invoke({"correct", "--input", fixture("measure_gaussian16.json")}).code, kExitError);
  EXPECT_EQ(invoke({"correct", "--input", fixture("correct_commuting.json"), "--eps", "-1"}).code, kExitError);
}

TEST(CliCorrect, OutputFile) {
  const auto path = scratch("correct.json");
  std::filesystem::remove(path);
  const Outcome o = invoke({"correct", "--input", fixture("correct_commuting.json"), "--output", path.string()});
  EXPECT_EQ(o.code, kExitOk);
  EXPECT_TRUE(o.out.empty());
  EXPECT_TRUE(nlohmann::json::accept(slurp(path)));
}

TEST(CliSweep, MinimalRunFromConfig) {
  const auto cfg = scratch("sweep.json");
  write(cfg, R"({"command": "sweep", "trials": 1, "dims": [4], "nu_targets": [0.0]})");
  const Outcome o = invoke({"sweep", "--config", cfg.string()});
  EXPECT_EQ(o.code, kExitOk) << o.err;
  EXPECT_NE(o.out.find("n,nu_target,nu_measured,dist_a,dist_b,seed,runtime_ms,flag\n"), std::string::npos);
  EXPECT_NE(o.out.find("# "), std::string::npos);
  EXPECT_NE(o.out.find(",ok\n"), std::string::npos);
}

TEST(CliSweep, FlagsOverrideConfig) {
  const auto cfg = scratch("sweep_override.json");
  write(cfg, R"({"trials": 3, "dims": [4], "nu_targets": [0.0]})");
  const Outcome o = invoke({"sweep", "--config", cfg.string(), "--trials", "2"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(std::count(o.out.begin(), o.out.end(), '\n') - std::count(o.out.begin(), o.out.end(), '#'), 3);
}

TEST(CliConfig, RejectsUnknownKeysAndMismatches) {
  const auto cfg = scratch("bad.json");
  write(cfg, R"({"trials": 1, "dimz": [4]})");
  const Outcome unknown = invoke({"sweep", "--config", cfg.string()});
  EXPECT_EQ(unknown.code, kExitError);
  EXPECT_NE(unknown.err.find("dimz"), std::string::npos);

  write(cfg, R"({"command": "kms"})");
  EXPECT_EQ(invoke({"sweep", "--config", cfg.string()}).code, kExitError);

  write(cfg, R"({"trials": "many"})");
  EXPECT_EQ(invoke({"sweep", "--config", cfg.string()}).code, kExitError);

  EXPECT_THROW(config_from_json(Command::sweep, nlohmann::json::array()), InvalidArgument);
}

TEST(CliConfig, RejectsInapplicableOptions) {
  const Outcome o = invoke({"correct", "--input", fixture("correct_commuting.json"), "--trials", "3"});
  EXPECT_EQ(o.code, kExitError);
  EXPECT_NE(o.err.find("trials"), std::string::npos);
  EXPECT_EQ(invoke({"kms", "--eps", "0.1"}).code, kExitError);
  EXPECT_EQ(invoke({"car-path", "--input", fixture("measure_gaussian16.json"), "--seed", "3"}).code, kExitError);
}

TEST(CliConfig, ResolveFillsDefaults) {
  RunConfig cfg;
  cfg.command = Command::sweep;
  const RunConfig r = resolve(cfg);
  EXPECT_EQ(*r.eps, 0.05);
  EXPECT_EQ(*r.workers, 1);
  EXPECT_TRUE(r.dims.has_value());
  EXPECT_TRUE(r.nu_targets.has_value());
  const nlohmann::json rec = config_record(r);
  EXPECT_FALSE(rec.contains("workers"));
  EXPECT_FALSE(rec.contains("output"));
  EXPECT_EQ(command_from_name(command_name(Command::car_path)), Command::car_path);
  EXPECT_THROW(command_from_name("frobnicate"), InvalidArgument);
}

TEST(CliKms, Runs) {
  for (const char* c : {"1", "-1"}) {
    const Outcome o = invoke({"kms", "--c", c, "--trials", "5", "--dims", "2,3"});
    EXPECT_EQ(o.code, kExitOk) << o.err;
    EXPECT_NE(o.out.find("seed,n,c,norm_b_diff,lhs,rhs,margin\n"), std::string::npos);
  }
  const Outcome deg = invoke({"kms", "--degenerate", "--trials", "3", "--dims", "3"});
  EXPECT_EQ(deg.code, kExitOk) << deg.err;
  EXPECT_EQ(invoke({"kms", "--c", "0"}).code, kExitError);
}

TEST(CliCarPath, Fixtures) {
  const Outcome g = invoke({"car-path", "--input", fixture("measure_gaussian16.json")});
  EXPECT_EQ(g.code, kExitOk) << g.err;
  EXPECT_NE(g.out.find("stage,t,mean,variance,support_size,w0,"), std::string::npos);
  const Outcome three = invoke({"car-path", "--input", fixture("measure_three_atom.json"), "--stages", "3"});
  EXPECT_EQ(three.code, kExitOk) << three.err;
  const Outcome single = invoke({"car-path", "--input", fixture("measure_single_atom.json")});
  EXPECT_EQ(single.code, kExitError);
  EXPECT_NE(single.err.find("error:"), std::string::npos);
}

TEST(CliDeterminism, WorkerCountDoesNotChangeOutput) {
  const std::vector<std::vector<std::string>> runs{
      {"correct", "--input", fixture("correct_nu_1e-3.json")},
      {"sweep", "--dims", "6", "--nu-targets", "1e-2,1e-4", "--trials", "3", "--seed", "7"},
      {"kms", "--trials", "6", "--dims", "2,4", "--seed", "5"},
      {"car-path", "--input", fixture("measure_gaussian16.json")},
      {"calibrate", "--dims", "4", "--nu-targets", "1e-3,1e-1", "--trials", "2"},
  };
  for (const auto& base : runs) {
    auto one = base;
    one.insert(one.end(), {"--workers", "1"});
    auto three = base;
    three.insert(three.end(), {"--workers", "3"});
    const Outcome a = invoke(one);
    const Outcome b = invoke(three);
    const Outcome again = invoke(one);
    EXPECT_NE(a.code, kExitError) << base[0] << ": " << a.err;
    EXPECT_EQ(a.code, b.code) << base[0];
    EXPECT_EQ(a.out, b.out) << base[0];
    EXPECT_EQ(a.out, again.out) << base[0];
    EXPECT_FALSE(a.out.empty()) << base[0];
  }
}

TEST(CliBinary, ExitStatusReachesTheShell) {
  const std::string bin = ALMOSTCOMM_CLI_PATH;
  const auto sink = scratch("binary_out.json");
  const auto status = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " > " + sink.string() + " 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("correct --input " + fixture("correct_commuting.json")), kExitOk);
  EXPECT_EQ(status("correct --input " + fixture("correct_nu_0.5.json")), kExitFlagged);
  EXPECT_EQ(status("car-path --input " + fixture("measure_single_atom.json")), kExitError);
  EXPECT_EQ(status("--help"), kExitOk);
}
