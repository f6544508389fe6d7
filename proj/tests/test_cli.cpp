#include "hdgplus/tetmesh.hpp"
#include "hdgplus/vtu.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("hdgplus_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun run(const std::string& args) {
  static int counter = 0;
  const fs::path out = work_dir() / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = work_dir() / ("err" + std::to_string(counter++) + ".txt");
  const std::string cmd = "cd '" + work_dir().string() + "' && '" HDGPLUS_CLI "' " + args + " > '" + out.string() +
                          "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

struct CleanUp : testing::Environment {
  void TearDown() override { fs::remove_all(work_dir()); }
};
const auto* const clean_up = testing::AddGlobalTestEnvironment(new CleanUp);

void write(const std::string& name, const std::string& text) { std::ofstream(work_dir() / name) << text; }

}  // namespace

TEST(Cli, MeshGenerationAndInfoRoundTrip) {
  const CliRun gen = run("mesh gen --n 2 --out cube2.msh");
  ASSERT_EQ(gen.code, 0) << gen.err;
  const json a = json::parse(gen.out);
  EXPECT_EQ(a["elements"], 48);
  const CliRun info = run("mesh info cube2.msh");
  ASSERT_EQ(info.code, 0) << info.err;
  EXPECT_EQ(json::parse(info.out), a);
  EXPECT_EQ(run("mesh info missing.msh").code, 1);
}

TEST(Cli, SteadySolveWritesArtifacts) {
  const CliRun r = run("solve steady --n 2 --k 1 --case paper --out-dir steady");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(work_dir() / "steady/errors.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,h,E_sigma,order_sigma,E_u,order_u");
  std::stringstream row(csv.substr(csv.find('\n') + 1));
  std::string cell;
  std::vector<std::string> cells;
  while (std::getline(row, cell, ',')) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_TRUE(std::isfinite(std::stod(cells[2])));
  EXPECT_TRUE(std::isfinite(std::stod(cells[4])));
  const json m = json::parse(slurp(work_dir() / "steady/manifest.json"));
  EXPECT_EQ(m["command"], "solve steady");
  EXPECT_EQ(m["config"]["mesh"]["n"], 2);
  EXPECT_TRUE(m.contains("version"));
  EXPECT_TRUE(m.contains("seed"));
  EXPECT_NE(slurp(work_dir() / "steady/solution.vtu").find("NumberOfCells=\"48\""), std::string::npos);
  EXPECT_FALSE(fs::exists(work_dir() / "steady/errors.csv.tmp"));
}

TEST(Cli, ManifestConfigReproducesRun) {
  ASSERT_EQ(run("solve steady --n 1 --c-tau 4 --out-dir rep1 --no-vtu").code, 0);
  const json m = json::parse(slurp(work_dir() / "rep1/manifest.json"));
  json cfg = m["config"];
  cfg["output"]["dir"] = "rep2";
  write("rep.json", cfg.dump());
  ASSERT_EQ(run("solve steady --config rep.json").code, 0);
  EXPECT_EQ(slurp(work_dir() / "rep1/errors.csv"), slurp(work_dir() / "rep2/errors.csv"));
  EXPECT_FALSE(fs::exists(work_dir() / "rep1/solution.vtu"));
}

TEST(Cli, HarmonicReportsComplexErrors) {
  const CliRun r = run("solve harmonic --n 1 --case timeharmonic --kappa 1 --out-dir harm");
  ASSERT_EQ(r.code, 0) << r.err;
  const json d = json::parse(slurp(work_dir() / "harm/diagnostics.json"));
  EXPECT_EQ(d["error_norm"], "complex relative L2");
  EXPECT_NE(slurp(work_dir() / "harm/solution.vtu").find("u_im"), std::string::npos);
}

TEST(Cli, TransientRefusesExactInitialVelocity) {
  write("vel.json", R"({"mesh":{"n":1},"case":{"name":"polynomial","params":{"velocity":0.5}},"init":"exact-paper",
                         "output":{"dir":"vel"}})");
  const CliRun r = run("solve transient --config vel.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Sigma_fill"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(work_dir() / "vel/error.json"));
  const CliRun ok = run("solve transient --config vel.json --init approx --out-dir vel2");
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(fs::exists(work_dir() / "vel2/energy.csv"));
}

TEST(Cli, ConfigErrorsExitWithOne) {
  write("bad_key.json", R"({"k":1,"bogus":true})");
  EXPECT_EQ(run("solve steady --config bad_key.json").code, 1);
  write("bad_type.json", R"({"k":"one"})");
  EXPECT_EQ(run("solve steady --config bad_type.json").code, 1);
  write("bad_json.json", "{");
  EXPECT_EQ(run("solve steady --config bad_json.json").code, 1);
  EXPECT_EQ(run("solve steady --case nonsense").code, 1);
  EXPECT_EQ(run("solve").code, 1);
  EXPECT_EQ(run("solve steady --no-such-flag").code, 1);
}

TEST(Cli, VerifyProjectionIsDeterministic) {
  const CliRun a = run("verify-projection --k 1 --q 4 --trials 2 --tets 2 --seed 5 --out va.json");
  const CliRun b = run("verify-projection --k 1 --q 4 --trials 2 --tets 2 --seed 5 --out vb.json");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(b.code, 0);
  EXPECT_EQ(slurp(work_dir() / "va.json"), slurp(work_dir() / "vb.json"));
  const json j = json::parse(a.out);
  for (const auto& [name, id] : j["identities"].items()) EXPECT_TRUE(id["holds"].get<bool>()) << name;
}

TEST(Cli, VerifyProjectionRejectsSmallQ) {
  const CliRun r = run("verify-projection --k 1 --q 1 --trials 1");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("r_trac"), std::string::npos) << r.err;
}

TEST(Cli, ConvergenceTable) {
  const CliRun r = run("convergence --regime steady --levels 1 2 --out-dir conv");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(work_dir() / "conv/convergence.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find(",NA,"), std::string::npos);
  EXPECT_TRUE(fs::exists(work_dir() / "conv/manifest.json"));
  EXPECT_EQ(run("convergence --regime sideways --levels 1 2 --out-dir conv2").code, 1);
}

TEST(Vtu, DocumentLayout) {
  const hdgplus::TetMesh m = hdgplus::structured_cube(1);
  hdgplus::CellField f{"id", 1, {}};
  for (int e = 0; e < m.num_elements(); ++e) f.values.push_back(e);
  const std::string doc = hdgplus::vtu_document(m, {f});
  EXPECT_NE(doc.find("NumberOfPoints=\"8\""), std::string::npos);
  EXPECT_NE(doc.find("NumberOfCells=\"6\""), std::string::npos);
  EXPECT_NE(doc.find("Name=\"id\""), std::string::npos);
  EXPECT_EQ(doc.find("appended"), std::string::npos);
  f.values.pop_back();
  EXPECT_THROW(hdgplus::vtu_document(m, {f}), hdgplus::InvalidArgument);
}
