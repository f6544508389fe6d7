// Command-line front end: mesh generation and inspection, the steady,
// time-harmonic and transient solvers, projection verification and
// convergence studies.
//
// Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
// 3 verification failure.

#include "hdgplus/drivers.hpp"
#include "hdgplus/refproj.hpp"
#include "hdgplus/tetmesh.hpp"
#include "hdgplus/version.hpp"
#include "hdgplus/vtu.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

using nlohmann::json;
using namespace hdgplus;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1, kExitNumerical = 2, kExitVerification = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  int mesh_n = 2;
  std::string mesh_file;
  SolverConfig solver;
  std::string case_name = "paper";
  json case_params = json::object();
  double kappa = 1.0;
  double T = 1.5;
  int nsteps = 8;
  std::string init = "zero";
  std::string regime = "steady";
  std::vector<int> levels{2, 4, 8};
  int coarse_steps = 8;
  std::string out_dir = ".";
  bool vtu = true;
  double solve_residual = 1e-8;
  unsigned seed = 0;
};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw UsageError("unknown key '" + key + "' in " + where);
}

std::string scaling_name(TauScaling s) { return s == TauScaling::shear ? "shear" : "lame"; }

TauScaling parse_scaling(const std::string& s) {
  if (s == "shear") return TauScaling::shear;
  if (s == "lame") return TauScaling::lame;
  throw UsageError("tau_scaling must be 'shear' or 'lame', got '" + s + "'");
}

RunConfig parse_config(const json& j) {
  check_keys(j, {"mesh", "k", "c_tau", "tau_scaling", "quad_order", "case", "kappa", "T", "nsteps", "init", "regime",
                 "levels", "coarse_steps", "output", "tolerances", "seed"},
             "config");
  RunConfig c;
  if (j.contains("mesh")) {
    const json& m = j["mesh"];
    check_keys(m, {"n", "file"}, "mesh");
    if (m.contains("n") && m.contains("file")) throw UsageError("mesh takes either 'n' or 'file', not both");
    if (m.contains("n")) c.mesh_n = m["n"].get<int>();
    if (m.contains("file")) c.mesh_file = m["file"].get<std::string>();
  }
  if (j.contains("k")) c.solver.k = j["k"].get<int>();
  if (j.contains("c_tau")) c.solver.c_tau = j["c_tau"].get<double>();
  if (j.contains("tau_scaling")) c.solver.tau_scaling = parse_scaling(j["tau_scaling"].get<std::string>());
  if (j.contains("quad_order")) c.solver.quad_order = j["quad_order"].get<int>();
  if (j.contains("case")) {
    const json& cs = j["case"];
    check_keys(cs, {"name", "params"}, "case");
    if (cs.contains("name")) c.case_name = cs["name"].get<std::string>();
    if (cs.contains("params")) c.case_params = cs["params"];
  }
  if (j.contains("kappa")) c.kappa = j["kappa"].get<double>();
  if (j.contains("T")) c.T = j["T"].get<double>();
  if (j.contains("nsteps")) c.nsteps = j["nsteps"].get<int>();
  if (j.contains("init")) c.init = j["init"].get<std::string>();
  if (j.contains("regime")) c.regime = j["regime"].get<std::string>();
  if (j.contains("levels")) c.levels = j["levels"].get<std::vector<int>>();
  if (j.contains("coarse_steps")) c.coarse_steps = j["coarse_steps"].get<int>();
  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, {"dir", "vtu"}, "output");
    if (o.contains("dir")) c.out_dir = o["dir"].get<std::string>();
    if (o.contains("vtu")) c.vtu = o["vtu"].get<bool>();
  }
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    check_keys(t, {"solve_residual"}, "tolerances");
    if (t.contains("solve_residual")) c.solve_residual = t["solve_residual"].get<double>();
  }
  if (j.contains("seed")) c.seed = j["seed"].get<unsigned>();
  return c;
}

json config_json(const RunConfig& c) {
  json mesh = c.mesh_file.empty() ? json{{"n", c.mesh_n}} : json{{"file", c.mesh_file}};
  return {{"mesh", mesh},
          {"k", c.solver.k},
          {"c_tau", c.solver.c_tau},
          {"tau_scaling", scaling_name(c.solver.tau_scaling)},
          {"quad_order", c.solver.quad_order},
          {"case", {{"name", c.case_name}, {"params", c.case_params}}},
          {"kappa", c.kappa},
          {"T", c.T},
          {"nsteps", c.nsteps},
          {"init", c.init},
          {"regime", c.regime},
          {"levels", c.levels},
          {"coarse_steps", c.coarse_steps},
          {"output", {{"dir", c.out_dir}, {"vtu", c.vtu}}},
          {"tolerances", {{"solve_residual", c.solve_residual}}},
          {"seed", c.seed}};
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw UsageError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw UsageError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

json manifest(const std::string& command, const json& config, unsigned seed, const std::vector<std::string>& artifacts) {
  return {{"tool", "hdgplus"}, {"version", kVersion}, {"command", command}, {"config", config}, {"seed", seed},
          {"artifacts", artifacts}};
}

TetMesh load_mesh(const RunConfig& c) {
  if (!c.mesh_file.empty()) return load_msh(c.mesh_file);
  if (c.mesh_n < 1) throw UsageError("mesh n must be >= 1");
  return structured_cube(c.mesh_n);
}

/// Flag overrides shared by solve and convergence.
struct Overrides {
  std::string config;
  std::optional<int> n, k, nsteps, coarse_steps;
  std::optional<double> c_tau, kappa, T;
  std::optional<std::string> mesh, case_name, init, out_dir, regime, tau_scaling;
  std::vector<int> levels;
  bool no_vtu = false;

  void add(CLI::App* app, bool study) {
    app->add_option("--config", config, "JSON run configuration");
    app->add_option("--n", n, "structured cube divisions");
    app->add_option("--mesh", mesh, "Gmsh MSH 2.2 mesh file");
    app->add_option("--k", k, "polynomial degree");
    app->add_option("--c-tau", c_tau, "stabilization constant");
    app->add_option("--tau-scaling", tau_scaling, "shear or lame");
    app->add_option("--case", case_name, "paper, locking, timeharmonic or polynomial");
    app->add_option("--kappa", kappa, "wave number (harmonic)");
    app->add_option("--T", T, "final time (transient)");
    app->add_option("--nsteps", nsteps, "time steps (transient)");
    app->add_option("--init", init, "zero, exact-paper or approx (transient)");
    app->add_option("--out-dir", out_dir, "output directory");
    app->add_flag("--no-vtu", no_vtu, "skip the VTU output");
    if (study) {
      app->add_option("--regime", regime, "steady, harmonic or transient");
      app->add_option("--levels", levels, "cube divisions per level");
      app->add_option("--coarse-steps", coarse_steps, "time steps on the coarsest level");
    }
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : parse_config(read_json_file(config));
    if (n) {
      c.mesh_n = *n;
      c.mesh_file.clear();
    }
    if (mesh) c.mesh_file = *mesh;
    if (k) c.solver.k = *k;
    if (c_tau) c.solver.c_tau = *c_tau;
    if (tau_scaling) c.solver.tau_scaling = parse_scaling(*tau_scaling);
    if (case_name) c.case_name = *case_name;
    if (kappa) c.kappa = *kappa;
    if (T) c.T = *T;
    if (nsteps) c.nsteps = *nsteps;
    if (init) c.init = *init;
    if (out_dir) c.out_dir = *out_dir;
    if (regime) c.regime = *regime;
    if (!levels.empty()) c.levels = levels;
    if (coarse_steps) c.coarse_steps = *coarse_steps;
    if (no_vtu) c.vtu = false;
    return c;
  }
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check_residual(double residual, const RunConfig& c) {
  if (!(residual <= c.solve_residual))
    throw NumericalFailure("solve residual " + std::to_string(residual) + " exceeds the tolerance " +
                           std::to_string(c.solve_residual));
}

int cmd_solve(const std::string& regime, const RunConfig& c) {
  const fs::path dir(c.out_dir);
  const json cfg = config_json(c);
  try {
    const TetMesh mesh = load_mesh(c);
    ManufacturedCase mc = make_case(c.case_name, c.case_params);
    ErrorReport report;
    report.k = c.solver.k;
    report.regime = regime;
    json diagnostics;
    std::vector<std::string> artifacts{"errors.csv", "diagnostics.json", "manifest.json"};
    std::string vtu;
    std::string energy_csv;
    if (regime == "steady") {
      const SteadyResult r = solve_steady(mesh, mc, c.solver);
      check_residual(r.solution.report.residual, c);
      report.rows.push_back({c.mesh_n, mesh.h_max(), 0, r.errors, NAN, NAN});
      diagnostics = r.diagnostics;
      if (c.vtu) vtu = vtu_document(mesh, centroid_fields(*r.setup, r.solution.sigma, r.solution.u));
    } else if (regime == "harmonic") {
      const HarmonicResult r = solve_timeharmonic(mesh, mc, c.solver, c.kappa);
      check_residual(std::max(r.re.report.residual, r.im.report.residual), c);
      report.rows.push_back({c.mesh_n, mesh.h_max(), 0, r.errors, NAN, NAN});
      diagnostics = r.diagnostics;
      diagnostics["error_norm"] = "complex relative L2";
      if (c.vtu) {
        auto f = centroid_fields(*r.setup, r.re.sigma, r.re.u);
        auto g = centroid_fields(*r.setup, r.im.sigma, r.im.u);
        for (auto& x : f) x.name += "_re";
        for (auto& x : g) x.name += "_im";
        f.insert(f.end(), g.begin(), g.end());
        vtu = vtu_document(mesh, f);
      }
    } else if (regime == "transient") {
      TransientConfig tc;
      tc.T = c.T;
      tc.nsteps = c.nsteps;
      tc.init_mode = c.init;
      const TransientResult r = solve_transient(mesh, mc, c.solver, tc);
      check_residual(r.max_residual, c);
      report.rows.push_back({c.mesh_n, mesh.h_max(), c.nsteps, r.errors, NAN, NAN});
      diagnostics = r.diagnostics;
      std::ostringstream os;
      os << "step,t,energy\n";
      char buf[64];
      for (std::size_t i = 0; i < r.energy.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.6e,%.12e\n", i, c.T * static_cast<double>(i) / c.nsteps, r.energy[i]);
        os << buf;
      }
      energy_csv = os.str();
      artifacts.push_back("energy.csv");
      if (c.vtu) vtu = vtu_document(mesh, centroid_fields(*r.setup, r.state.sigma, r.state.u));
    } else {
      throw UsageError("unknown regime '" + regime + "' (expected steady, harmonic or transient)");
    }
    if (!vtu.empty()) artifacts.push_back("solution.vtu");
    const std::string csv = report.to_csv();
    write_atomic(dir / "errors.csv", csv);
    write_atomic(dir / "diagnostics.json", diagnostics.dump(2) + "\n");
    if (!energy_csv.empty()) write_atomic(dir / "energy.csv", energy_csv);
    if (!vtu.empty()) write_atomic(dir / "solution.vtu", vtu);
    write_atomic(dir / "manifest.json", manifest("solve " + regime, cfg, c.seed, artifacts).dump(2) + "\n");
    std::cout << csv;
    return 0;
  } catch (const UsageError&) {
    throw;
  } catch (const InvalidArgument&) {
    throw;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    const json err{{"error", e.what()}, {"command", "solve " + regime}, {"config", cfg}};
    write_atomic(dir / "error.json", err.dump(2) + "\n");
    std::cerr << "hdgplus: solve failed: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int cmd_convergence(const RunConfig& c) {
  const fs::path dir(c.out_dir);
  const json cfg = config_json(c);
  StudyConfig sc;
  sc.regime = c.regime;
  sc.levels = c.levels;
  sc.solver = c.solver;
  sc.kappa = c.kappa;
  sc.T = c.T;
  sc.coarse_steps = c.coarse_steps;
  sc.init_mode = c.init;
  if (!c.mesh_file.empty()) throw UsageError("convergence studies use structured cubes; remove 'mesh.file'");
  const ManufacturedCase mc = make_case(c.case_name, c.case_params);
  try {
    const ErrorReport r = convergence_study(mc, sc);
    const std::string csv = r.to_csv();
    write_atomic(dir / "convergence.csv", csv);
    write_atomic(dir / "convergence.json", r.to_json().dump(2) + "\n");
    write_atomic(dir / "manifest.json",
                 manifest("convergence", cfg, c.seed, {"convergence.csv", "convergence.json", "manifest.json"}).dump(2) + "\n");
    std::cout << csv;
    return 0;
  } catch (const InvalidArgument&) {
    throw;
  } catch (const std::exception& e) {
    write_atomic(dir / "error.json", json{{"error", e.what()}, {"command", "convergence"}, {"config", cfg}}.dump(2) + "\n");
    std::cerr << "hdgplus: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int cmd_verify(int k, int q, int trials, unsigned seed, int tets, const std::string& out) {
  json report;
  int code = 0;
  try {
    VerificationReport r = verify_projection(k, q, trials, seed, tets);
    report = std::move(r.json);
    if (!r.passed) code = kExitVerification;
  } catch (const InvalidArgument&) {
    throw;
  } catch (const std::exception& e) {
    report = {{"k", k}, {"q", q}, {"seed", seed}, {"passed", false}, {"error", e.what()}};
    std::cerr << "hdgplus: verification failed: " << e.what() << "\n";
    code = kExitVerification;
  }
  const std::string text = report.dump(2) + "\n";
  if (!out.empty()) write_atomic(out, text);
  std::cout << text;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HDG+ elasticity solver and projection verification"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  auto* mesh = app.add_subcommand("mesh", "generate or inspect meshes");
  mesh->require_subcommand(1);
  auto* gen = mesh->add_subcommand("gen", "structured Kuhn cube mesh");
  int gen_n = 0;
  std::string gen_out;
  std::vector<double> lo{0, 0, 0}, hi{1, 1, 1};
  gen->add_option("--n", gen_n, "divisions per direction")->required()->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output MSH file")->required();
  gen->add_option("--lo", lo, "lower corner")->expected(3);
  gen->add_option("--hi", hi, "upper corner")->expected(3);
  auto* info = mesh->add_subcommand("info", "mesh summary as JSON");
  std::string info_file;
  info->add_option("file", info_file, "MSH file")->required();

  auto* solve = app.add_subcommand("solve", "run one solve");
  solve->require_subcommand(1);
  std::string regime;
  std::array<Overrides, 3> solve_over;
  const std::array<std::string, 3> regimes{"steady", "harmonic", "transient"};
  for (int i = 0; i < 3; ++i) {
    auto* sub = solve->add_subcommand(regimes[i], regimes[i] + " solve");
    solve_over[i].add(sub, false);
    sub->callback([&, i] { regime = regimes[i]; });
  }

  auto* verify = app.add_subcommand("verify-projection", "check the projection identities on random data");
  int vk = 1, vq = 4, vtrials = 20, vtets = 5;
  unsigned vseed = 1;
  std::string vout;
  verify->add_option("--k", vk, "polynomial degree");
  verify->add_option("--q", vq, "lifting degree offset");
  verify->add_option("--trials", vtrials, "random data per element");
  verify->add_option("--tets", vtets, "random elements");
  verify->add_option("--seed", vseed, "random seed");
  verify->add_option("--out", vout, "report file");

  auto* conv = app.add_subcommand("convergence", "convergence study on structured cubes");
  Overrides conv_over;
  conv_over.add(conv, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (lo.size() != 3 || hi.size() != 3) throw UsageError("--lo and --hi take three values");
      const TetMesh m = structured_cube(gen_n, Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2]));
      const fs::path out(gen_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      const std::string tmp = gen_out + ".tmp";
      write_msh(m, tmp);
      fs::rename(tmp, out);
      std::cout << mesh_summary(m).dump(2) << "\n";
      return 0;
    }
    if (info->parsed()) {
      std::cout << mesh_summary(load_msh(info_file)).dump(2) << "\n";
      return 0;
    }
    if (solve->parsed()) {
      for (int i = 0; i < 3; ++i)
        if (regime == regimes[i]) return cmd_solve(regime, solve_over[i].resolve());
    }
    if (verify->parsed()) return cmd_verify(vk, vq, vtrials, vseed, vtets, vout);
    if (conv->parsed()) return cmd_convergence(conv_over.resolve());
  } catch (const UsageError& e) {
    std::cerr << "hdgplus: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "hdgplus: invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "hdgplus: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "hdgplus: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "hdgplus: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "hdgplus: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
