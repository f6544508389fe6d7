// Acceptance run: prints one PASS/FAIL line per criterion. Exits 0 when the
// set of failing criteria equals the --expect-fail set (empty by default).

#include "hdgplus/drivers.hpp"
#include "hdgplus/refproj.hpp"
#include "hdgplus/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace hdgplus;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  json data = json::object();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string orders_text(const ErrorReport& r) {
  std::ostringstream os;
  os << "E_sigma";
  for (const auto& row : r.rows) os << " " << fmt("%.3e", row.errors.E_sigma);
  os << " orders";
  for (std::size_t i = 1; i < r.rows.size(); ++i) os << " " << fmt("%.2f", r.rows[i].order_sigma);
  os << "; E_u";
  for (const auto& row : r.rows) os << " " << fmt("%.3e", row.errors.E_u);
  os << " orders";
  for (std::size_t i = 1; i < r.rows.size(); ++i) os << " " << fmt("%.2f", r.rows[i].order_u);
  return os.str();
}

bool orders_in(const ErrorReport& r, double slo, double shi, double ulo, double uhi) {
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    if (!(row.order_sigma >= slo && row.order_sigma <= shi)) return false;
    if (!(row.order_u >= ulo && row.order_u <= uhi)) return false;
  }
  return true;
}

bool strictly_decreasing(const ErrorReport& r) {
  for (std::size_t i = 1; i < r.rows.size(); ++i)
    if (!(r.rows[i].errors.E_sigma < r.rows[i - 1].errors.E_sigma && r.rows[i].errors.E_u < r.rows[i - 1].errors.E_u))
      return false;
  return true;
}

// ---------------------------------------------------------------------------

Outcome dimension_identities() {
  Outcome o{true, "", json::object()};
  std::ostringstream os;
  for (int k : {1, 2, 3}) {
    const ReferenceSpaces s = build_spaces(k, 4);
    const SpaceDims& d = s.dims();
    const bool theta_ok = d.M == d.Theta + d.traction_S + 6 && d.rigid == 6;
    const bool perp_ok = d.M == d.Sigma_minus_perp + d.V_minus_perp;
    // Four faces, three components, P_k on a triangle.
    const bool m_ok = d.M == 6 * (k + 1) * (k + 2);
    o.pass = o.pass && theta_ok && perp_ok && m_ok;
    os << "k=" << k << ": M=" << d.M << " Theta+tractions+6=" << d.Theta + d.traction_S + 6
       << " Sigma-perp+V-perp=" << d.Sigma_minus_perp + d.V_minus_perp << " min_gap="
       << fmt("%.1e", s.report()["checks"]["min_rank_gap"].get<double>()) << "; ";
    o.data["k" + std::to_string(k)] = s.report()["dims"];
  }
  o.detail = os.str();
  return o;
}

Outcome projection_conditions(unsigned seed) {
  Outcome o{true, "", json::object()};
  std::ostringstream os;
  for (int k : {1, 2}) {
    const VerificationReport v = verify_projection(k, 4, 20, seed + k, 5);
    const json& j = v.json;
    const json& r = j["max_residuals"];
    double worst = 0;
    for (const char* key : {"a", "b", "c", "mean", "flip"}) worst = std::max(worst, r[key].get<double>());
    const double tol = j["tol_proj"];
    o.pass = o.pass && v.passed && worst < tol;
    os << "k=" << k << ": max residual " << fmt("%.1e", worst) << " < tol " << fmt("%.3g", tol)
       << " (r_trac " << fmt("%.3g", j["r_trac"].get<double>()) << ", strict 1e-8 "
       << (j["passed_strict"].get<bool>() ? "met" : "not met") << "); ";
    o.data["k" + std::to_string(k)] = j;
  }
  o.detail = os.str();
  return o;
}

Outcome remainder_slope(unsigned seed) {
  const ReferenceSpaces s = build_spaces(1, 4);
  const ScalingStudy st = remainder_scaling(s, smooth_pair(seed));
  Outcome o;
  o.pass = std::isfinite(st.slope) && st.slope >= 2.0 - 0.7;
  std::ostringstream os;
  os << "k=1 |delta| at h=1..1/8:";
  for (double d : st.delta) os << " " << fmt("%.3e", d);
  os << " slope " << fmt("%.2f", st.slope) << " >= 1.30";
  o.detail = os.str();
  o.data = {{"h", st.h}, {"delta", st.delta}, {"slope", st.slope}};
  return o;
}

ErrorReport steady_study(double c_tau) {
  StudyConfig cfg;
  cfg.regime = "steady";
  cfg.levels = {2, 4, 8};
  cfg.solver.c_tau = c_tau;
  return convergence_study(make_case("paper"), cfg);
}

Outcome steady_orders(const ErrorReport& r) {
  Outcome o;
  o.pass = orders_in(r, 1.7, 2.3, 2.6, 3.6) && strictly_decreasing(r);
  o.detail = orders_text(r) + "; bands sigma [1.7,2.3] u [2.6,3.6], decreasing";
  o.data = r.to_json();
  return o;
}

Outcome transient_orders() {
  StudyConfig cfg;
  cfg.regime = "transient";
  cfg.levels = {1, 2, 4};
  cfg.T = 1.5;
  cfg.coarse_steps = 8;
  const ErrorReport r = convergence_study(case_paper_transient(), cfg);
  Outcome o;
  o.pass = orders_in(r, 1.6, 2.4, 2.4, 3.8);
  std::ostringstream os;
  os << orders_text(r) << "; steps";
  for (const auto& row : r.rows) os << " " << row.nsteps;
  os << "; bands sigma [1.6,2.4] u [2.4,3.8]";
  // Not part of the verdict: the same study one level finer separates the
  // coarsest-mesh behaviour from the asymptotic rates.
  cfg.levels = {2, 4, 8};
  const ErrorReport fine = convergence_study(case_paper_transient(), cfg);
  os << " | info n=2,4,8: " << orders_text(fine);
  o.detail = os.str();
  o.data = {{"levels_1_2_4", r.to_json()}, {"levels_2_4_8", fine.to_json()}};
  return o;
}

Outcome energy_drift(unsigned seed) {
  const auto c = case_timeharmonic(1.0);
  const HdgSetup setup(structured_cube(2), c.material, c.density);
  const int ne = setup.mesh().num_elements();
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  auto random_vec = [&](int n) {
    VecX v(n);
    for (int i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
  };
  // Random state satisfying the algebraic constraints: a steady solve with
  // random element loads and homogeneous boundary data, plus random velocity.
  std::vector<VecX> loads(ne);
  for (auto& l : loads) l = random_vec(setup.n_u());
  const HdgSolution s0 = HdgOperator(setup, 0.0).solve(loads, {});
  TransientState st{0.0, s0.sigma, s0.u, {}, {}, s0.uhat};
  st.v.resize(ne);
  for (auto& v : st.v) v = random_vec(setup.n_u());

  const NewmarkStepper stepper(setup, 0.05);
  stepper.init_acceleration(st, {});
  const double E0 = stepper.energy(st);
  double drift = 0;
  for (int n = 0; n < 100; ++n) {
    stepper.step(st, {}, {});
    drift = std::max(drift, std::abs(stepper.energy(st) - E0) / E0);
  }
  Outcome o;
  o.pass = E0 > 0 && drift < 1e-10;
  o.detail = "n=2 k=1 dt=0.05 100 steps: E0 " + fmt("%.4e", E0) + " max relative drift " + fmt("%.2e", drift) +
             " < 1e-10";
  o.data = {{"E0", E0}, {"max_drift", drift}};
  return o;
}

Outcome locking() {
  StudyConfig cfg;
  cfg.regime = "transient";
  cfg.levels = {1, 2, 4};
  const double mu = 3.0;
  const ErrorReport a = convergence_study(case_locking(150.0, mu), cfg);
  const ErrorReport b = convergence_study(case_locking(15000.0, mu), cfg);
  double diff = 0;
  for (std::size_t i = 1; i < a.rows.size(); ++i) {
    diff = std::max(diff, std::abs(a.rows[i].order_sigma - b.rows[i].order_sigma));
    diff = std::max(diff, std::abs(a.rows[i].order_u - b.rows[i].order_u));
  }
  Outcome o;
  o.pass = std::isfinite(diff) && diff < 0.1;
  o.detail = "nu=" + fmt("%.4f", poisson_ratio(150.0, mu)) + ": " + orders_text(a) + " | nu=" +
             fmt("%.5f", poisson_ratio(15000.0, mu)) + ": " + orders_text(b) + "; max order difference " +
             fmt("%.3f", diff) + " < 0.1";
  o.data = {{"nu_049", a.to_json()}, {"nu_04999", b.to_json()}, {"max_order_difference", diff}};
  return o;
}

Outcome polynomial_exactness(double c_tau) {
  const TetMesh mesh = structured_cube(2);
  Outcome o{mesh.num_elements() == 48, "", json::object()};
  std::ostringstream os;
  for (int k : {1, 2}) {
    SolverConfig cfg;
    cfg.k = k;
    cfg.c_tau = c_tau;
    const auto r = solve_steady(mesh, case_polynomial(k + 1, 1.3, 0.7, 11 + k), cfg);
    o.pass = o.pass && r.errors.E_sigma < 1e-9 && r.errors.E_u < 1e-9;
    os << "k=" << k << ": E_sigma " << fmt("%.1e", r.errors.E_sigma) << " E_u " << fmt("%.1e", r.errors.E_u) << "; ";
    o.data["k" + std::to_string(k)] = {{"E_sigma", r.errors.E_sigma}, {"E_u", r.errors.E_u}};
  }
  o.detail = "48 tets " + os.str() + "< 1e-9";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HDG+ acceptance run"};
  std::vector<int> selected, expected;
  std::string json_path;
  unsigned seed = 2024;
  app.add_option("--only", selected, "Criteria to run (default all)")->check(CLI::Range(1, 9));
  app.add_option("--expect-fail", expected, "Criteria known to fail")->check(CLI::Range(1, 9));
  app.add_option("--json", json_path, "Write the full results as JSON");
  app.add_option("--seed", seed, "Seed for random data");
  CLI11_PARSE(app, argc, argv);
  std::set<int> want(selected.begin(), selected.end());
  if (want.empty()) want = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  std::map<double, ErrorReport> steady_cache;
  auto steady = [&](double c_tau) -> const ErrorReport& {
    auto it = steady_cache.find(c_tau);
    if (it == steady_cache.end()) it = steady_cache.emplace(c_tau, steady_study(c_tau)).first;
    return it->second;
  };
  const std::map<int, Criterion> criteria{
      {1, {"dimension identities", 60, dimension_identities}},
      {2, {"projection conditions", 300, [&] { return projection_conditions(seed); }}},
      {3, {"remainder scaling", 120, [&] { return remainder_slope(seed); }}},
      {4, {"steady convergence", 900, [&] { return steady_orders(steady(1.0)); }}},
      {5, {"transient convergence", 1800, transient_orders}},
      {6, {"energy conservation", 120, [&] { return energy_drift(seed); }}},
      {7, {"locking", 1800, locking}},
      {8, {"polynomial exactness", 60, [] { return polynomial_exactness(1.0); }}},
      {9,
       {"stabilization robustness", 2700,
        [&] {
          Outcome o{true, "", json::object()};
          for (double c : {0.5, 1.0, 4.0}) {
            const Outcome s = steady_orders(steady(c));
            const Outcome p = polynomial_exactness(c);
            o.pass = o.pass && s.pass && p.pass;
            o.detail += "c_tau=" + fmt("%g", c) + ": steady " + (s.pass ? "pass" : "FAIL") + " (" + s.detail +
                        "), exactness " + (p.pass ? "pass" : "FAIL") + " (" + p.detail + "); ";
            o.data[fmt("%g", c)] = {{"steady", s.data}, {"exactness", p.data}};
          }
          return o;
        }}},
  };

  std::cout << "hdgplus " << kVersion << " acceptance, seed " << seed << "\n";
  json results = json::object();
  bool all = true;
  std::set<int> failed;
  for (int id : want) {
    const Criterion& c = criteria.at(id);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    all = all && pass;
    if (!pass) failed.insert(id);
    std::cout << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << " [" << c.name << "] " << o.detail
              << " time " << fmt("%.1f", secs) << " s (budget " << c.budget_s << " s" << (in_time ? "" : ", EXCEEDED")
              << ")" << std::endl;
    results[std::to_string(id)] = {{"name", c.name}, {"pass", pass}, {"seconds", secs}, {"detail", o.detail},
                                   {"data", o.data}};
  }
  std::set<int> expect;
  for (int id : expected)
    if (want.count(id)) expect.insert(id);
  std::cout << (all ? "ALL PASS" : "SOME CRITERIA FAILED") << ": failed {";
  for (int id : failed) std::cout << " " << id;
  std::cout << " }, expected {";
  for (int id : expect) std::cout << " " << id;
  std::cout << " }\n";
  if (!json_path.empty()) std::ofstream(json_path) << json{{"seed", seed}, {"passed", all}, {"criteria", results}}.dump(2)
                                                  << "\n";
  return failed == expect ? 0 : 1;
}
