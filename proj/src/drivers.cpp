#include "hdgplus/drivers.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace hdgplus {

namespace {

nlohmann::json report_json(const SolveReport& r) {
  return {{"path", r.path},
          {"dofs", r.dofs},
          {"residual", r.residual},
          {"condition_estimate", r.condition_estimate},
          {"min_element_rcond", r.min_element_rcond},
          {"warnings", r.warnings}};
}

nlohmann::json errors_json(const FieldErrors& e) {
  return {{"E_sigma", e.E_sigma}, {"E_u", e.E_u}, {"norm_sigma", e.norm_sigma}, {"norm_u", e.norm_u}};
}

std::shared_ptr<const HdgSetup> make_setup(const TetMesh& mesh, const ManufacturedCase& c, const SolverConfig& cfg) {
  return std::make_shared<const HdgSetup>(mesh, c.material, c.density, to_options(cfg));
}

double max_local_residual(const HdgOperator& op, const HdgSolution& sol, const std::vector<VecX>& loads) {
  const HdgSetup& s = op.setup();
  double r = 0;
  for (int e = 0; e < s.mesh().num_elements(); ++e)
    r = std::max(r, local_residual(op.elements()[e].blocks, sol.sigma[e], sol.u[e], gather_uhat(s, e, sol.uhat),
                                   loads.empty() ? VecX::Zero(s.n_u()) : loads[e]));
  return r;
}

std::vector<VecX> scaled(const std::vector<VecX>& v, double a) {
  std::vector<VecX> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = a * v[i];
  return out;
}

// Absolute error from a relative one (field_errors falls back to absolute
// values when the exact norm vanishes).
double absolute(double rel, double norm) { return norm > 0 ? rel * norm : rel; }

std::string sig4(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace

HdgOptions to_options(const SolverConfig& c) {
  HdgOptions o;
  o.k = c.k;
  o.c_tau = c.c_tau;
  o.tau_scaling = c.tau_scaling;
  o.quad_order = c.quad_order;
  return o;
}

std::vector<VecX> element_loads(const HdgSetup& setup, const VectorFn& f) {
  std::vector<VecX> out(setup.mesh().num_elements());
  for (int e = 0; e < setup.mesh().num_elements(); ++e) out[e] = assemble_element_load(setup, e, f);
  return out;
}

// ---------------------------------------------------------------------------
// Steady
// ---------------------------------------------------------------------------

SteadyResult solve_steady(const TetMesh& mesh, const ManufacturedCase& c, const SolverConfig& cfg) {
  SteadyResult r;
  r.setup = make_setup(mesh, c, cfg);
  const HdgSetup& s = *r.setup;
  const HdgOperator op(s, 0.0);
  const auto loads = element_loads(s, [&](const Vec3& x) { return c.load_steady(x); });
  const VecX g = project_faces(s, [&](const Vec3& x) { return c.U_value(x); });
  r.solution = op.solve(loads, g);
  r.errors = field_errors(
      s, r.solution.sigma, r.solution.u, [&](const Vec3& x) { return c.stress_U(x); },
      [&](const Vec3& x) { return c.U_value(x); });
  const auto [jump, scale] = traction_jump(s, op.elements(), r.solution);
  r.diagnostics = {{"regime", "steady"},
                   {"solve", report_json(r.solution.report)},
                   {"errors", errors_json(r.errors)},
                   {"max_local_residual", max_local_residual(op, r.solution, loads)},
                   {"traction_jump", scale > 0 ? jump / scale : jump}};
  return r;
}

// ---------------------------------------------------------------------------
// Time-harmonic
// ---------------------------------------------------------------------------

HarmonicResult solve_timeharmonic(const TetMesh& mesh, const ManufacturedCase& c, const SolverConfig& cfg, double kappa) {
  if (!(kappa >= 0) || !std::isfinite(kappa)) throw InvalidArgument("wavenumber kappa must be finite and >= 0");
  HarmonicResult r;
  r.setup = make_setup(mesh, c, cfg);
  const HdgSetup& s = *r.setup;
  const HdgOperator op(s, -kappa * kappa);
  const double cr = std::cos(c.phase), ci = std::sin(c.phase);
  const auto loads = element_loads(s, [&](const Vec3& x) { return c.load_harmonic(x, kappa); });
  const VecX g = project_faces(s, [&](const Vec3& x) { return c.U_value(x); });
  r.re = op.solve(scaled(loads, cr), cr * g);
  r.im = op.solve(scaled(loads, ci), ci * g);

  const auto sig = [&](double a) { return [&c, a](const Vec3& x) -> Mat3 { return a * c.stress_U(x); }; };
  const auto disp = [&](double a) { return [&c, a](const Vec3& x) -> Vec3 { return a * c.U_value(x); }; };
  const FieldErrors er = field_errors(s, r.re.sigma, r.re.u, sig(cr), disp(cr));
  const FieldErrors ei = field_errors(s, r.im.sigma, r.im.u, sig(ci), disp(ci));
  const auto combine = [](double e1, double n1, double e2, double n2) {
    const double a1 = absolute(e1, n1), a2 = absolute(e2, n2);
    const double n = std::hypot(n1, n2);
    return n > 0 ? std::hypot(a1, a2) / n : std::hypot(a1, a2);
  };
  r.errors.E_sigma = combine(er.E_sigma, er.norm_sigma, ei.E_sigma, ei.norm_sigma);
  r.errors.E_u = combine(er.E_u, er.norm_u, ei.E_u, ei.norm_u);
  r.errors.norm_sigma = std::hypot(er.norm_sigma, ei.norm_sigma);
  r.errors.norm_u = std::hypot(er.norm_u, ei.norm_u);

  r.warnings = r.re.report.warnings;
  const double cond = op.solver().condition_estimate();
  if (kappa > 0 && cond > kResonanceCondition) {
    std::ostringstream msg;
    msg << "kappa = " << kappa << " is close to a discrete resonance (condition estimate " << cond << ")";
    r.warnings.push_back(msg.str());
  }
  r.diagnostics = {{"regime", "harmonic"},
                   {"kappa", kappa},
                   {"phase", c.phase},
                   {"solve_re", report_json(r.re.report)},
                   {"solve_im", report_json(r.im.report)},
                   {"errors", errors_json(r.errors)},
                   {"warnings", r.warnings}};
  return r;
}

// ---------------------------------------------------------------------------
// Transient
// ---------------------------------------------------------------------------

NewmarkStepper::NewmarkStepper(const HdgSetup& setup, double dt)
    : setup_(setup), dt_(dt), op_(setup, dt > 0 ? 4.0 / (dt * dt) : throw InvalidArgument("time step must be positive")) {}

void NewmarkStepper::init_acceleration(TransientState& s, const std::vector<VecX>& loads) const {
  const int ne = setup_.mesh().num_elements();
  s.a.resize(ne);
  for (int e = 0; e < ne; ++e) {
    const LocalBlocks& b = op_.elements()[e].blocks;
    const VecX uh = gather_uhat(setup_, e, s.uhat);
    VecX rhs = b.D * s.sigma[e] - b.Suu * s.u[e] + b.Suh * uh;
    if (!loads.empty()) rhs += loads[e];
    s.a[e] = b.M.llt().solve(rhs);
  }
}

SolveReport NewmarkStepper::step(TransientState& s, const std::vector<VecX>& loads, const VecX& dirichlet) const {
  const int ne = setup_.mesh().num_elements();
  const double m = op_.mass_coeff();
  std::vector<VecX> eff(ne);
  for (int e = 0; e < ne; ++e) {
    const LocalBlocks& b = op_.elements()[e].blocks;
    eff[e] = b.M * (m * s.u[e] + (4.0 / dt_) * s.v[e] + s.a[e]);
    if (!loads.empty()) eff[e] += loads[e];
  }
  HdgSolution sol = op_.solve(eff, dirichlet);
  for (int e = 0; e < ne; ++e) {
    const VecX a_new = m * (sol.u[e] - s.u[e]) - (4.0 / dt_) * s.v[e] - s.a[e];
    s.v[e] += 0.5 * dt_ * (s.a[e] + a_new);
    s.a[e] = a_new;
  }
  s.sigma = std::move(sol.sigma);
  s.u = std::move(sol.u);
  s.uhat = std::move(sol.uhat);
  s.t += dt_;
  return sol.report;
}

double NewmarkStepper::energy(const TransientState& s) const {
  double E = 0;
  for (int e = 0; e < setup_.mesh().num_elements(); ++e) {
    const LocalBlocks& b = op_.elements()[e].blocks;
    const VecX uh = gather_uhat(setup_, e, s.uhat);
    E += s.sigma[e].dot(b.A * s.sigma[e]) + s.v[e].dot(b.M * s.v[e]);
    E += s.u[e].dot(b.Suu * s.u[e]) - 2.0 * s.u[e].dot(b.Suh * uh) + uh.dot(b.Shh * uh);
  }
  return 0.5 * E;
}

HdgSolution solve_initial_displacement(const HdgSetup& setup, const ManufacturedCase& c, double t0) {
  const double h0 = c.H.eval(t0)[0];
  const HdgOperator op(setup, 0.0);
  const auto loads = element_loads(setup, [&](const Vec3& x) { return Vec3(-h0 * c.div_stress_U(x)); });
  const VecX g = project_faces(setup, [&](const Vec3& x) { return c.displacement(x, t0); });
  return op.solve(loads, g);
}

TransientResult solve_transient(const TetMesh& mesh, const ManufacturedCase& c, const SolverConfig& cfg,
                                const TransientConfig& tc) {
  if (!(tc.T > 0) || tc.nsteps < 1) throw InvalidArgument("transient run needs T > 0 and nsteps >= 1");
  if (tc.init_mode != "zero" && tc.init_mode != "exact-paper" && tc.init_mode != "approx")
    throw InvalidArgument("unknown init mode '" + tc.init_mode + "' (expected zero, exact-paper or approx)");
  TransientResult r;
  r.setup = make_setup(mesh, c, cfg);
  const HdgSetup& s = *r.setup;
  const int ne = s.mesh().num_elements();
  const double dt = tc.T / tc.nsteps;
  const NewmarkStepper stepper(s, dt);

  const auto h0 = c.H.eval(0.0);
  const bool zero_u0 = std::abs(h0[0]) < 1e-14, zero_v0 = std::abs(h0[1]) < 1e-14;
  TransientState st;
  st.sigma.assign(ne, VecX::Zero(s.n_sigma()));
  st.u.assign(ne, VecX::Zero(s.n_u()));
  st.v.assign(ne, VecX::Zero(s.n_u()));
  st.uhat = VecX::Zero(s.num_face_coeffs());
  if (tc.init_mode == "zero") {
    if (!zero_u0 || !zero_v0)
      throw InvalidArgument("init mode 'zero' requires vanishing initial displacement and velocity; use 'approx'");
  } else {
    if (tc.init_mode == "exact-paper" && !zero_v0)
      throw Unsupported(
          "init mode 'exact-paper' with nonzero initial velocity needs the exact velocity projection, which requires the "
          "Sigma_fill enrichment of the stress space and is not implemented; use init mode 'approx'");
    HdgSolution s0 = solve_initial_displacement(s, c, 0.0);
    st.sigma = std::move(s0.sigma);
    st.u = std::move(s0.u);
    st.uhat = std::move(s0.uhat);
    if (!zero_v0) {
      const double hv = h0[1];
      for (int e = 0; e < ne; ++e) {
        const LocalBlocks& b = stepper.op().elements()[e].blocks;
        const VecX rhs = assemble_element_load(
            s, e, [&](const Vec3& x) { return Vec3(c.density.value(x) * hv * c.U_value(x)); });
        st.v[e] = b.M.llt().solve(rhs);
      }
      r.notes.push_back(
          "initial velocity: element-wise rho-weighted L2 projection onto P_{k+1}, an approximation of the exact "
          "initial velocity projection");
    }
  }

  const auto loads_at = [&](double t) {
    return element_loads(s, [&](const Vec3& x) { return c.load_transient(x, t); });
  };
  const auto dirichlet_at = [&](double t) {
    return project_faces(s, [&](const Vec3& x) { return c.displacement(x, t); });
  };
  stepper.init_acceleration(st, loads_at(0.0));
  if (tc.record_energy) r.energy.push_back(stepper.energy(st));

  SolveReport last;
  for (int n = 1; n <= tc.nsteps; ++n) {
    const double t = n * dt;
    last = stepper.step(st, loads_at(t), dirichlet_at(t));
    st.t = t;
    r.max_residual = std::max(r.max_residual, last.residual);
    if (tc.record_energy) r.energy.push_back(stepper.energy(st));
  }

  const double T = tc.T;
  r.errors = field_errors(
      s, st.sigma, st.u, [&](const Vec3& x) { return c.stress(x, T); }, [&](const Vec3& x) { return c.displacement(x, T); });
  r.state = std::move(st);
  r.diagnostics = {{"regime", "transient"},
                   {"T", tc.T},
                   {"nsteps", tc.nsteps},
                   {"dt", dt},
                   {"init_mode", tc.init_mode},
                   {"solve", report_json(last)},
                   {"max_step_residual", r.max_residual},
                   {"errors", errors_json(r.errors)},
                   {"energy", r.energy},
                   {"notes", r.notes}};
  return r;
}

// ---------------------------------------------------------------------------
// Convergence
// ---------------------------------------------------------------------------

void ErrorReport::compute_orders() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto order = [&](double e0, double e1, double h0, double h1) {
    if (e0 < kOrderErrorFloor || e1 < kOrderErrorFloor || h0 == h1) return nan;
    return std::log(e0 / e1) / std::log(h0 / h1);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == 0) {
      rows[i].order_sigma = rows[i].order_u = nan;
      continue;
    }
    const LevelResult &p = rows[i - 1], &q = rows[i];
    rows[i].order_sigma = order(p.errors.E_sigma, q.errors.E_sigma, p.h, q.h);
    rows[i].order_u = order(p.errors.E_u, q.errors.E_u, p.h, q.h);
  }
}

std::string ErrorReport::to_csv() const {
  std::ostringstream out;
  out << "k,h,E_sigma,order_sigma,E_u,order_u\n";
  for (const auto& r : rows)
    out << k << ',' << sig4(r.h) << ',' << sig4(r.errors.E_sigma) << ',' << sig4(r.order_sigma) << ','
        << sig4(r.errors.E_u) << ',' << sig4(r.order_u) << '\n';
  return out.str();
}

nlohmann::json ErrorReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  const auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  for (const auto& r : rows)
    rows_j.push_back({{"n", r.n},
                      {"h", r.h},
                      {"nsteps", r.nsteps},
                      {"E_sigma", r.errors.E_sigma},
                      {"order_sigma", num(r.order_sigma)},
                      {"E_u", r.errors.E_u},
                      {"order_u", num(r.order_u)}});
  return {{"k", k}, {"regime", regime}, {"rows", rows_j}};
}

int transient_steps(int coarse_steps, double h0, double h, int k) {
  if (coarse_steps < 1 || !(h > 0) || !(h0 > 0)) throw InvalidArgument("transient_steps: invalid arguments");
  return static_cast<int>(std::ceil(coarse_steps * std::pow(h0 / h, 0.5 * (k + 2)) - 1e-9));
}

ErrorReport convergence_study(const ManufacturedCase& c, const StudyConfig& cfg) {
  if (cfg.levels.size() < 2) throw InvalidArgument("a convergence study needs at least two levels");
  if (cfg.regime != "steady" && cfg.regime != "harmonic" && cfg.regime != "transient")
    throw InvalidArgument("unknown regime '" + cfg.regime + "'");
  ErrorReport rep;
  rep.k = cfg.solver.k;
  rep.regime = cfg.regime;
  double h0 = 0;
  for (int n : cfg.levels) {
    const TetMesh mesh = structured_cube(n);
    LevelResult row;
    row.n = n;
    row.h = mesh.h_max();
    if (h0 == 0) h0 = row.h;
    if (cfg.regime == "steady") {
      row.errors = solve_steady(mesh, c, cfg.solver).errors;
    } else if (cfg.regime == "harmonic") {
      row.errors = solve_timeharmonic(mesh, c, cfg.solver, cfg.kappa).errors;
    } else {
      TransientConfig tc;
      tc.T = cfg.T;
      tc.nsteps = row.nsteps = transient_steps(cfg.coarse_steps, h0, row.h, cfg.solver.k);
      tc.init_mode = cfg.init_mode;
      tc.record_energy = false;
      row.errors = solve_transient(mesh, c, cfg.solver, tc).errors;
    }
    rep.rows.push_back(row);
  }
  rep.compute_orders();
  return rep;
}

}  // namespace hdgplus
