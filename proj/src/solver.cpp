#include "gpgrad/solver.hpp"

#include <algorithm>
#include <cmath>

#include "gpgrad/errors.hpp"

namespace gpgrad {

namespace {

struct SplitMix64 {
  std::uint64_t s;
  explicit SplitMix64(std::uint64_t seed) : s(seed) {}
  double symmetric_unit() {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return 2.0 * ((z >> 11) * 0x1.0p-53) - 1.0;
  }
};

LinearOperator linearized_operator(const FormSet& forms, const SpMat& Mu) {
  LinearOperator A;
  A.add_term(1.0, forms.S);
  if (forms.params.beta != 0.0) A.add_term(forms.params.beta, Mu);
  return A;
}

// All density-weighted matrices share the prototype pattern, so updates can
// work directly on the value arrays.
void require_same_pattern(const SpMat& a, const SpMat& b, const char* where) {
  if (a.nonZeros() != b.nonZeros())
    throw DimensionError(std::string(where) + ": weighted matrices disagree in pattern");
}

}  // namespace

void StepPolicy::validate() const {
  if (mode == Mode::fixed) {
    if (!(tau > 0.0 && tau < 2.0))
      throw PolicyError("step size tau must lie in (0, 2), got " + std::to_string(tau));
  } else {
    if (!(bracket_lo > 0.0) || !(bracket_hi < 2.0) || !(bracket_lo < bracket_hi))
      throw PolicyError("line-search bracket must satisfy 0 < lo < hi < 2");
    if (!(tau_tol > 0.0)) throw PolicyError("tau tolerance must be positive");
  }
}

Vec plan_solve(const LinearOperator& A, const Vec& b, const LinearSolvePlan& plan) {
  const Preconditioner p = plan.precond ? plan.precond : jacobi_preconditioner(A);
  return solve_spd(A, b, plan.opts, p);
}

double gamma_coefficient(const FormSet& forms, const State& u, const State& q) {
  const double denom = u.coeffs.dot(forms.M * q.coeffs);
  if (!(denom > 0.0)) throw Error("gamma_coefficient: (u, q)_L2 is not positive");
  return 1.0 / denom;
}

Descent descent_direction(const FormSet& forms, const State& u, const SpMat& Mu,
                          const LinearSolvePlan& lin) {
  const LinearOperator A = linearized_operator(forms, Mu);
  Vec q = plan_solve(A, forms.M * u.coeffs, lin);
  State qs(std::move(q), u.mesh);
  const double g = gamma_coefficient(forms, u, qs);
  State d(g * qs.coeffs - u.coeffs, u.mesh);
  return {std::move(d), std::move(qs), g};
}

Descent descent_direction(const FormSet& forms, const State& u, const LinearSolvePlan& lin) {
  return descent_direction(forms, u, assemble_weighted_mass(forms, u), lin);
}

double line_search_g(const QuarticCoeffs& c, double beta, double tau) {
  const double quad_num = c.zeta0 + 2.0 * c.zeta1 * tau + c.zeta2 * tau * tau;
  const double quad_den = 2.0 + 4.0 * c.eta1 * tau + 2.0 * c.eta2 * tau * tau;
  const double quart_num = c.xi0 + tau * (4.0 * c.xi1 + tau * (2.0 * c.xi2 + tau * (4.0 * c.xi3 + tau * c.xi4)));
  const double quart_den = 4.0 + tau * (16.0 * c.eta1 +
                           tau * (8.0 * c.eta2 + 16.0 * c.eta1 * c.eta1 +
                           tau * (16.0 * c.eta1 * c.eta2 + tau * 4.0 * c.eta2 * c.eta2)));
  return quad_num / quad_den + beta * quart_num / quart_den;
}

namespace {

// Analytic derivative of the line-search objective. Locating the stationary
// point through g' is immune to the sqrt(eps) resolution limit of pure
// value comparisons, which matters for gauge-equivariance at the 1e-9 level.
double line_search_g_prime(const QuarticCoeffs& c, double beta, double tau) {
  const double n1 = c.zeta0 + 2.0 * c.zeta1 * tau + c.zeta2 * tau * tau;
  const double n1p = 2.0 * c.zeta1 + 2.0 * c.zeta2 * tau;
  const double d1 = 2.0 + 4.0 * c.eta1 * tau + 2.0 * c.eta2 * tau * tau;
  const double d1p = 4.0 * c.eta1 + 4.0 * c.eta2 * tau;
  const double n2 = c.xi0 + tau * (4.0 * c.xi1 + tau * (2.0 * c.xi2 + tau * (4.0 * c.xi3 + tau * c.xi4)));
  const double n2p = 4.0 * c.xi1 + 4.0 * c.xi2 * tau + 12.0 * c.xi3 * tau * tau +
                     4.0 * c.xi4 * tau * tau * tau;
  const double q2 = 8.0 * c.eta2 + 16.0 * c.eta1 * c.eta1;
  const double d2 = 4.0 + tau * (16.0 * c.eta1 + tau * (q2 + tau * (16.0 * c.eta1 * c.eta2 +
                    tau * 4.0 * c.eta2 * c.eta2)));
  const double d2p = 16.0 * c.eta1 + 2.0 * q2 * tau + 48.0 * c.eta1 * c.eta2 * tau * tau +
                     16.0 * c.eta2 * c.eta2 * tau * tau * tau;
  return (n1p * d1 - n1 * d1p) / (d1 * d1) + beta * (n2p * d2 - n2 * d2p) / (d2 * d2);
}

}  // namespace

LineSearchResult minimize_line_search(const QuarticCoeffs& c, double beta,
                                      const StepPolicy& policy) {
  LineSearchResult out;
  const double lo = policy.bracket_lo;
  const double hi = policy.bracket_hi;
  if (c.eta2 <= 1e-28) {  // vanishing direction: g is constant
    out.tau = lo;
    out.value = line_search_g(c, beta, lo);
    out.stationary = true;
    return out;
  }
  auto f = [&](double t) { return line_search_g(c, beta, t); };

  // Brent: golden-section with parabolic interpolation when safe.
  const double cgold = 0.3819660112501051;
  double a = lo, b = hi;
  double x = a + cgold * (b - a), w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double xm = 0.5 * (a + b);
    const double tol1 = policy.tau_tol;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool golden = true;
    if (std::abs(e) > tol1) {
      const double r = (x - w) * (fx - fv);
      double qd = (x - v) * (fx - fw);
      double p = (x - v) * qd - (x - w) * r;
      qd = 2.0 * (qd - r);
      if (qd > 0.0) p = -p;
      qd = std::abs(qd);
      const double etemp = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * qd * etemp) && p > qd * (a - x) && p < qd * (b - x)) {
        d = p / qd;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (xm >= x) ? tol1 : -tol1;
        golden = false;
      }
    }
    if (golden) {
      e = (x >= xm) ? a - x : b - x;
      d = cgold * e;
    }
    const double u = (std::abs(d) >= tol1) ? x + d : x + ((d >= 0.0) ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; w = x; x = u;
      fv = fw; fw = fx; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; w = u; fv = fw; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  out.tau = x;
  out.value = fx;

  // Polish the interior minimizer as a root of g'. Value comparisons alone
  // resolve tau only to about sqrt(eps); bisection on the sign of the
  // analytic derivative pins it deterministically to machine precision.
  {
    auto fp = [&](double t) { return line_search_g_prime(c, beta, t); };
    double lb = x, ub = x;
    bool bracketed = false;
    for (double delta = std::max(1e-6, 64.0 * policy.tau_tol); !bracketed; delta *= 4.0) {
      lb = std::max(lo, x - delta);
      ub = std::min(hi, x + delta);
      bracketed = fp(lb) < 0.0 && fp(ub) > 0.0;
      if (lb == lo && ub == hi) break;
    }
    if (bracketed) {
      for (int it = 0; it < 100 && ub - lb > 1e-16 * std::max(1.0, std::abs(lb)); ++it) {
        const double mid = 0.5 * (lb + ub);
        if (fp(mid) < 0.0) lb = mid; else ub = mid;
      }
      const double refined = 0.5 * (lb + ub);
      const double fr = f(refined);
      if (fr <= out.value + 1e-13 * std::max(1.0, std::abs(out.value))) {
        out.tau = refined;
        out.value = fr;
      }
    }
  }

  // The minimizer must not exceed the bracket-end values.
  for (double t : {lo, hi}) {
    const double ft = f(t);
    if (ft < out.value) {
      out.value = ft;
      out.tau = t;
    }
  }
  return out;
}

namespace {

// Shared tail of the adaptive and H1 steps: forms uhat = u + tau d, tracks
// the exact identities, normalizes and updates the weighted mass matrix.
StepResult finish_step(const FormSet& forms, const State& u, const State& d, double tau,
                       double gamma_value, bool stationary, bool adaptive_identity,
                       const SpMat& Mu, const SpMat& Xud, const SpMat& Xdd,
                       const QuarticCoeffs& c, const SolverOptions& opts) {
  const double beta = forms.params.beta;
  const Vec& uv = u.coeffs;
  const Vec uhat = uv + tau * d.coeffs;

  require_same_pattern(Mu, Xud, "finish_step");
  require_same_pattern(Mu, Xdd, "finish_step");
  SpMat Muhat = Mu;
  {
    double* out = Muhat.valuePtr();
    const double* a = Mu.valuePtr();
    const double* b = Xud.valuePtr();
    const double* g = Xdd.valuePtr();
    const Index nnz = Muhat.nonZeros();
    for (Index i = 0; i < nnz; ++i) out[i] = a[i] + 2.0 * tau * b[i] + tau * tau * g[i];
  }

  const double mass_int2 = uhat.dot(forms.M * uhat);
  const double mass_int = std::sqrt(mass_int2);

  IterationRecord rec;
  rec.tau = tau;
  rec.gamma = gamma_value;
  rec.stationary = stationary;
  rec.mass_intermediate = mass_int;

  const double E_u = 0.5 * c.zeta0 + 0.25 * beta * c.xi0;
  const Vec S_uhat = forms.S * uhat;
  const Vec Muhat_uhat = Muhat * uhat;
  const double E_hat = 0.5 * uhat.dot(S_uhat) + 0.25 * beta * uhat.dot(Muhat_uhat);
  if (adaptive_identity) {
    const Vec w = tau * d.coeffs;
    const double density_sq =
        uhat.dot(Muhat_uhat) - 2.0 * uhat.dot(Mu * uhat) + uv.dot(Mu * uv);
    const double a_norm_sq = w.dot(forms.S * w) + beta * w.dot(Mu * w);
    const double predicted = -0.25 * beta * density_sq + (1.0 / tau - 0.5) * a_norm_sq;
    rec.energy_identity_gap = std::abs((E_u - E_hat) - predicted);
  } else {
    rec.energy_identity_gap = std::numeric_limits<double>::quiet_NaN();
  }
  rec.step_norm_R = tau * std::sqrt(std::max(0.0, c.zeta2));

  StepResult result;
  result.next = State(uhat / mass_int, u.mesh);
  result.Mu_next = std::move(Muhat);
  {
    double* vals = result.Mu_next.valuePtr();
    const double scale = 1.0 / mass_int2;
    for (Index i = 0; i < result.Mu_next.nonZeros(); ++i) vals[i] *= scale;
  }

  rec.mass_after = result.next.coeffs.dot(forms.M * result.next.coeffs);
  const Vec S_un = forms.S * result.next.coeffs;
  const Vec Mun_un = result.Mu_next * result.next.coeffs;
  rec.energy = 0.5 * result.next.coeffs.dot(S_un) + 0.25 * beta * result.next.coeffs.dot(Mun_un);

  // Eigenvalue residual of the new iterate (discrete L2 norm via a mass solve).
  {
    const Vec Au = S_un + beta * Mun_un;
    const double lambda = result.next.coeffs.dot(Au);
    const Vec r = Au - lambda * (forms.M * result.next.coeffs);
    LinearOperator Mop;
    Mop.add_term(1.0, forms.M);
    SolveOptions mopts;
    mopts.tol = 1e-12;
    Vec y = solve_spd(Mop, r, mopts, jacobi_preconditioner(Mop));
    rec.residual = std::sqrt(std::max(0.0, r.dot(y)));
  }

  if (opts.throw_on_energy_increase && rec.energy > E_u + 1e-12)
    throw DissipationError("gradient step increased the energy beyond 1e-12");

  result.record = rec;
  return result;
}

}  // namespace

StepResult gradient_step(const FormSet& forms, const State& u, const StepPolicy& policy,
                         const SpMat& Mu, const SolverOptions& opts) {
  policy.validate();
  Descent dsc = descent_direction(forms, u, Mu, opts.lin);
  auto [Xud, Xdd] = assemble_xi_matrices(forms, u, dsc.d);
  const QuarticCoeffs c = quartic_integrals(forms, u, dsc.d, Mu, Xud, Xdd);

  double tau = policy.tau;
  bool stationary = false;
  if (policy.mode == StepPolicy::Mode::adaptive) {
    const LineSearchResult ls = minimize_line_search(c, forms.params.beta, policy);
    tau = ls.tau;
    stationary = ls.stationary;
  }
  return finish_step(forms, u, dsc.d, tau, dsc.gamma, stationary, /*adaptive_identity=*/true,
                     Mu, Xud, Xdd, c, opts);
}

StepResult h1_gradient_step(const FormSet& forms, const State& u, const StepPolicy& policy,
                            const SpMat& Mu, const DirectFactor& Xfactor,
                            const SolverOptions& opts) {
  policy.validate();
  const double beta = forms.params.beta;
  // Sobolev gradient in the H1 metric and its tangent-space projection.
  Vec Eprime = forms.S * u.coeffs;
  if (beta != 0.0) Eprime.noalias() += beta * (Mu * u.coeffs);
  const Vec g = Xfactor.solve(Eprime);
  const Vec z = Xfactor.solve(forms.M * u.coeffs);
  const Vec Mu_vec = forms.M * u.coeffs;
  const double uz = Mu_vec.dot(z);
  if (std::abs(uz) < 1e-300) throw Error("h1_gradient_step: (u, z)_L2 degenerate");
  const Vec pg = g - (Mu_vec.dot(g) / uz) * z;
  State d(-pg, u.mesh);

  auto [Xud, Xdd] = assemble_xi_matrices(forms, u, d);
  const QuarticCoeffs c = quartic_integrals(forms, u, d, Mu, Xud, Xdd);

  double tau = policy.tau;
  bool stationary = false;
  if (policy.mode == StepPolicy::Mode::adaptive) {
    const LineSearchResult ls = minimize_line_search(c, beta, policy);
    tau = ls.tau;
    stationary = ls.stationary;
  }
  StepResult result = finish_step(forms, u, d, tau, std::numeric_limits<double>::quiet_NaN(),
                                  stationary, /*adaptive_identity=*/false, Mu, Xud, Xdd, c, opts);
  return result;
}

GpResidual gp_residual(const FormSet& forms, const State& u, const SpMat& Mu,
                       const LinearSolvePlan& lin) {
  GpResidual out;
  const double beta = forms.params.beta;
  Vec Au = forms.S * u.coeffs;
  if (beta != 0.0) Au.noalias() += beta * (Mu * u.coeffs);
  out.lambda = u.coeffs.dot(Au);
  const Vec r = Au - out.lambda * (forms.M * u.coeffs);
  LinearOperator Mop;
  Mop.add_term(1.0, forms.M);
  SolveOptions mopts = lin.opts;
  mopts.tol = std::min(mopts.tol, 1e-12);
  const Vec y = solve_spd(Mop, r, mopts, jacobi_preconditioner(Mop));
  out.res_l2 = std::sqrt(std::max(0.0, r.dot(y)));
  for (Index k = 0; k + 1 < y.size(); k += 2)
    out.res_node_max = std::max(out.res_node_max, std::hypot(y[k], y[k + 1]));
  return out;
}

GpResidual gp_residual(const FormSet& forms, const State& u, const LinearSolvePlan& lin) {
  return gp_residual(forms, u, assemble_weighted_mass(forms, u), lin);
}

Trace run(const FormSet& forms, const State& u0, const StepPolicy& policy, const StopRule& stop,
          const std::optional<Reference>& reference, const SolverOptions& opts) {
  policy.validate();
  Trace trace;
  State u = normalized(forms, u0);
  SpMat Mu = assemble_weighted_mass(forms, u);

  SolverOptions local = opts;
  std::shared_ptr<DirectFactor> factor;
  auto rebuild_precond = [&](const SpMat& Mu_now) {
    if (opts.precond == SolverOptions::Precond::jacobi ||
        opts.metric == SolverOptions::Metric::h1)
      return;
    const SpMat A = linearized_operator(forms, Mu_now).materialize();
    if (opts.precond == SolverOptions::Precond::direct) {
      factor = std::make_shared<DirectFactor>(A);
      local.lin.precond = factor->as_preconditioner();
    } else {
      local.lin.precond = ic0_preconditioner(A);
    }
  };
  rebuild_precond(Mu);

  std::shared_ptr<DirectFactor> Xfactor;
  if (opts.metric == SolverOptions::Metric::h1)
    Xfactor = std::make_shared<DirectFactor>(forms.X1);

  if (opts.retain_states) trace.states.push_back(u);

  // A start that already satisfies the residual criterion stops immediately.
  {
    const GpResidual r0 = gp_residual(forms, u, Mu, local.lin);
    if (r0.res_l2 <= stop.residual_tol) {
      IterationRecord rec;
      rec.n = 0;
      rec.energy = 0.5 * u.coeffs.dot(forms.S * u.coeffs) +
                   0.25 * forms.params.beta * u.coeffs.dot(Mu * u.coeffs);
      rec.residual = r0.res_l2;
      rec.mass_after = 1.0;
      rec.mass_intermediate = 1.0;
      rec.gamma = r0.lambda;
      if (reference) rec.energy_error = rec.energy - reference->energy;
      trace.records.push_back(rec);
      trace.final_state = u;
      trace.final_lambda = r0.lambda;
      trace.stop_reason = StopReason::tol_reached;
      return trace;
    }
  }

  double E_prev = 0.5 * u.coeffs.dot(forms.S * u.coeffs) +
                  0.25 * forms.params.beta * u.coeffs.dot(Mu * u.coeffs);
  int increase_streak = 0;
  double E_best = E_prev;
  int since_best = 0;
  bool increase_since_best = false;

  for (int n = 0; n < stop.max_iters; ++n) {
    if (n > 0 && opts.precond != SolverOptions::Precond::jacobi &&
        n % std::max(1, opts.precond_refresh) == 0)
      rebuild_precond(Mu);
    if (n > 0 && n % std::max(1, opts.mu_refresh) == 0) Mu = assemble_weighted_mass(forms, u);

    StepResult sr = (opts.metric == SolverOptions::Metric::adaptive)
                        ? gradient_step(forms, u, policy, Mu, local)
                        : h1_gradient_step(forms, u, policy, Mu, *Xfactor, local);
    sr.record.n = n;
    if (reference) {
      sr.record.energy_error = sr.record.energy - reference->energy;
      if (reference->state) {
        const PhaseAlignment pa = phase_align(forms, sr.next, *reference->state, AlignNorm::H1);
        sr.record.h1_error = pa.err;
        sr.record.h1_omega = pa.omega;
      }
    }
    u = std::move(sr.next);
    Mu = std::move(sr.Mu_next);
    if (opts.retain_states) trace.states.push_back(u);
    trace.records.push_back(sr.record);

    const double E = sr.record.energy;
    if (E > E_prev + 1e-12) {
      ++increase_streak;
      increase_since_best = true;
    } else {
      increase_streak = 0;
    }
    if (E < E_best) {
      E_best = E;
      since_best = 0;
      increase_since_best = false;
    } else {
      ++since_best;
    }
    // Ten consecutive increases, or a long stretch of bouncing without any
    // new best energy, both indicate a misconfigured (non-dissipating) run.
    if (increase_streak >= 10 || (since_best >= 50 && increase_since_best)) {
      trace.stop_reason = StopReason::diverged;
      break;
    }

    bool stop_now = false;
    if (reference && std::abs(E - reference->energy) < stop.ref_energy_tol) stop_now = true;
    if (!stop_now && std::abs(E_prev - E) < stop.energy_tol &&
        sr.record.residual < stop.residual_tol)
      stop_now = true;
    E_prev = E;
    if (stop_now) {
      trace.stop_reason = StopReason::tol_reached;
      break;
    }
    if (n == stop.max_iters - 1) trace.stop_reason = StopReason::max_iters;
  }

  trace.final_state = u;
  trace.final_lambda = gp_residual(forms, u, Mu, local.lin).lambda;
  return trace;
}

State psi_value(const FormSet& forms, const State& v, const LinearSolvePlan& lin) {
  const SpMat Mv = assemble_weighted_mass(forms, v);
  const LinearOperator A = linearized_operator(forms, Mv);
  return State(plan_solve(A, forms.M * v.coeffs, lin), v.mesh);
}

State psi_tau_value(const FormSet& forms, const State& v, double tau,
                    const LinearSolvePlan& lin) {
  const State psi = psi_value(forms, v, lin);
  const double denom = v.coeffs.dot(forms.M * psi.coeffs);
  if (!(denom > 0.0)) throw Error("psi_tau_value: (v, psi)_L2 is not positive");
  return State((1.0 - tau) * v.coeffs + (tau / denom) * psi.coeffs, v.mesh);
}

std::complex<double> theta_value(const FormSet& forms, const State& v, const State& u_ref,
                                 double tau, const LinearSolvePlan& lin) {
  const State psi_tau = psi_tau_value(forms, v, tau, lin);
  return std::conj(complex_pairing(psi_tau.coeffs, u_ref.coeffs, forms.M));
}

State auxiliary_step(const FormSet& forms, const State& v, const State& u_ref, double tau,
                     const LinearSolvePlan& lin) {
  const State psi_tau = psi_tau_value(forms, v, tau, lin);
  const double m = std::sqrt(psi_tau.coeffs.dot(forms.M * psi_tau.coeffs));
  const std::complex<double> theta =
      std::conj(complex_pairing(psi_tau.coeffs, u_ref.coeffs, forms.M));
  const double mag = std::abs(theta);
  if (mag <= 1e-14) throw PhaseError("auxiliary_step: phase factor is degenerate");
  return scale_complex(State(psi_tau.coeffs / m, v.mesh), theta / mag);
}

PhaseAlignment phase_align(const FormSet& forms, const State& a, const State& b,
                           AlignNorm norm) {
  const SpMat& B = (norm == AlignNorm::L2) ? forms.M : forms.X1;
  if (b.coeffs.size() == 0 || b.coeffs.isZero(0.0))
    throw DimensionError("phase_align: second argument must be nonzero");
  const std::complex<double> c = complex_pairing(a.coeffs, b.coeffs, B);
  const double na2 = a.coeffs.dot(B * a.coeffs);
  const double nb2 = b.coeffs.dot(B * b.coeffs);
  PhaseAlignment out;
  const double rho = std::abs(c);
  // A vanishing complex pairing leaves the objective flat in omega.
  const double scale = std::sqrt(std::max(na2, 0.0) * std::max(nb2, 0.0));
  out.omega = (rho > 1e-14 * scale) ? std::arg(c) : 0.0;
  out.err = std::sqrt(std::max(0.0, na2 + nb2 - 2.0 * rho));
  return out;
}

std::vector<double> rates_from_errors(const std::vector<double>& errors) {
  std::vector<double> rates;
  for (size_t i = 0; i + 1 < errors.size(); ++i) {
    if (!(errors[i] > 1e-14) || !std::isfinite(errors[i + 1])) break;
    rates.push_back(errors[i + 1] / errors[i]);
  }
  return rates;
}

std::vector<double> contraction_rates(const FormSet& forms, const Trace& trace,
                                      const State& u_ref) {
  if (trace.states.empty())
    throw Error("contraction_rates: trace does not retain states (enable retain_states)");
  std::vector<double> errors;
  errors.reserve(trace.states.size());
  for (const State& s : trace.states)
    errors.push_back(phase_align(forms, s, u_ref, AlignNorm::H1).err);
  return rates_from_errors(errors);
}

State psi_prime_apply(const FormSet& forms, const State& v, const State& h,
                      const LinearSolvePlan& lin) {
  const SpMat Mv = assemble_weighted_mass(forms, v);
  const LinearOperator A = linearized_operator(forms, Mv);
  const Vec psi = plan_solve(A, forms.M * v.coeffs, lin);
  const SpMat Xvh = assemble_xi_matrices(forms, v, h).first;
  const Vec rhs = forms.M * h.coeffs - 2.0 * forms.params.beta * (Xvh * psi);
  return State(plan_solve(A, rhs, lin), v.mesh);
}

State psi_tau_prime_at_ground(const FormSet& forms, const State& u, double lambda,
                              const State& h, double tau, const LinearSolvePlan& lin) {
  const double beta = forms.params.beta;
  const SpMat Mu = assemble_weighted_mass(forms, u);
  const LinearOperator A = linearized_operator(forms, Mu);
  const SpMat Xuh = assemble_xi_matrices(forms, u, h).first;
  const Vec nu_h = Xuh * u.coeffs;  // I(Re(u conj(h)) u)
  const double scal = h.coeffs.dot(forms.M * u.coeffs) - (beta / lambda) * nu_h.dot(u.coeffs);
  const Vec rhs = forms.M * h.coeffs - (2.0 * beta / lambda) * nu_h;
  const Vec t3 = tau * lambda * plan_solve(A, rhs, lin);
  return State((1.0 - tau) * h.coeffs - 2.0 * tau * scal * u.coeffs + t3, u.mesh);
}

std::complex<double> theta_prime_at_ground(const FormSet& forms, const State& u, double lambda,
                                           const State& h, double tau,
                                           const LinearSolvePlan& lin) {
  const State dpsi = psi_tau_prime_at_ground(forms, u, lambda, h, tau, lin);
  return std::conj(complex_pairing(dpsi.coeffs, u.coeffs, forms.M));
}

void CheckReport::add(std::string name, double defect, double tol) {
  Item item{std::move(name), defect, tol, defect <= tol};
  all_pass = all_pass && item.pass;
  items.push_back(std::move(item));
}

CheckReport run_invariant_battery(const FormSet& forms, const State& u0,
                                  const StepPolicy& policy, std::uint64_t seed,
                                  const SolverOptions& opts) {
  CheckReport report;
  const double beta = forms.params.beta;
  State u = normalized(forms, u0);

  // Five steps with per-step bookkeeping.
  {
    SpMat Mu = assemble_weighted_mass(forms, u);
    State v = u;
    double mass_defect = 0.0, tangency = 0.0, identity = 0.0, pythagoras = 0.0;
    for (int n = 0; n < 5; ++n) {
      Descent dsc = descent_direction(forms, v, Mu, opts.lin);
      tangency = std::max(tangency, std::abs(dsc.d.coeffs.dot(forms.M * v.coeffs)));
      StepResult sr = gradient_step(forms, v, policy, Mu, opts);
      mass_defect = std::max(mass_defect, std::abs(sr.record.mass_after - 1.0));
      identity = std::max(identity, sr.record.energy_identity_gap /
                                        std::max(1.0, std::abs(sr.record.energy)));
      const double mi2 = sr.record.mass_intermediate * sr.record.mass_intermediate;
      const Vec diff = sr.record.tau * dsc.d.coeffs;
      pythagoras = std::max(pythagoras, std::abs(mi2 - 1.0 - diff.dot(forms.M * diff)));
      v = sr.next;
      Mu = std::move(sr.Mu_next);
    }
    report.add("mass_normalization", mass_defect, 1e-12);
    report.add("tangency", tangency, 1e-10);
    report.add("energy_identity", identity, 1e-11);
    report.add("intermediate_mass_pythagoras", pythagoras, 1e-12);
  }

  // Gauge equivariance over ten steps with a seeded random phase.
  {
    SplitMix64 rng(seed);
    const double omega = 3.141592653589793 * rng.symmetric_unit();
    State a = u;
    State b = gauge_rotate(u, omega);
    SpMat Ma = assemble_weighted_mass(forms, a);
    SpMat Mb = assemble_weighted_mass(forms, b);
    double defect = 0.0;
    for (int n = 0; n < 10; ++n) {
      StepResult sa = gradient_step(forms, a, policy, Ma, opts);
      StepResult sb = gradient_step(forms, b, policy, Mb, opts);
      a = sa.next;
      b = sb.next;
      Ma = std::move(sa.Mu_next);
      Mb = std::move(sb.Mu_next);
      const Vec diff = gauge_rotate(a, omega).coeffs - b.coeffs;
      defect = std::max(defect, std::sqrt(diff.dot(forms.M * diff)));
    }
    report.add("gauge_equivariance", defect, 1e-9);
  }

  // Auxiliary relation against a converged reference over twenty steps.
  {
    StopRule stop;
    stop.residual_tol = 1e-9;
    stop.energy_tol = std::numeric_limits<double>::infinity();
    stop.max_iters = 20000;
    SolverOptions ref_opts = opts;
    Trace ref = run(forms, u, StepPolicy::adaptive(), stop, std::nullopt, ref_opts);
    const State& uref = ref.final_state;
    const double tau = 1.0;
    State plain = u;
    State aux = u;
    SpMat Mp = assemble_weighted_mass(forms, plain);
    double defect = 0.0;
    for (int n = 0; n < 20; ++n) {
      const std::complex<double> theta = theta_value(forms, plain, uref, tau, opts.lin);
      StepResult sp = gradient_step(forms, plain, StepPolicy::fixed(tau), Mp, opts);
      aux = auxiliary_step(forms, aux, uref, tau, opts.lin);
      plain = sp.next;
      Mp = std::move(sp.Mu_next);
      const State expected = scale_complex(plain, theta / std::abs(theta));
      const Vec diff = aux.coeffs - expected.coeffs;
      defect = std::max(defect, std::sqrt(diff.dot(forms.M * diff)));
    }
    report.add("auxiliary_phase_relation", defect, 1e-10);
  }

  // Line-search rational function against direct energy evaluation.
  {
    Descent dsc = descent_direction(forms, u, opts.lin);
    const QuarticCoeffs c = quartic_integrals(forms, u, dsc.d);
    double defect = 0.0;
    for (double tau : {0.1, 0.5, 1.0, 1.7}) {
      const State cand(u.coeffs + tau * dsc.d.coeffs, u.mesh);
      const double direct = energy(forms, normalized(forms, cand));
      const double rational = line_search_g(c, beta, tau);
      defect = std::max(defect, std::abs(direct - rational) / std::max(1.0, std::abs(direct)));
    }
    report.add("line_search_oracle", defect, 1e-11);
  }

  return report;
}

}  // namespace gpgrad
