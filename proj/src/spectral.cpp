#include "gpgrad/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

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

EigOptions eig_options(const SpectralOptions& opts, Preconditioner precond) {
  EigOptions e;
  e.tol = opts.eig_tol;
  e.max_iters = opts.eig_max_iters;
  e.precond = std::move(precond);
  return e;
}

void m_normalize_columns(Mat& V, const SpMat& M) {
  for (Index j = 0; j < V.cols(); ++j) {
    const double nrm = std::sqrt(V.col(j).dot(M * V.col(j)));
    if (nrm > 0.0) V.col(j) /= nrm;
  }
}

}  // namespace

LinearOperator hessian_operator(const FormSet& forms, const State& u) {
  LinearOperator H;
  H.add_term(1.0, forms.S);
  const double beta = forms.params.beta;
  if (beta != 0.0) {
    H.add_owned(beta, assemble_weighted_mass(forms, u));
    H.add_owned(2.0 * beta, assemble_projector_term(forms, u));
  }
  return H;
}

EigenList hessian_spectrum(const FormSet& forms, const State& u, int k,
                           const SpectralOptions& opts) {
  const LinearOperator H = hessian_operator(forms, u);
  LinearOperator Mop;
  Mop.add_term(1.0, forms.M);
  const ConstraintSet constraints({u.coeffs}, forms.M);
  const DirectFactor Hfac(H.materialize());
  const EigResult r =
      smallest_eigenpairs(H, Mop, k, constraints, eig_options(opts, Hfac.as_preconditioner()));
  EigenList out;
  out.values = r.values;
  out.vectors = r.vectors;
  m_normalize_columns(out.vectors, forms.M);
  return out;
}

LinearizedSpectrum a_u_spectrum(const FormSet& forms, const State& u, int k,
                                const SpectralOptions& opts) {
  const SpMat Mu = assemble_weighted_mass(forms, u);
  LinearOperator A;
  A.add_term(1.0, forms.S);
  if (forms.params.beta != 0.0) A.add_term(forms.params.beta, Mu);
  LinearOperator Mop;
  Mop.add_term(1.0, forms.M);
  const DirectFactor Afac(A.materialize());
  // The operator is complex-linear, so every eigenvalue of the real-DOF
  // pencil appears twice (v and iv span the same complex line). Solve for 2k
  // real pairs and keep every second value to report complex multiplicities.
  const EigResult r = smallest_eigenpairs(A, Mop, 2 * k, ConstraintSet(),
                                          eig_options(opts, Afac.as_preconditioner()));
  LinearizedSpectrum out;
  for (size_t i = 0; i + 1 < r.values.size(); i += 2) out.values.push_back(r.values[i]);
  out.lambda = gp_residual(forms, u, Mu, opts.lin).lambda;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < out.values.size(); ++i) {
    const double gap = std::abs(out.values[i] - out.lambda);
    if (gap <= opts.lambda_match_rtol * std::abs(out.lambda) && gap < best) {
      best = gap;
      out.lambda_index = static_cast<int>(i) + 1;
    }
  }
  return out;
}

WeightedEvp weighted_evp(const FormSet& forms, const State& u, int k,
                         const SpectralOptions& opts) {
  const double beta = forms.params.beta;
  const SpMat Mu = assemble_weighted_mass(forms, u);
  const SpMat Nu = assemble_projector_term(forms, u);
  const double lambda = gp_residual(forms, u, Mu, opts.lin).lambda;

  LinearOperator Au;
  Au.add_term(1.0, forms.S);
  if (beta != 0.0) Au.add_term(beta, Mu);

  // sigma = 1 - mu: pencil (E''(u) - lambda M, A_u), positive definite on the
  // admissible subspace by local quasi-uniqueness.
  LinearOperator Hshift;
  Hshift.add_term(1.0, forms.S);
  if (beta != 0.0) {
    Hshift.add_term(beta, Mu);
    Hshift.add_term(2.0 * beta, Nu);
  }
  Hshift.add_term(-lambda, forms.M);

  // sigma' = 1 + mu: pencil (A_u + lambda M - 2 beta N_u, A_u).
  LinearOperator Hplus;
  Hplus.add_term(1.0, forms.S);
  if (beta != 0.0) {
    Hplus.add_term(beta, Mu);
    Hplus.add_term(-2.0 * beta, Nu);
  }
  Hplus.add_term(lambda, forms.M);

  const ConstraintSet constraints({u.coeffs, times_i_vec(u.coeffs)}, forms.M);
  const DirectFactor Aufac(Au.materialize());

  const Index n = forms.M.rows();
  const Index space_dim = n - constraints.count();
  const int keff = static_cast<int>(std::min<Index>(k, space_dim));

  auto solve_end = [&](const LinearOperator& Aop) {
    // The shifted operators are indefinite on the full space, so the inner
    // preconditioning solve is confined to the constraint complement.
    Preconditioner inner = Aufac.as_preconditioner();
    Preconditioner pre = inexact_solve_preconditioner(Aop, 1e-2, 200, inner,
                                                      constraints.projector());
    return smallest_eigenpairs(Aop, Au, keff, constraints, eig_options(opts, std::move(pre)));
  };

  const EigResult pos = solve_end(Hshift);   // sigma ascending -> mu descending
  const EigResult neg = solve_end(Hplus);    // sigma' ascending -> mu ascending

  struct Candidate {
    double mu;
    Vec vector;
  };
  std::vector<Candidate> cands;
  for (size_t i = 0; i < pos.values.size(); ++i)
    cands.push_back({1.0 - pos.values[i], pos.vectors.col(static_cast<Index>(i))});
  for (size_t i = 0; i < neg.values.size(); ++i) {
    Candidate c{neg.values[i] - 1.0, neg.vectors.col(static_cast<Index>(i))};
    // Both ends can see the same pair on small problems; vectors from the two
    // sweeps are A_u-orthonormal within each sweep, so a large cross product
    // marks a duplicate.
    bool dup = false;
    for (const Candidate& other : cands) {
      if (std::abs(c.vector.dot(Au * other.vector)) > 0.5) {
        dup = true;
        break;
      }
    }
    if (!dup) cands.push_back(std::move(c));
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return std::abs(a.mu) > std::abs(b.mu);
                   });
  if (cands.size() > static_cast<size_t>(keff)) cands.resize(static_cast<size_t>(keff));

  WeightedEvp out;
  out.lambda = lambda;
  out.vectors.resize(n, static_cast<Index>(cands.size()));
  for (size_t i = 0; i < cands.size(); ++i) {
    out.mu.push_back(cands[i].mu);
    out.vectors.col(static_cast<Index>(i)) = cands[i].vector;
  }
  m_normalize_columns(out.vectors, forms.M);
  return out;
}

double delta1(const FormSet& forms, const SpectralOptions& opts) {
  LinearOperator S;
  S.add_term(1.0, forms.S);
  LinearOperator Mop;
  Mop.add_term(1.0, forms.M);
  const DirectFactor Sfac(forms.S);
  const EigResult r =
      smallest_eigenpairs(S, Mop, 1, ConstraintSet(), eig_options(opts, Sfac.as_preconditioner()));
  return r.values.front();
}

double rho_star(const std::vector<double>& mu_list, double tau) {
  double worst = std::abs(1.0 - tau);
  for (double mu : mu_list) worst = std::max(worst, std::abs((1.0 - tau) + tau * mu));
  return worst;
}

TauLimits tau_limits(double lambda1, double lambda2, double delta1_value, double mu1) {
  TauLimits out;
  out.tau_pos = 1.0 + (lambda2 - lambda1) / (lambda2 + lambda1);
  out.tau_neg = 1.0 + delta1_value / (2.0 * lambda1 + delta1_value);
  out.active_sign = (mu1 > 0.0) ? 1 : (mu1 < 0.0 ? -1 : 0);
  return out;
}

CertifiedSolve solve_ground_state(const FormSet& forms, const State& u0,
                                  const StepPolicy& policy, const StopRule& stop,
                                  const SolverOptions& opts, int max_kicks,
                                  double kick_size) {
  CertifiedSolve out;
  State u = normalized(forms, u0);
  int offset = 0;
  for (int round = 0; round <= max_kicks; ++round) {
    Trace t = run(forms, u, policy, stop, std::nullopt, opts);
    for (IterationRecord rec : t.records) {
      rec.n += offset;
      out.trace.records.push_back(rec);
    }
    offset = static_cast<int>(out.trace.records.size());
    if (opts.retain_states) {
      const size_t skip = out.trace.states.empty() ? 0 : 1;
      out.trace.states.insert(out.trace.states.end(), t.states.begin() + skip, t.states.end());
    }
    out.trace.final_state = t.final_state;
    out.trace.final_lambda = t.final_lambda;
    out.trace.stop_reason = t.stop_reason;
    if (t.stop_reason != StopReason::tol_reached) return out;

    SpectralOptions sopts;
    sopts.lin = opts.lin;
    const EigenList hess = hessian_spectrum(forms, t.final_state, 1, sopts);
    const double lambda = t.final_lambda;
    if (hess.values.front() >= lambda - 1e-6 * std::max(1.0, std::abs(lambda))) {
      out.certified = true;
      return out;
    }
    // Saddle: leave along the direction of negative constrained curvature.
    u = normalized(forms, State(t.final_state.coeffs + kick_size * hess.vectors.col(0),
                                t.final_state.mesh));
    ++out.kicks;
  }
  return out;
}

SpectralReport compute_spectral_report(const FormSet& forms, const State& u,
                                       const SpectralOptions& opts) {
  SpectralReport rep;
  const SpMat Mu = assemble_weighted_mass(forms, u);
  const GpResidual gr = gp_residual(forms, u, Mu, opts.lin);
  rep.lambda = gr.lambda;
  rep.res_l2 = gr.res_l2;

  {
    const LinearizedSpectrum sp = a_u_spectrum(forms, u, opts.k_linearized, opts);
    rep.a_u_eigs = sp.values;
    rep.lambda_index_in_a_u = sp.lambda_index;
  }

  const EigenList hess = hessian_spectrum(forms, u, opts.k_hessian, opts);
  rep.hess_eigs = hess.values;
  rep.lambda1 = hess.values.at(0);
  rep.lambda2 = hess.values.at(1);
  {
    const Vec iu = times_i_vec(u.coeffs);
    rep.first_vector_alignment = std::abs(hess.vectors.col(0).dot(forms.M * iu));
  }

  const WeightedEvp wevp = weighted_evp(forms, u, opts.k_weighted, opts);
  rep.mu_list = wevp.mu;
  rep.delta1 = delta1(forms, opts);
  rep.rho_star_tau1 = rho_star(rep.mu_list, 1.0);
  rep.tau_range = tau_limits(rep.lambda1, rep.lambda2, rep.delta1,
                             rep.mu_list.empty() ? 0.0 : rep.mu_list.front());

  const double slack = 1e-7;
  const double upper = rep.lambda1 / rep.lambda2;
  const double lower = -rep.lambda1 / (rep.lambda1 + rep.delta1);
  rep.mu_upper_ok = true;
  rep.mu_lower_ok = true;
  for (double mu : rep.mu_list) {
    rep.mu_upper_ok = rep.mu_upper_ok && mu <= upper + slack;
    rep.mu_lower_ok = rep.mu_lower_ok && mu >= lower - slack;
  }
  rep.hess_lambda1_matches = std::abs(rep.lambda1 - rep.lambda) <= 1e-7 * std::abs(rep.lambda);
  rep.first_vector_aligned = rep.first_vector_alignment >= 1.0 - 1e-7;

  // Coercivity of E''(u) - lambda I on the doubly tangent space, probed on
  // random M-normalized directions.
  {
    const LinearOperator H = hessian_operator(forms, u);
    const ConstraintSet tangent({u.coeffs, times_i_vec(u.coeffs)}, forms.M);
    const double factor = 0.5 * std::min(1.0, rep.lambda2 / rep.lambda1 - 1.0);
    SplitMix64 rng(opts.probe_seed);
    double min_margin = std::numeric_limits<double>::infinity();
    const Index n = forms.M.rows();
    for (int probe = 0; probe < 50; ++probe) {
      Vec w(n);
      for (Index i = 0; i < n; ++i) w[i] = rng.symmetric_unit();
      tangent.project(w);
      const double nrm = std::sqrt(w.dot(forms.M * w));
      if (!(nrm > 0.0)) continue;
      w /= nrm;
      const double lhs = w.dot(H.apply(w)) - rep.lambda * w.dot(forms.M * w);
      const double rhs = factor * w.dot(forms.S * w);
      min_margin = std::min(min_margin, lhs - rhs);
    }
    rep.coercivity_margin = min_margin;
    rep.coercivity_ok = min_margin >= -1e-8;
  }

  return rep;
}

}  // namespace gpgrad
