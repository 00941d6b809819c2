#pragma once

#include <vector>

#include "gpgrad/forms.hpp"
#include "gpgrad/linalg.hpp"
#include "gpgrad/solver.hpp"

namespace gpgrad {

struct SpectralOptions {
  int k_linearized = 25;  // pencil (S + beta M_u, M)
  int k_hessian = 6;
  int k_weighted = 5;
  double eig_tol = 1e-9;
  int eig_max_iters = 500;
  double lambda_match_rtol = 1e-6;
  LinearSolvePlan lin;
  std::uint64_t probe_seed = 0x5bd1e995u;
};

/// Second derivative of the energy at u as an operator:
/// E''(u) = S + beta M_u + 2 beta N_u. Owns its assembled matrices.
LinearOperator hessian_operator(const FormSet& forms, const State& u);

struct EigenList {
  std::vector<double> values;
  Mat vectors;  // columns, M-normalized
};

/// k smallest eigenpairs of E''(u) x = theta M x on the M-orthogonal
/// complement of u.
EigenList hessian_spectrum(const FormSet& forms, const State& u, int k,
                           const SpectralOptions& opts = {});

struct LinearizedSpectrum {
  std::vector<double> values;
  int lambda_index = -1;  // 1-based position of lambda, -1 when not found
  double lambda = 0.0;
};

/// k smallest eigenvalues of the u-linearized operator pencil
/// (S + beta M_u, M), unconstrained, plus the position of the ground state
/// eigenvalue inside that list.
LinearizedSpectrum a_u_spectrum(const FormSet& forms, const State& u, int k,
                                const SpectralOptions& opts = {});

struct WeightedEvp {
  std::vector<double> mu;  // sorted by decreasing magnitude
  Mat vectors;             // columns, M-normalized
  double lambda = 0.0;
};

/// Largest-magnitude eigenvalues of the weighted eigenvalue problem
///   (lambda v - 2 beta Re(u conj(v)) u, w)_L2 = mu <A_{|u|} v, w>
/// on the M-orthogonal complement of {u, iu}. Solved through the
/// equivalent definite pencils (E''-lambda M, A_u) and (A_u + lambda M
/// - 2 beta N_u, A_u), probing both signs of mu.
WeightedEvp weighted_evp(const FormSet& forms, const State& u, int k,
                         const SpectralOptions& opts = {});

/// Smallest eigenvalue of the beta-free pencil (S, M).
double delta1(const FormSet& forms, const SpectralOptions& opts = {});

/// Contraction constant max_i |(1 - tau) + tau mu_i|.
double rho_star(const std::vector<double>& mu_list, double tau);

struct TauLimits {
  double tau_pos = 0.0;  // 1 + (l2 - l1)/(l2 + l1), applies when mu1 > 0
  double tau_neg = 0.0;  // 1 + d1/(2 l1 + d1), applies when mu1 < 0
  int active_sign = 0;   // sign of the largest-magnitude mu
};

TauLimits tau_limits(double lambda1, double lambda2, double delta1_value, double mu1);

struct SpectralReport {
  double lambda = 0.0;
  double res_l2 = 0.0;

  std::vector<double> a_u_eigs;
  int lambda_index_in_a_u = -1;

  std::vector<double> hess_eigs;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double first_vector_alignment = 0.0;  // |<v1, iu>_M|

  std::vector<double> mu_list;
  double delta1 = 0.0;
  double rho_star_tau1 = 0.0;
  TauLimits tau_range;

  bool mu_upper_ok = false;
  bool mu_lower_ok = false;
  bool hess_lambda1_matches = false;
  bool first_vector_aligned = false;
  bool coercivity_ok = false;
  double coercivity_margin = 0.0;  // min over probes of lhs - rhs
};

SpectralReport compute_spectral_report(const FormSet& forms, const State& u,
                                       const SpectralOptions& opts = {});

struct CertifiedSolve {
  Trace trace;
  int kicks = 0;
  bool certified = false;
};

/// Residual-based stopping can halt on the intermediate plateau near an
/// excited state (a saddle, where the gradient also nearly vanishes). This
/// wrapper re-checks second-order optimality through the constrained second
/// derivative: lambda_1 must coincide with the Rayleigh eigenvalue at a
/// minimizer. A saddle verdict kicks the iterate along the negative-curvature
/// eigenvector and resumes, up to max_kicks times.
CertifiedSolve solve_ground_state(const FormSet& forms, const State& u0,
                                  const StepPolicy& policy, const StopRule& stop,
                                  const SolverOptions& opts = {}, int max_kicks = 8,
                                  double kick_size = 1e-2);

}  // namespace gpgrad
