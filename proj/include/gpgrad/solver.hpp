#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gpgrad/forms.hpp"
#include "gpgrad/linalg.hpp"
#include "gpgrad/state.hpp"

namespace gpgrad {

/// Step-size policy. Fixed steps must lie in (0,2); the scheme provably
/// diverges at tau >= 2 and the adaptive bracket stays inside the open
/// interval.
struct StepPolicy {
  enum class Mode { fixed, adaptive };
  Mode mode = Mode::adaptive;
  double tau = 1.0;
  double bracket_lo = 1e-3;
  double bracket_hi = 2.0 - 1e-3;
  double tau_tol = 1e-10;

  void validate() const;

  static StepPolicy fixed(double tau) {
    StepPolicy p;
    p.mode = Mode::fixed;
    p.tau = tau;
    return p;
  }
  static StepPolicy adaptive() { return StepPolicy{}; }
};

struct IterationRecord {
  int n = 0;
  double energy = 0.0;
  double gamma = 0.0;
  double tau = 0.0;
  double mass_after = 0.0;
  double mass_intermediate = 0.0;
  double step_norm_R = 0.0;
  double residual = 0.0;
  double energy_identity_gap = 0.0;
  double energy_error = std::numeric_limits<double>::quiet_NaN();
  double h1_error = std::numeric_limits<double>::quiet_NaN();
  double h1_omega = std::numeric_limits<double>::quiet_NaN();
  bool stationary = false;
};

enum class StopReason { tol_reached, max_iters, diverged };

struct Trace {
  std::vector<IterationRecord> records;
  State final_state;
  double final_lambda = 0.0;
  StopReason stop_reason = StopReason::max_iters;
  std::vector<State> states;  // u^0, u^1, ... when retained
};

struct StopRule {
  double energy_tol = 1e-13;     // decrement threshold of the intrinsic rule
  double residual_tol = 1e-9;
  double ref_energy_tol = 1e-9;  // |E - E_ref| threshold when a reference is given
  int max_iters = 50000;
};

struct Reference {
  double energy = 0.0;
  std::optional<State> state;  // enables per-step phase-aligned H1 errors
};

/// How the linearized operator solves are carried out.
struct LinearSolvePlan {
  SolveOptions opts;
  Preconditioner precond;  // built per operator (Jacobi) when unset
};

Vec plan_solve(const LinearOperator& A, const Vec& b, const LinearSolvePlan& plan);

struct SolverOptions {
  LinearSolvePlan lin;
  enum class Precond { jacobi, ic0, direct } precond = Precond::jacobi;
  int precond_refresh = 250;   // rebuild cadence for ic0/direct preconditioners
  int mu_refresh = 500;        // fresh M_u assembly cadence (caps roundoff drift)
  bool retain_states = false;
  bool throw_on_energy_increase = false;
  enum class Metric { adaptive, h1 } metric = Metric::adaptive;
};

/// gamma = 1 / (u, q)_L2 for q = A_{|u|}^{-1} I u.
double gamma_coefficient(const FormSet& forms, const State& u, const State& q);

struct Descent {
  State d;
  State q;
  double gamma = 0.0;
};

/// Solves (S + beta M_u) q = M u and returns d = -u + gamma q, which is
/// L2-orthogonal to u.
Descent descent_direction(const FormSet& forms, const State& u, const SpMat& Mu,
                          const LinearSolvePlan& lin);
Descent descent_direction(const FormSet& forms, const State& u, const LinearSolvePlan& lin);

/// The line-search objective E((u + tau d)/||u + tau d||) as a rational
/// function of tau, evaluated from precomputed coefficients.
double line_search_g(const QuarticCoeffs& c, double beta, double tau);

struct LineSearchResult {
  double tau = 0.0;
  double value = 0.0;
  bool stationary = false;
};

/// Bracketed scalar minimization of g (golden section with parabolic steps).
/// A vanishing direction (eta2 ~ 0) returns the lower bracket end flagged
/// stationary.
LineSearchResult minimize_line_search(const QuarticCoeffs& c, double beta,
                                      const StepPolicy& policy);

struct StepResult {
  State next;
  IterationRecord record;
  SpMat Mu_next;
};

/// One gradient step in the energy-adaptive metric, including the exact
/// update of the weighted mass matrix and the per-step identity bookkeeping.
StepResult gradient_step(const FormSet& forms, const State& u, const StepPolicy& policy,
                         const SpMat& Mu, const SolverOptions& opts);

/// One step of the comparison method in the fixed H1 metric. Xfactor is the
/// factorization of X1 = M + K.
StepResult h1_gradient_step(const FormSet& forms, const State& u, const StepPolicy& policy,
                            const SpMat& Mu, const DirectFactor& Xfactor,
                            const SolverOptions& opts);

Trace run(const FormSet& forms, const State& u0, const StepPolicy& policy, const StopRule& stop,
          const std::optional<Reference>& reference = std::nullopt,
          const SolverOptions& opts = {});

/// Plain fixed-point map value psi_tau(v) = (1-tau) v + tau gamma(v) q(v) and
/// the phase functional theta(v) = conj(int psi_tau(v) conj(u_ref)).
State psi_tau_value(const FormSet& forms, const State& v, double tau, const LinearSolvePlan& lin);
std::complex<double> theta_value(const FormSet& forms, const State& v, const State& u_ref,
                                 double tau, const LinearSolvePlan& lin);

/// Phase-locked step Theta_u(v) * phi_tau(v); throws PhaseError when the
/// phase factor degenerates.
State auxiliary_step(const FormSet& forms, const State& v, const State& u_ref, double tau,
                     const LinearSolvePlan& lin);

enum class AlignNorm { L2, H1 };

struct PhaseAlignment {
  double omega = 0.0;
  double err = 0.0;
};

/// Global minimizer of || a - exp(i w) b || in the chosen metric.
PhaseAlignment phase_align(const FormSet& forms, const State& a, const State& b, AlignNorm norm);

/// r(n) = aligned-H1-error ratio between consecutive retained states.
std::vector<double> contraction_rates(const FormSet& forms, const Trace& trace,
                                      const State& u_ref);
std::vector<double> rates_from_errors(const std::vector<double>& errors);

struct GpResidual {
  double lambda = 0.0;
  double res_l2 = 0.0;
  double res_node_max = 0.0;  // max |.| of the mass-solved residual field
};

GpResidual gp_residual(const FormSet& forms, const State& u, const SpMat& Mu,
                       const LinearSolvePlan& lin);
GpResidual gp_residual(const FormSet& forms, const State& u, const LinearSolvePlan& lin);

/// psi(v) = A_{|v|}^{-1} I v and its directional derivative; the tau-step and
/// phase-functional derivatives are evaluated at a ground state u with
/// eigenvalue lambda.
State psi_value(const FormSet& forms, const State& v, const LinearSolvePlan& lin);
State psi_prime_apply(const FormSet& forms, const State& v, const State& h,
                      const LinearSolvePlan& lin);
State psi_tau_prime_at_ground(const FormSet& forms, const State& u, double lambda,
                              const State& h, double tau, const LinearSolvePlan& lin);
std::complex<double> theta_prime_at_ground(const FormSet& forms, const State& u, double lambda,
                                           const State& h, double tau,
                                           const LinearSolvePlan& lin);

/// Field-use invariant battery (mass, tangency, energy identity, gauge
/// equivariance, auxiliary relation, line-search oracle agreement).
struct CheckReport {
  struct Item {
    std::string name;
    double defect = 0.0;
    double tol = 0.0;
    bool pass = false;
  };
  std::vector<Item> items;
  bool all_pass = true;

  void add(std::string name, double defect, double tol);
};

CheckReport run_invariant_battery(const FormSet& forms, const State& u0,
                                  const StepPolicy& policy, std::uint64_t seed,
                                  const SolverOptions& opts);

}  // namespace gpgrad
