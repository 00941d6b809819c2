#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "gpgrad/mesh.hpp"
#include "gpgrad/state.hpp"
#include "gpgrad/types.hpp"

namespace gpgrad {

using PotentialFunction = std::function<double(double, double)>;

/// Model data for the rotating condensate: repulsion strength beta >= 0,
/// angular velocity omega, trapping potential V >= 0. trap_margin_K is the
/// constant of the trap-strength admissibility inequality
///   V(x) - (1+K)/4 * omega^2 |x|^2 >= 0,
/// checked pointwise at all quadrature points during assembly.
struct ModelParams {
  double beta = 0.0;
  double omega = 0.0;
  PotentialFunction potential;  // nullptr means V = 0
  double trap_margin_K = 0.01;
};

/// Preassembled forms on a fixed mesh. S is the rotational-frame energy inner
/// product (covariant gradient plus shifted potential), M the mass matrix and
/// X1 = M + K the H1 metric. All matrices act on the interleaved real DOF
/// vector and are symmetric; S and M are positive definite.
struct FormSet {
  std::shared_ptr<const Mesh> mesh;
  ModelParams params;

  SpMat S;
  SpMat M;
  SpMat X1;

  bool admissibility_ok = true;
  double admissibility_margin = 0.0;  // min over quad points of V - (1+K)/4 O^2 |x|^2

  // Fixed sparsity prototype for the density-weighted matrices plus a flat
  // scatter map (element, local pair) -> value offsets for the (Re,Re) and
  // (Im,Im) entries. Assembling M_u / Xi then never re-sorts triplets.
  SpMat scalar_proto;
  std::vector<std::array<int, 3>> elem_dofs;       // interior DOF or -1 per vertex
  std::vector<std::array<int, 18>> elem_scatter;   // 9 pairs x 2 offsets, -1 if dropped
};

/// Assembles S, M and X1 and runs the admissibility check. In strict mode a
/// violated trap condition throws AdmissibilityError; otherwise the FormSet
/// carries a warning flag.
FormSet assemble_base(std::shared_ptr<const Mesh> mesh, ModelParams params,
                      bool strict_admissibility = false);

/// Density-weighted mass matrix: entries Re int |u|^2 phi_j conj(phi_i).
SpMat assemble_weighted_mass(const FormSet& forms, const State& u);

/// The two line-search matrices, built in a single element sweep:
/// Xi_ud with weight Re(u conj(d)) and Xi_dd with weight |d|^2.
std::pair<SpMat, SpMat> assemble_xi_matrices(const FormSet& forms, const State& u,
                                             const State& d);

/// Rank-structured matrix of the second energy derivative's extra term:
/// <N_u v, w> = int Re(u conj(v)) Re(u conj(w)) dx.
SpMat assemble_projector_term(const FormSet& forms, const State& u);

/// Alternative assembly of S through the angular-momentum form
/// (grad v, grad w) + (V v, w) - Omega (L3 v, w). Used to cross-check the
/// covariant-gradient assembly; not guaranteed bitwise symmetric.
SpMat assemble_rotational_alt(const Mesh& mesh, const ModelParams& params);

/// int |u|^4 by the fixed element quadrature (exact for P1 densities).
double quartic_norm(const FormSet& forms, const State& u);

/// E(u) = 1/2 u'Su + beta/4 int |u|^4.
double energy(const FormSet& forms, const State& u);

double mass(const FormSet& forms, const State& u);
State normalized(const FormSet& forms, const State& u);

/// Scalar coefficients of the line-search rational function.
struct QuarticCoeffs {
  double xi0 = 0, xi1 = 0, xi2 = 0, xi3 = 0, xi4 = 0;
  double eta1 = 0, eta2 = 0;
  double zeta0 = 0, zeta1 = 0, zeta2 = 0;
};

/// Computes all line-search coefficients from matrix products with
/// preassembled M_u, Xi_ud, Xi_dd.
QuarticCoeffs quartic_integrals(const FormSet& forms, const State& u, const State& d,
                                const SpMat& Mu, const SpMat& Xi_ud, const SpMat& Xi_dd);

/// Convenience overload assembling the weighted matrices internally.
QuarticCoeffs quartic_integrals(const FormSet& forms, const State& u, const State& d);

}  // namespace gpgrad
