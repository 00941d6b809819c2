#include "gpgrad/forms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gpgrad/errors.hpp"

namespace gpgrad {

namespace {

struct ElemGeometry {
  std::array<double, 2> p[3];
  std::array<double, 2> grad[3];  // constant P1 gradients
  double area = 0.0;
};

ElemGeometry element_geometry(const Mesh& mesh, int e) {
  ElemGeometry g;
  const auto& tri = mesh.triangles[e];
  for (int i = 0; i < 3; ++i) g.p[i] = mesh.node_coords[tri[i]];
  const double det = (g.p[1][0] - g.p[0][0]) * (g.p[2][1] - g.p[0][1]) -
                     (g.p[2][0] - g.p[0][0]) * (g.p[1][1] - g.p[0][1]);
  g.area = 0.5 * det;
  const double inv = 1.0 / det;
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3;
    const int k = (i + 2) % 3;
    g.grad[i] = {(g.p[j][1] - g.p[k][1]) * inv, (g.p[k][0] - g.p[j][0]) * inv};
  }
  return g;
}

void check_same_mesh(const FormSet& forms, const State& u, const char* where) {
  if (u.mesh.get() != forms.mesh.get() || u.coeffs.size() != forms.mesh->num_dofs())
    throw DimensionError(std::string(where) + ": state does not live on the form set's mesh");
}

// Local nodal values of a state on one element; boundary vertices contribute 0.
struct LocalState {
  double re[3];
  double im[3];
};

LocalState gather(const Vec& coeffs, const std::array<int, 3>& dofs) {
  LocalState loc{};
  for (int i = 0; i < 3; ++i) {
    if (dofs[i] >= 0) {
      loc.re[i] = coeffs[2 * dofs[i]];
      loc.im[i] = coeffs[2 * dofs[i] + 1];
    } else {
      loc.re[i] = 0.0;
      loc.im[i] = 0.0;
    }
  }
  return loc;
}

inline double eval(const double v[3], const std::array<double, 3>& lambda) {
  return v[0] * lambda[0] + v[1] * lambda[1] + v[2] * lambda[2];
}

int value_offset(const SpMat& m, Index row, Index col) {
  for (int idx = static_cast<int>(m.outerIndexPtr()[row]); idx < m.outerIndexPtr()[row + 1]; ++idx) {
    if (m.innerIndexPtr()[idx] == col) return idx;
  }
  return -1;
}

}  // namespace

FormSet assemble_base(std::shared_ptr<const Mesh> mesh, ModelParams params,
                      bool strict_admissibility) {
  if (!mesh) throw MeshError("assemble_base: null mesh");
  if (params.beta < 0.0) throw ConfigError("assemble_base: beta must be non-negative");
  if (params.trap_margin_K <= 0.0)
    throw ConfigError("assemble_base: trap margin K must be positive");

  FormSet forms;
  forms.mesh = mesh;
  forms.params = params;

  const Mesh& msh = *mesh;
  const Quadrature& quad = msh.quad;
  const Index ndof = msh.num_dofs();
  const double omega = params.omega;
  const double half_omega = 0.5 * omega;
  const double K = params.trap_margin_K;

  auto V = [&](double x, double y) {
    return params.potential ? params.potential(x, y) : 0.0;
  };

  std::vector<Eigen::Triplet<double>> ts, tm, tx;
  ts.reserve(36ull * msh.num_triangles());
  tm.reserve(18ull * msh.num_triangles());
  tx.reserve(18ull * msh.num_triangles());

  forms.elem_dofs.resize(msh.num_triangles());
  double min_margin = std::numeric_limits<double>::infinity();

  for (int e = 0; e < msh.num_triangles(); ++e) {
    const ElemGeometry geo = element_geometry(msh, e);
    std::array<int, 3>& dofs = forms.elem_dofs[e];
    for (int i = 0; i < 3; ++i) dofs[i] = msh.interior_index[msh.triangles[e][i]];

    double Ls[6][6] = {};
    double Lm[3][3] = {};
    double Lk[3][3] = {};

    for (size_t q = 0; q < quad.points.size(); ++q) {
      const auto& lam = quad.points[q];
      const double w = quad.weights[q] * 2.0 * geo.area;
      const double x = lam[0] * geo.p[0][0] + lam[1] * geo.p[1][0] + lam[2] * geo.p[2][0];
      const double y = lam[0] * geo.p[0][1] + lam[1] * geo.p[1][1] + lam[2] * geo.p[2][1];
      const double Vq = V(x, y);
      if (Vq < 0.0)
        throw ConfigError("assemble_base: potential is negative at a quadrature point");
      const double r2 = x * x + y * y;
      const double VR = Vq - 0.25 * omega * omega * r2;
      min_margin = std::min(min_margin, Vq - 0.25 * (1.0 + K) * omega * omega * r2);

      // Covariant-gradient components: for each spatial direction k the
      // fields a_k = d_k(Re) - O/2 r_k Im and b_k = d_k(Im) + O/2 r_k Re are
      // linear in the local DOFs; the form adds w * (a_k a_k' + b_k b_k').
      const double r[2] = {y, -x};
      for (int k = 0; k < 2; ++k) {
        double a[6], b[6];
        for (int i = 0; i < 3; ++i) {
          a[2 * i] = geo.grad[i][k];
          a[2 * i + 1] = -half_omega * r[k] * lam[i];
          b[2 * i] = half_omega * r[k] * lam[i];
          b[2 * i + 1] = geo.grad[i][k];
        }
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 6; ++j) Ls[i][j] += w * (a[i] * a[j] + b[i] * b[j]);
      }
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const double mass_ij = w * lam[i] * lam[j];
          Ls[2 * i][2 * j] += VR * mass_ij;
          Ls[2 * i + 1][2 * j + 1] += VR * mass_ij;
          Lm[i][j] += mass_ij;
          Lk[i][j] += w * (geo.grad[i][0] * geo.grad[j][0] + geo.grad[i][1] * geo.grad[j][1]);
        }
      }
    }

    for (int i = 0; i < 3; ++i) {
      if (dofs[i] < 0) continue;
      for (int j = 0; j < 3; ++j) {
        if (dofs[j] < 0) continue;
        for (int ci = 0; ci < 2; ++ci)
          for (int cj = 0; cj < 2; ++cj)
            ts.emplace_back(2 * dofs[i] + ci, 2 * dofs[j] + cj, Ls[2 * i + ci][2 * j + cj]);
        for (int c = 0; c < 2; ++c) {
          tm.emplace_back(2 * dofs[i] + c, 2 * dofs[j] + c, Lm[i][j]);
          tx.emplace_back(2 * dofs[i] + c, 2 * dofs[j] + c, Lm[i][j] + Lk[i][j]);
        }
      }
    }
  }

  forms.S.resize(ndof, ndof);
  forms.S.setFromTriplets(ts.begin(), ts.end());
  forms.M.resize(ndof, ndof);
  forms.M.setFromTriplets(tm.begin(), tm.end());
  forms.X1.resize(ndof, ndof);
  forms.X1.setFromTriplets(tx.begin(), tx.end());

  forms.admissibility_margin = min_margin;
  forms.admissibility_ok = min_margin >= -1e-12;
  if (!forms.admissibility_ok && strict_admissibility)
    throw AdmissibilityError(
        "assemble_base: trap condition V >= (1+K)/4 Omega^2 |x|^2 violated (margin " +
        std::to_string(min_margin) + ")");

  // Pattern and scatter map for the density-weighted matrices.
  {
    std::vector<Eigen::Triplet<double>> tp;
    tp.reserve(18ull * msh.num_triangles());
    for (const auto& dofs : forms.elem_dofs) {
      for (int i = 0; i < 3; ++i) {
        if (dofs[i] < 0) continue;
        for (int j = 0; j < 3; ++j) {
          if (dofs[j] < 0) continue;
          tp.emplace_back(2 * dofs[i], 2 * dofs[j], 0.0);
          tp.emplace_back(2 * dofs[i] + 1, 2 * dofs[j] + 1, 0.0);
        }
      }
    }
    forms.scalar_proto.resize(ndof, ndof);
    forms.scalar_proto.setFromTriplets(tp.begin(), tp.end());
    forms.scalar_proto.makeCompressed();

    forms.elem_scatter.resize(msh.num_triangles());
    for (int e = 0; e < msh.num_triangles(); ++e) {
      const auto& dofs = forms.elem_dofs[e];
      auto& sc = forms.elem_scatter[e];
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const int pair = 3 * i + j;
          if (dofs[i] < 0 || dofs[j] < 0) {
            sc[2 * pair] = sc[2 * pair + 1] = -1;
            continue;
          }
          sc[2 * pair] = value_offset(forms.scalar_proto, 2 * dofs[i], 2 * dofs[j]);
          sc[2 * pair + 1] = value_offset(forms.scalar_proto, 2 * dofs[i] + 1, 2 * dofs[j] + 1);
        }
      }
    }
  }

  return forms;
}

SpMat assemble_weighted_mass(const FormSet& forms, const State& u) {
  check_same_mesh(forms, u, "assemble_weighted_mass");
  const Mesh& msh = *forms.mesh;
  const Quadrature& quad = msh.quad;

  SpMat out = forms.scalar_proto;
  double* vals = out.valuePtr();
  for (int e = 0; e < msh.num_triangles(); ++e) {
    const auto& dofs = forms.elem_dofs[e];
    const auto& sc = forms.elem_scatter[e];
    const LocalState loc = gather(u.coeffs, dofs);
    double L[3][3] = {};
    for (size_t q = 0; q < quad.points.size(); ++q) {
      const auto& lam = quad.points[q];
      const double w = quad.weights[q] * 2.0 * msh.tri_area;
      const double ur = eval(loc.re, lam);
      const double ui = eval(loc.im, lam);
      const double c = w * (ur * ur + ui * ui);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) L[i][j] += c * lam[i] * lam[j];
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int pair = 3 * i + j;
        if (sc[2 * pair] >= 0) {
          vals[sc[2 * pair]] += L[i][j];
          vals[sc[2 * pair + 1]] += L[i][j];
        }
      }
  }
  return out;
}

std::pair<SpMat, SpMat> assemble_xi_matrices(const FormSet& forms, const State& u,
                                             const State& d) {
  check_same_mesh(forms, u, "assemble_xi_matrices");
  check_same_mesh(forms, d, "assemble_xi_matrices");
  const Mesh& msh = *forms.mesh;
  const Quadrature& quad = msh.quad;

  SpMat ud = forms.scalar_proto;
  SpMat dd = forms.scalar_proto;
  double* vud = ud.valuePtr();
  double* vdd = dd.valuePtr();
  for (int e = 0; e < msh.num_triangles(); ++e) {
    const auto& dofs = forms.elem_dofs[e];
    const auto& sc = forms.elem_scatter[e];
    const LocalState lu = gather(u.coeffs, dofs);
    const LocalState ld = gather(d.coeffs, dofs);
    double Lud[3][3] = {};
    double Ldd[3][3] = {};
    for (size_t q = 0; q < quad.points.size(); ++q) {
      const auto& lam = quad.points[q];
      const double w = quad.weights[q] * 2.0 * msh.tri_area;
      const double ur = eval(lu.re, lam);
      const double ui = eval(lu.im, lam);
      const double dr = eval(ld.re, lam);
      const double di = eval(ld.im, lam);
      const double cud = w * (ur * dr + ui * di);  // Re(u conj(d))
      const double cdd = w * (dr * dr + di * di);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double p = lam[i] * lam[j];
          Lud[i][j] += cud * p;
          Ldd[i][j] += cdd * p;
        }
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int pair = 3 * i + j;
        if (sc[2 * pair] >= 0) {
          vud[sc[2 * pair]] += Lud[i][j];
          vud[sc[2 * pair + 1]] += Lud[i][j];
          vdd[sc[2 * pair]] += Ldd[i][j];
          vdd[sc[2 * pair + 1]] += Ldd[i][j];
        }
      }
  }
  return {std::move(ud), std::move(dd)};
}

SpMat assemble_projector_term(const FormSet& forms, const State& u) {
  check_same_mesh(forms, u, "assemble_projector_term");
  const Mesh& msh = *forms.mesh;
  const Quadrature& quad = msh.quad;

  std::vector<Eigen::Triplet<double>> tn;
  tn.reserve(36ull * msh.num_triangles());
  for (int e = 0; e < msh.num_triangles(); ++e) {
    const auto& dofs = forms.elem_dofs[e];
    const LocalState loc = gather(u.coeffs, dofs);
    double L[6][6] = {};
    for (size_t q = 0; q < quad.points.size(); ++q) {
      const auto& lam = quad.points[q];
      const double w = quad.weights[q] * 2.0 * msh.tri_area;
      const double ur = eval(loc.re, lam);
      const double ui = eval(loc.im, lam);
      // Re(u conj(v)) = ur vR + ui vI, so the form is a Gram matrix of the
      // functional g with g[2i] = ur phi_i, g[2i+1] = ui phi_i.
      double g[6];
      for (int i = 0; i < 3; ++i) {
        g[2 * i] = ur * lam[i];
        g[2 * i + 1] = ui * lam[i];
      }
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) L[i][j] += w * g[i] * g[j];
    }
    for (int i = 0; i < 3; ++i) {
      if (dofs[i] < 0) continue;
      for (int j = 0; j < 3; ++j) {
        if (dofs[j] < 0) continue;
        for (int ci = 0; ci < 2; ++ci)
          for (int cj = 0; cj < 2; ++cj)
            tn.emplace_back(2 * dofs[i] + ci, 2 * dofs[j] + cj, L[2 * i + ci][2 * j + cj]);
      }
    }
  }
  SpMat N(forms.mesh->num_dofs(), forms.mesh->num_dofs());
  N.setFromTriplets(tn.begin(), tn.end());
  return N;
}

SpMat assemble_rotational_alt(const Mesh& mesh, const ModelParams& params) {
  const Quadrature& quad = mesh.quad;
  auto V = [&](double x, double y) {
    return params.potential ? params.potential(x, y) : 0.0;
  };
  const double omega = params.omega;

  std::vector<Eigen::Triplet<double>> ta;
  ta.reserve(36ull * mesh.num_triangles());
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const ElemGeometry geo = element_geometry(mesh, e);
    std::array<int, 3> dofs;
    for (int i = 0; i < 3; ++i) dofs[i] = mesh.interior_index[mesh.triangles[e][i]];

    double L[6][6] = {};
    for (size_t q = 0; q < quad.points.size(); ++q) {
      const auto& lam = quad.points[q];
      const double w = quad.weights[q] * 2.0 * geo.area;
      const double x = lam[0] * geo.p[0][0] + lam[1] * geo.p[1][0] + lam[2] * geo.p[2][0];
      const double y = lam[0] * geo.p[0][1] + lam[1] * geo.p[1][1] + lam[2] * geo.p[2][1];
      const double Vq = V(x, y);
      for (int i = 0; i < 3; ++i) {
        // D = x d_y - y d_x, the advective part of L3 = -i D.
        const double Dphi_i = x * geo.grad[i][1] - y * geo.grad[i][0];
        for (int j = 0; j < 3; ++j) {
          const double kin = geo.grad[i][0] * geo.grad[j][0] + geo.grad[i][1] * geo.grad[j][1];
          const double mass_ij = lam[i] * lam[j];
          L[2 * i][2 * j] += w * (kin + Vq * mass_ij);
          L[2 * i + 1][2 * j + 1] += w * (kin + Vq * mass_ij);
          // -Omega (L3 v, w) contributes Omega (D vR wI - D vI wR).
          const double Dphi_j = x * geo.grad[j][1] - y * geo.grad[j][0];
          L[2 * i + 1][2 * j] += w * omega * Dphi_j * lam[i];
          L[2 * i][2 * j + 1] -= w * omega * Dphi_j * lam[i];
        }
      }
    }
    for (int i = 0; i < 3; ++i) {
      if (dofs[i] < 0) continue;
      for (int j = 0; j < 3; ++j) {
        if (dofs[j] < 0) continue;
        for (int ci = 0; ci < 2; ++ci)
          for (int cj = 0; cj < 2; ++cj)
            ta.emplace_back(2 * dofs[i] + ci, 2 * dofs[j] + cj, L[2 * i + ci][2 * j + cj]);
      }
    }
  }
  SpMat A(mesh.num_dofs(), mesh.num_dofs());
  A.setFromTriplets(ta.begin(), ta.end());
  return A;
}

double quartic_norm(const FormSet& forms, const State& u) {
  check_same_mesh(forms, u, "quartic_norm");
  const Mesh& msh = *forms.mesh;
  const Quadrature& quad = msh.quad;
  double total = 0.0;
  for (int e = 0; e < msh.num_triangles(); ++e) {
    const LocalState loc = gather(u.coeffs, forms.elem_dofs[e]);
    double acc = 0.0;
    for (size_t q = 0; q < quad.points.size(); ++q) {
      const auto& lam = quad.points[q];
      const double ur = eval(loc.re, lam);
      const double ui = eval(loc.im, lam);
      const double d2 = ur * ur + ui * ui;
      acc += quad.weights[q] * d2 * d2;
    }
    total += 2.0 * msh.tri_area * acc;
  }
  return total;
}

double energy(const FormSet& forms, const State& u) {
  check_same_mesh(forms, u, "energy");
  const double quadratic = u.coeffs.dot(forms.S * u.coeffs);
  return 0.5 * quadratic + 0.25 * forms.params.beta * quartic_norm(forms, u);
}

double mass(const FormSet& forms, const State& u) {
  check_same_mesh(forms, u, "mass");
  return u.coeffs.dot(forms.M * u.coeffs);
}

State normalized(const FormSet& forms, const State& u) {
  const double m = mass(forms, u);
  if (!(m > 0.0)) throw DimensionError("normalized: state has zero mass");
  return State(u.coeffs / std::sqrt(m), u.mesh);
}

QuarticCoeffs quartic_integrals(const FormSet& forms, const State& u, const State& d,
                                const SpMat& Mu, const SpMat& Xi_ud, const SpMat& Xi_dd) {
  check_same_mesh(forms, u, "quartic_integrals");
  check_same_mesh(forms, d, "quartic_integrals");
  QuarticCoeffs c;
  const Vec& uv = u.coeffs;
  const Vec& dv = d.coeffs;
  const Vec Mu_u = Mu * uv;
  const Vec Xud_u = Xi_ud * uv;
  const Vec Xdd_u = Xi_dd * uv;
  const Vec Xdd_d = Xi_dd * dv;
  c.xi0 = uv.dot(Mu_u);
  c.xi1 = uv.dot(Xud_u);
  c.xi2 = uv.dot(Xdd_u) + 2.0 * dv.dot(Xud_u);
  c.xi3 = dv.dot(Xdd_u);
  c.xi4 = dv.dot(Xdd_d);
  c.eta1 = uv.dot(forms.M * dv);
  c.eta2 = dv.dot(forms.M * dv);
  c.zeta0 = uv.dot(forms.S * uv);
  c.zeta1 = uv.dot(forms.S * dv);
  c.zeta2 = dv.dot(forms.S * dv);
  return c;
}

QuarticCoeffs quartic_integrals(const FormSet& forms, const State& u, const State& d) {
  const SpMat Mu = assemble_weighted_mass(forms, u);
  auto [xud, xdd] = assemble_xi_matrices(forms, u, d);
  return quartic_integrals(forms, u, d, Mu, xud, xdd);
}

}  // namespace gpgrad
