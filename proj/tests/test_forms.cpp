#include <doctest.h>

#include "gpgrad/forms.hpp"
#include "gpgrad/state.hpp"
#include "helpers.hpp"

using namespace gpgrad;
using testutil::Rng;

namespace {

FormSet paper_forms(int n, double L = 6.0) {
  return assemble_base(build_mesh(L, L, n), testutil::paper_model());
}

double max_abs(const SpMat& m) {
  double v = 0.0;
  for (Index i = 0; i < m.nonZeros(); ++i) v = std::max(v, std::abs(m.valuePtr()[i]));
  return v;
}

}  // namespace

TEST_CASE("without rotation and potential, S is the plain Dirichlet stiffness") {
  auto mesh = build_mesh(1.0, 1.0, 8);
  ModelParams params;  // beta = 0, omega = 0, V = 0
  const FormSet f = assemble_base(mesh, params);
  // X1 = M + K, so S must equal X1 - M entry by entry.
  Rng rng(11);
  for (int t = 0; t < 5; ++t) {
    const Vec x = rng.vector(f.S.rows());
    const Vec y = rng.vector(f.S.rows());
    const double lhs = x.dot(f.S * y);
    const double rhs = x.dot(f.X1 * y) - x.dot(f.M * y);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("admissibility check follows the trap-strength inequality") {
  auto mesh = build_mesh(6.0, 6.0, 12);

  const FormSet ok = assemble_base(mesh, testutil::paper_model());
  CHECK(ok.admissibility_ok);

  ModelParams bad;
  bad.beta = 10.0;
  bad.omega = 2.0;
  bad.potential = [](double x, double y) { return 0.5 * (x * x + y * y); };
  const FormSet warned = assemble_base(mesh, bad);
  CHECK_FALSE(warned.admissibility_ok);
  CHECK_THROWS_AS(assemble_base(mesh, bad, /*strict=*/true), AdmissibilityError);

  ModelParams negative_beta = bad;
  negative_beta.beta = -1.0;
  CHECK_THROWS_AS(assemble_base(mesh, negative_beta), ConfigError);
}

TEST_CASE("covariant-gradient and angular-momentum assemblies agree") {
  const FormSet f = paper_forms(10);
  const SpMat alt = assemble_rotational_alt(*f.mesh, f.params);
  const double scale = max_abs(f.S);
  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    const Vec x = rng.vector(f.S.rows());
    const Vec y = rng.vector(f.S.rows());
    const double diff = std::abs(x.dot(f.S * y) - x.dot(alt * y));
    CHECK(diff <= 1e-12 * scale * x.norm() * y.norm());
  }
}

TEST_CASE("S and M are symmetric positive definite") {
  const FormSet f = paper_forms(8);
  Rng rng(37);
  for (int t = 0; t < 10; ++t) {
    const Vec x = rng.vector(f.S.rows());
    const Vec y = rng.vector(f.S.rows());
    CHECK(std::abs(x.dot(f.S * y) - y.dot(f.S * x)) <=
          1e-12 * max_abs(f.S) * x.norm() * y.norm());
    CHECK(x.dot(f.S * x) > 0.0);
    CHECK(x.dot(f.M * x) > 0.0);
  }
}

TEST_CASE("gauge rotations leave the forms invariant") {
  const FormSet f = paper_forms(8);
  Rng rng(51);
  const double omega = 0.8351;
  const State u = testutil::random_state(f.mesh, 99);
  const SpMat Mu = assemble_weighted_mass(f, u);
  const SpMat Mu_rot = assemble_weighted_mass(f, gauge_rotate(u, omega));
  // M_{G u} = M_u: same pattern, compare values directly.
  const double scale = std::max(1.0, max_abs(Mu));
  for (Index i = 0; i < Mu.nonZeros(); ++i)
    CHECK(std::abs(Mu.valuePtr()[i] - Mu_rot.valuePtr()[i]) <= 1e-12 * scale);

  for (int t = 0; t < 10; ++t) {
    const Vec x = rng.vector(f.S.rows());
    const Vec gx = gauge_rotate_vec(x, omega);
    CHECK(std::abs(gx.dot(f.S * gx) - x.dot(f.S * x)) <=
          1e-12 * max_abs(f.S) * x.squaredNorm());
    CHECK(std::abs(gx.dot(f.M * gx) - x.dot(f.M * x)) <= 1e-12 * x.squaredNorm());
  }

  const double e0 = energy(f, u);
  const double e1 = energy(f, gauge_rotate(u, omega));
  CHECK(std::abs(e0 - e1) <= 1e-12 * std::max(1.0, std::abs(e0)));
}

TEST_CASE("weighted mass matrix basics") {
  const FormSet f = paper_forms(10);
  const State zero = State::zero(f.mesh);
  CHECK(max_abs(assemble_weighted_mass(f, zero)) == 0.0);

  // With u = 1 at every interior node the interpolant is exactly 1 on all
  // elements whose vertices are interior, so M_u acts like M there.
  const State ones = interpolate(f.mesh, [](double, double) {
    return std::complex<double>(1.0, 0.0);
  });
  const SpMat Mu = assemble_weighted_mass(f, ones);
  const int n = f.mesh->n;
  Vec deep = Vec::Zero(f.mesh->num_dofs());
  Rng rng(7);
  for (int iy = 2; iy <= n - 2; ++iy)
    for (int ix = 2; ix <= n - 2; ++ix) {
      const int dof = f.mesh->interior_index[iy * (n + 1) + ix];
      deep[2 * dof] = rng.symmetric();
      deep[2 * dof + 1] = rng.symmetric();
    }
  CHECK(std::abs(deep.dot(Mu * deep) - deep.dot(f.M * deep)) <=
        1e-12 * deep.dot(f.M * deep));

  // Positive semidefinite on random vectors.
  for (int t = 0; t < 100; ++t) {
    const Vec v = rng.vector(f.mesh->num_dofs());
    const State s = testutil::random_state(f.mesh, 1000 + t);
    const SpMat Ms = assemble_weighted_mass(f, s);
    CHECK(v.dot(Ms * v) >= -1e-14);
  }

  const State wrong(Vec::Zero(10), build_mesh(1.0, 1.0, 3));
  CHECK_THROWS_AS(assemble_weighted_mass(f, wrong), DimensionError);
}

TEST_CASE("line-search matrices and the exact update identity") {
  const FormSet f = paper_forms(9);
  const State u = testutil::random_state(f.mesh, 3);
  const State d = testutil::random_state(f.mesh, 4);

  auto [xud0, xdd0] = assemble_xi_matrices(f, u, State::zero(f.mesh));
  CHECK(max_abs(xud0) == 0.0);
  CHECK(max_abs(xdd0) == 0.0);

  const SpMat Mu = assemble_weighted_mass(f, u);
  auto [xud_u, xdd_u] = assemble_xi_matrices(f, u, u);
  for (Index i = 0; i < Mu.nonZeros(); ++i) {
    CHECK(std::abs(xud_u.valuePtr()[i] - Mu.valuePtr()[i]) <= 1e-13 * max_abs(Mu));
    CHECK(std::abs(xdd_u.valuePtr()[i] - Mu.valuePtr()[i]) <= 1e-13 * max_abs(Mu));
  }

  auto [xud, xdd] = assemble_xi_matrices(f, u, d);
  for (double tau : {0.3, 1.0, 1.7}) {
    const State combo(u.coeffs + tau * d.coeffs, f.mesh);
    const SpMat direct = assemble_weighted_mass(f, combo);
    const double scale = std::max(1.0, max_abs(direct));
    for (Index i = 0; i < direct.nonZeros(); ++i) {
      const double updated = Mu.valuePtr()[i] + 2.0 * tau * xud.valuePtr()[i] +
                             tau * tau * xdd.valuePtr()[i];
      CHECK(std::abs(updated - direct.valuePtr()[i]) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("quartic coefficients reproduce the L4 norm of combined states") {
  const FormSet f = paper_forms(8);
  const State u = testutil::random_state(f.mesh, 17);
  const State d = testutil::random_state(f.mesh, 18);
  const QuarticCoeffs c = quartic_integrals(f, u, d);

  for (double tau : {0.0, 0.25, 0.9, 1.6}) {
    const State combo(u.coeffs + tau * d.coeffs, f.mesh);
    const double expansion = c.xi0 + 4.0 * c.xi1 * tau + 2.0 * c.xi2 * tau * tau +
                             4.0 * c.xi3 * tau * tau * tau + c.xi4 * tau * tau * tau * tau;
    const double direct = quartic_norm(f, combo);
    CHECK(std::abs(expansion - direct) <= 1e-12 * std::max(1.0, direct));
  }

  const QuarticCoeffs c0 = quartic_integrals(f, u, State::zero(f.mesh));
  CHECK(c0.xi1 == 0.0);
  CHECK(c0.xi2 == 0.0);
  CHECK(c0.xi3 == 0.0);
  CHECK(c0.xi4 == 0.0);
  CHECK(c0.eta1 == 0.0);
  CHECK(c0.eta2 == 0.0);
  CHECK(c0.zeta1 == 0.0);
  CHECK(c0.zeta2 == 0.0);

  // d = i u kills the odd coefficients pointwise.
  const QuarticCoeffs ci = quartic_integrals(f, u, times_i(u));
  CHECK(std::abs(ci.xi1) <= 1e-13 * std::max(1.0, ci.xi0));
  CHECK(std::abs(ci.xi3) <= 1e-13 * std::max(1.0, ci.xi0));
  CHECK(std::abs(ci.xi2 - ci.xi0) <= 1e-12 * std::max(1.0, ci.xi0));
  CHECK(std::abs(ci.xi4 - ci.xi0) <= 1e-12 * std::max(1.0, ci.xi0));
}

TEST_CASE("energy basics") {
  const FormSet f = paper_forms(8);
  CHECK(energy(f, State::zero(f.mesh)) == 0.0);

  ModelParams linear = testutil::paper_model();
  linear.beta = 0.0;
  const FormSet fl = assemble_base(f.mesh, linear);
  const State u = testutil::random_state(f.mesh, 5);
  CHECK(energy(fl, u) == 0.5 * u.coeffs.dot(fl.S * u.coeffs));
}
