#pragma once

#include <Eigen/QR>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "gpgrad/forms.hpp"
#include "gpgrad/solver.hpp"

namespace testutil {

using gpgrad::Index;
using gpgrad::Mat;
using gpgrad::SpMat;
using gpgrad::Vec;

struct Rng {
  std::uint64_t s;
  explicit Rng(std::uint64_t seed) : s(seed) {}
  double uniform() {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return (z >> 11) * 0x1.0p-53;
  }
  double symmetric() { return 2.0 * uniform() - 1.0; }
  Vec vector(Index n) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = symmetric();
    return v;
  }
};

inline gpgrad::State random_state(const std::shared_ptr<const gpgrad::Mesh>& mesh,
                                  std::uint64_t seed) {
  Rng rng(seed);
  return gpgrad::State(rng.vector(mesh->num_dofs()), mesh);
}

// The standard rotating-condensate test setup.
inline gpgrad::ModelParams paper_model() {
  gpgrad::ModelParams p;
  p.beta = 100.0;
  p.omega = 1.2;
  p.potential = [](double x, double y) {
    return 0.5 * ((0.9 * x) * (0.9 * x) + (1.2 * y) * (1.2 * y));
  };
  p.trap_margin_K = 0.01;
  return p;
}

inline gpgrad::State vortex_profile(const std::shared_ptr<const gpgrad::Mesh>& mesh) {
  const double inv_sqrt_pi = 1.0 / std::sqrt(3.14159265358979323846);
  return gpgrad::interpolate(mesh, [inv_sqrt_pi](double x, double y) {
    const double env = inv_sqrt_pi * std::exp(-0.5 * (x * x + y * y));
    return std::complex<double>(x * env, y * env);
  });
}

// Dense oracle: full eigendecomposition of the pencil (A, B) restricted to
// the B-orthogonal complement of the given constraint vectors, via a
// Householder null-space basis.
inline std::vector<double> dense_constrained_eigs(const Mat& A, const Mat& B,
                                                  const std::vector<Vec>& constraints,
                                                  Mat* vectors = nullptr) {
  const Index n = A.rows();
  Mat Z;
  if (constraints.empty()) {
    Z = Mat::Identity(n, n);
  } else {
    Mat C(n, static_cast<Index>(constraints.size()));
    for (size_t j = 0; j < constraints.size(); ++j)
      C.col(static_cast<Index>(j)) = B * constraints[j];
    Eigen::HouseholderQR<Mat> qr(C);
    const Mat Q = qr.householderQ();
    Z = Q.rightCols(n - C.cols());
  }
  const Mat Ar = Z.transpose() * A * Z;
  const Mat Br = Z.transpose() * B * Z;
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(0.5 * (Ar + Ar.transpose()),
                                                   0.5 * (Br + Br.transpose()));
  if (vectors) *vectors = Z * es.eigenvectors();
  return {es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()};
}

// High-order reference integration of f over a triangle via the Duffy map and
// 10-point Gauss-Legendre, exact for polynomial integrands up to degree 19.
template <typename F>
double duffy_integrate(const std::array<double, 2>& p0, const std::array<double, 2>& p1,
                       const std::array<double, 2>& p2, F&& f) {
  static const double gl_x[10] = {
      0.013046735741414128, 0.067468316655507745, 0.16029521585048778, 0.2833023029353764,
      0.42556283050918439,  0.57443716949081561,  0.7166976970646236,  0.83970478414951222,
      0.93253168334449225,  0.98695326425858587};
  static const double gl_w[10] = {
      0.033335672154344069, 0.074725674575290297, 0.10954318125799102, 0.13463335965499817,
      0.14776211235737644,  0.14776211235737644,  0.13463335965499817, 0.10954318125799102,
      0.074725674575290297, 0.033335672154344069};
  const double jac2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
  double total = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double u = gl_x[i], v = gl_x[j];
      const double r = u, s = v * (1.0 - u);  // reference-triangle coordinates
      const double x = p0[0] + r * (p1[0] - p0[0]) + s * (p2[0] - p0[0]);
      const double y = p0[1] + r * (p1[1] - p0[1]) + s * (p2[1] - p0[1]);
      total += gl_w[i] * gl_w[j] * (1.0 - u) * f(x, y);
    }
  }
  return total * jac2;
}

inline Mat densify(const SpMat& m) { return Mat(m); }

}  // namespace testutil
