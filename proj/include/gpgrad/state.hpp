#pragma once

#include <complex>
#include <functional>
#include <memory>

#include "gpgrad/mesh.hpp"
#include "gpgrad/types.hpp"

namespace gpgrad {

/// Discrete complex-valued function with homogeneous Dirichlet data. The
/// coefficient vector interleaves real and imaginary parts per interior node:
/// coeffs[2*k] = Re, coeffs[2*k+1] = Im for interior DOF k.
struct State {
  Vec coeffs;
  std::shared_ptr<const Mesh> mesh;

  State() = default;
  State(Vec c, std::shared_ptr<const Mesh> m) : coeffs(std::move(c)), mesh(std::move(m)) {}

  static State zero(std::shared_ptr<const Mesh> m) {
    const Index n = m->num_dofs();
    return State(Vec::Zero(n), std::move(m));
  }
};

using PointFunction = std::function<std::complex<double>(double, double)>;

/// Nodal interpolation of f at interior nodes (boundary values are dropped).
/// The result is not normalized. Throws InterpolationError on non-finite
/// values.
State interpolate(const std::shared_ptr<const Mesh>& mesh, const PointFunction& f);

/// Multiplication by exp(i*omega), a per-node 2x2 rotation of (Re, Im).
State gauge_rotate(const State& u, double omega);

/// Multiplication by the imaginary unit: (Re, Im) -> (-Im, Re).
State times_i(const State& u);

/// Multiplication by an arbitrary complex scalar.
State scale_complex(const State& u, std::complex<double> c);

/// Same rotation applied directly to a DOF vector.
Vec gauge_rotate_vec(const Vec& v, double omega);
Vec times_i_vec(const Vec& v);

/// Complex sesquilinear pairing reconstructed from the real DOF layout:
/// <a, b>_C = a' B b + i a' B (i b), which equals int a conj(b) when B is the
/// mass matrix (and the analogous pairing for other metric matrices B).
std::complex<double> complex_pairing(const Vec& a, const Vec& b, const SpMat& B);

}  // namespace gpgrad
