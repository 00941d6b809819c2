#include "gpgrad/state.hpp"

#include <cmath>

#include "gpgrad/errors.hpp"

namespace gpgrad {

State interpolate(const std::shared_ptr<const Mesh>& mesh, const PointFunction& f) {
  if (!mesh) throw MeshError("interpolate: null mesh");
  if (!f) throw InterpolationError("interpolate: null function");
  Vec coeffs(mesh->num_dofs());
  for (int k = 0; k < mesh->num_interior(); ++k) {
    const auto& p = mesh->node_coords[mesh->interior_nodes[k]];
    const std::complex<double> value = f(p[0], p[1]);
    if (!std::isfinite(value.real()) || !std::isfinite(value.imag()))
      throw InterpolationError("interpolate: non-finite value at node (" +
                               std::to_string(p[0]) + ", " + std::to_string(p[1]) + ")");
    coeffs[2 * k] = value.real();
    coeffs[2 * k + 1] = value.imag();
  }
  return State(std::move(coeffs), mesh);
}

Vec gauge_rotate_vec(const Vec& v, double omega) {
  const double c = std::cos(omega);
  const double s = std::sin(omega);
  Vec out(v.size());
  for (Index k = 0; k + 1 < v.size(); k += 2) {
    out[k] = c * v[k] - s * v[k + 1];
    out[k + 1] = s * v[k] + c * v[k + 1];
  }
  return out;
}

Vec times_i_vec(const Vec& v) {
  Vec out(v.size());
  for (Index k = 0; k + 1 < v.size(); k += 2) {
    out[k] = -v[k + 1];
    out[k + 1] = v[k];
  }
  return out;
}

State gauge_rotate(const State& u, double omega) {
  return State(gauge_rotate_vec(u.coeffs, omega), u.mesh);
}

State times_i(const State& u) { return State(times_i_vec(u.coeffs), u.mesh); }

State scale_complex(const State& u, std::complex<double> c) {
  Vec out(u.coeffs.size());
  for (Index k = 0; k + 1 < u.coeffs.size(); k += 2) {
    out[k] = c.real() * u.coeffs[k] - c.imag() * u.coeffs[k + 1];
    out[k + 1] = c.imag() * u.coeffs[k] + c.real() * u.coeffs[k + 1];
  }
  return State(std::move(out), u.mesh);
}

std::complex<double> complex_pairing(const Vec& a, const Vec& b, const SpMat& B) {
  const Vec Bb = B * b;
  return {a.dot(Bb), a.dot(times_i_vec(Bb))};
}

}  // namespace gpgrad
