#pragma once

#include <array>
#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "gpgrad/errors.hpp"
#include "gpgrad/types.hpp"

namespace gpgrad {

/// Symmetric quadrature rule on the reference triangle {(0,0),(1,0),(0,1)},
/// stored in barycentric coordinates. Weights sum to the reference area 1/2,
/// so an integral over a physical triangle T is 2*|T| * sum_q w_q f(x_q).
struct Quadrature {
  int order = 0;
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;

  /// Six-point rule, exact for polynomials up to degree 4. This is the rule
  /// used for every quartic-density integral so that the line-search and
  /// energy identities hold to machine precision.
  static Quadrature triangle_degree4();
};

/// Structured P1 triangulation of [-Lx,Lx] x [-Ly,Ly] with n cells per axis,
/// every cell split along the lower-left to upper-right diagonal. Only
/// interior nodes carry degrees of freedom (homogeneous Dirichlet data).
/// Interior DOFs are numbered row-major by (y, x).
struct Mesh {
  double Lx = 0.0;
  double Ly = 0.0;
  int n = 0;  // cells per axis

  std::vector<std::array<double, 2>> node_coords;  // all (n+1)^2 grid nodes
  std::vector<std::array<int, 3>> triangles;       // CCW vertex triples
  std::vector<int> interior_index;                 // node -> DOF, -1 on boundary
  std::vector<int> interior_nodes;                 // DOF -> node

  Quadrature quad;

  double hx = 0.0;
  double hy = 0.0;
  double tri_area = 0.0;

  int num_nodes() const { return static_cast<int>(node_coords.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_interior() const { return static_cast<int>(interior_nodes.size()); }
  /// Real DOF count: one (Re, Im) pair per interior node.
  Index num_dofs() const { return 2 * static_cast<Index>(interior_nodes.size()); }
};

/// Builds the structured mesh. Throws MeshError for n < 2 or non-positive
/// half-widths.
std::shared_ptr<const Mesh> build_mesh(double Lx, double Ly, int n);

}  // namespace gpgrad
