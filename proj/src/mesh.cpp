#include "gpgrad/mesh.hpp"

#include <cmath>

namespace gpgrad {

Quadrature Quadrature::triangle_degree4() {
  // Two symmetric orbits of three points each.
  const double a1 = 0.44594849091596488;
  const double w1 = 0.22338158967801146;
  const double a2 = 0.09157621350977074;
  const double w2 = 0.10995174365532187;

  Quadrature q;
  q.order = 4;
  for (const auto& [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
    const double b = 1.0 - 2.0 * a;
    q.points.push_back({a, a, b});
    q.points.push_back({a, b, a});
    q.points.push_back({b, a, a});
    q.weights.insert(q.weights.end(), 3, 0.5 * w);
  }
  return q;
}

std::shared_ptr<const Mesh> build_mesh(double Lx, double Ly, int n) {
  if (n < 2) throw MeshError("build_mesh: need n >= 2 cells per axis");
  if (!(Lx > 0.0) || !(Ly > 0.0)) throw MeshError("build_mesh: half-widths must be positive");

  auto mesh = std::make_shared<Mesh>();
  mesh->Lx = Lx;
  mesh->Ly = Ly;
  mesh->n = n;
  mesh->hx = 2.0 * Lx / n;
  mesh->hy = 2.0 * Ly / n;
  mesh->tri_area = 0.5 * mesh->hx * mesh->hy;
  mesh->quad = Quadrature::triangle_degree4();

  const int m = n + 1;  // grid nodes per axis
  mesh->node_coords.resize(static_cast<size_t>(m) * m);
  mesh->interior_index.assign(static_cast<size_t>(m) * m, -1);
  for (int iy = 0; iy < m; ++iy) {
    for (int ix = 0; ix < m; ++ix) {
      const int id = iy * m + ix;
      mesh->node_coords[id] = {-Lx + ix * mesh->hx, -Ly + iy * mesh->hy};
      if (ix >= 1 && ix <= n - 1 && iy >= 1 && iy <= n - 1) {
        mesh->interior_index[id] = (iy - 1) * (n - 1) + (ix - 1);
      }
    }
  }
  mesh->interior_nodes.resize(static_cast<size_t>(n - 1) * (n - 1));
  for (int id = 0; id < m * m; ++id) {
    if (mesh->interior_index[id] >= 0) mesh->interior_nodes[mesh->interior_index[id]] = id;
  }

  // Each cell is cut along its lower-left to upper-right diagonal; both
  // triangles are positively oriented.
  mesh->triangles.reserve(2ull * n * n);
  for (int cy = 0; cy < n; ++cy) {
    for (int cx = 0; cx < n; ++cx) {
      const int v00 = cy * m + cx;
      const int v10 = v00 + 1;
      const int v01 = v00 + m;
      const int v11 = v01 + 1;
      mesh->triangles.push_back({v00, v10, v11});
      mesh->triangles.push_back({v00, v11, v01});
    }
  }
  return mesh;
}

}  // namespace gpgrad
