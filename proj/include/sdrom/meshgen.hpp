#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "sdrom/trimesh.hpp"

namespace sdrom {

// Annulus meshed on a polar grid. `resolution` is the radial layer count;
// the azimuthal count is chosen so cells are close to isotropic, which makes
// the triangle count grow quadratically with resolution.
inline TriMesh make_annulus_mesh(double r_inner, double r_outer,
                                 int resolution) {
  if (!(r_inner > 0.0) || !(r_outer > r_inner))
    throw ParameterError("annulus radii must satisfy 0 < r_inner < r_outer");
  if (resolution < 1) throw ParameterError("annulus resolution must be >= 1");
  const int nr = resolution;
  const int ntheta = std::max(
      8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r_outer /
                                    ((r_outer - r_inner) / nr))));
  TriMesh mesh;
  const int tag_inner = mesh.add_tag("inner");
  const int tag_outer = mesh.add_tag("outer");
  mesh.vertices.reserve(static_cast<std::size_t>(nr + 1) * ntheta);
  for (int i = 0; i <= nr; ++i) {
    const double r = r_inner + (r_outer - r_inner) * i / nr;
    for (int j = 0; j < ntheta; ++j) {
      const double th = 2.0 * std::numbers::pi * j / ntheta;
      mesh.vertices.emplace_back(r * std::cos(th), r * std::sin(th));
    }
  }
  auto vid = [ntheta](int i, int j) { return i * ntheta + (j % ntheta); };
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j < ntheta; ++j) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j);
      const int v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }
  for (int j = 0; j < ntheta; ++j) {
    // Inner circle: domain outside, so traverse clockwise.
    mesh.boundary.push_back({vid(0, j + 1), vid(0, j), tag_inner});
    mesh.boundary.push_back({vid(nr, j), vid(nr, j + 1), tag_outer});
  }
  return mesh;
}

// Axis-aligned rectangle [0,w] x [0,h] with nx-by-ny cells, each split along
// the up-right diagonal. tag_scheme selects the boundary naming:
//   "left_right": pressure tags left/right, slip top and bottom
//   "bottom_top": pressure tags bottom/top, slip left and right
inline TriMesh make_rect_mesh(double width, double height, int nx, int ny,
                              const std::string& tag_scheme) {
  if (!(width > 0.0) || !(height > 0.0))
    throw ParameterError("rectangle dimensions must be positive");
  if (nx < 1 || ny < 1) throw ParameterError("rectangle cell counts must be >= 1");
  bool left_right;
  if (tag_scheme == "left_right")
    left_right = true;
  else if (tag_scheme == "bottom_top")
    left_right = false;
  else
    throw ParameterError("unknown tag scheme: " + tag_scheme);
  TriMesh mesh;
  const int tag_left = mesh.add_tag(left_right ? "left" : "slip");
  const int tag_right = left_right ? mesh.add_tag("right") : tag_left;
  const int tag_bottom = mesh.add_tag(left_right ? "slip" : "bottom");
  const int tag_top = left_right ? tag_bottom : mesh.add_tag("top");
  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.vertices.emplace_back(width * i / nx, height * j / ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j);
      const int v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }
  for (int i = 0; i < nx; ++i) {
    mesh.boundary.push_back({vid(i, 0), vid(i + 1, 0), tag_bottom});
    mesh.boundary.push_back({vid(i + 1, ny), vid(i, ny), tag_top});
  }
  for (int j = 0; j < ny; ++j) {
    mesh.boundary.push_back({vid(0, j + 1), vid(0, j), tag_left});
    mesh.boundary.push_back({vid(nx, j), vid(nx, j + 1), tag_right});
  }
  return mesh;
}

namespace detail {

// Deduplicates vertices shared between sextants by a quantized-coordinate key.
class VertexPool {
 public:
  VertexPool(TriMesh& mesh, double scale) : mesh_(mesh), q_(1e-9 * scale) {}

  int insert(const Vec2& p) {
    const std::pair<std::int64_t, std::int64_t> key{
        static_cast<std::int64_t>(std::llround(p.x() / q_)),
        static_cast<std::int64_t>(std::llround(p.y() / q_))};
    auto [it, fresh] = index_.try_emplace(key, mesh_.n_vertices());
    if (fresh) mesh_.vertices.push_back(p);
    return it->second;
  }

 private:
  TriMesh& mesh_;
  double q_;
  std::map<std::pair<std::int64_t, std::int64_t>, int> index_;
};

inline void push_ccw(TriMesh& mesh, int a, int b, int c) {
  const Vec2& p0 = mesh.vertices[a];
  const Vec2& p1 = mesh.vertices[b];
  const Vec2& p2 = mesh.vertices[c];
  const double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) -
                     (p2.x() - p0.x()) * (p1.y() - p0.y());
  if (det > 0.0)
    mesh.triangles.push_back({a, b, c});
  else
    mesh.triangles.push_back({a, c, b});
}

}  // namespace detail

// Regular hexagon centered at the origin with corners at angles k*60 deg and
// circumradius well_distance. A production well hole sits at the center and
// an injection well hole at every corner; only the 120-degree arc inside the
// hexagon is exposed at each corner. Hole arcs are tagged "production" and
// "well_1".."well_6"; the straight outer facets are tagged "slip".
//
// Each sextant (center + two adjacent corners, an equilateral triangle) is
// fan-subdivided: a uniform barycentric lattice with `resolution` rows, the
// three corners trimmed along a lattice layer, and the gaps between trim
// lines and the circular arcs filled with geometrically graded radial fans.
inline TriMesh make_hexagon_mesh(double well_distance, double well_radius,
                                 int resolution) {
  if (!(well_distance > 0.0) || !(well_radius > 0.0))
    throw ParameterError("hexagon dimensions must be positive");
  if (well_radius >= 0.25 * well_distance)
    throw ParameterError("well radius must be below well_distance/4");
  const int k = resolution;
  if (k < 6) throw ParameterError("hexagon resolution must be >= 6");
  const double L = well_distance;
  const double rho = well_radius;
  // Trim layer: far enough outside the hole, deep enough for arc resolution.
  int jc = std::max(2, static_cast<int>(std::lround(k / 5.0)));
  while (jc * L / k * 0.8 < 1.2 * rho) ++jc;
  if (k < 3 * jc)
    throw ParameterError("hexagon resolution too low for this well radius");
  const int mr = jc + 2;  // radial layers in each corner fan

  TriMesh mesh;
  const int tag_slip = mesh.add_tag("slip");
  const int tag_prod = mesh.add_tag("production");
  int tag_well[6];
  for (int w = 0; w < 6; ++w)
    tag_well[w] = mesh.add_tag("well_" + std::to_string(w + 1));
  detail::VertexPool pool(mesh, L);

  const Vec2 center(0.0, 0.0);
  Vec2 corner[6];
  for (int s = 0; s < 6; ++s) {
    const double th = std::numbers::pi / 3.0 * s;
    corner[s] = Vec2(L * std::cos(th), L * std::sin(th));
  }

  for (int s = 0; s < 6; ++s) {
    const Vec2 A = corner[s];
    const Vec2 B = corner[(s + 1) % 6];
    const Vec2 u = A - center;
    const Vec2 v = B - center;
    auto lattice_point = [&](int i, int j) {
      return Vec2(center + (double(i) / k) * u + (double(j) / k) * v);
    };
    auto kept = [&](int i, int j) {
      return i + j >= jc && k - i >= jc && k - j >= jc;
    };
    std::vector<int> ids(static_cast<std::size_t>(k + 1) * (k + 1), -1);
    auto id_at = [&](int i, int j) -> int& {
      return ids[static_cast<std::size_t>(i) * (k + 1) + j];
    };
    for (int i = 0; i <= k; ++i)
      for (int j = 0; i + j <= k; ++j)
        if (kept(i, j)) id_at(i, j) = pool.insert(lattice_point(i, j));
    for (int i = 0; i < k; ++i) {
      for (int j = 0; i + j < k; ++j) {
        if (kept(i, j) && kept(i + 1, j) && kept(i, j + 1))
          detail::push_ccw(mesh, id_at(i, j), id_at(i + 1, j), id_at(i, j + 1));
        if (i + j < k - 1 && kept(i + 1, j) && kept(i + 1, j + 1) &&
            kept(i, j + 1))
          detail::push_ccw(mesh, id_at(i + 1, j), id_at(i + 1, j + 1),
                           id_at(i, j + 1));
      }
    }
    // Corner fans: cut polylines are the trim-layer lattice points.
    struct Fan {
      Vec2 apex;
      std::vector<Vec2> cut;
      int tag;
    };
    std::vector<Fan> fans;
    {
      Fan f{center, {}, tag_prod};
      for (int i = jc; i >= 0; --i) f.cut.push_back(lattice_point(i, jc - i));
      fans.push_back(f);
      Fan g{A, {}, tag_well[s]};
      for (int j = 0; j <= jc; ++j) g.cut.push_back(lattice_point(k - jc, j));
      fans.push_back(g);
      Fan h{B, {}, tag_well[(s + 1) % 6]};
      for (int i = jc; i >= 0; --i) h.cut.push_back(lattice_point(i, k - jc));
      fans.push_back(h);
    }
    for (const auto& fan : fans) {
      const int nc = static_cast<int>(fan.cut.size());
      std::vector<std::vector<int>> grid(nc, std::vector<int>(mr + 1));
      for (int c = 0; c < nc; ++c) {
        const Vec2 d = fan.cut[c] - fan.apex;
        const double R = d.norm();
        const Vec2 dir = d / R;
        for (int l = 0; l <= mr; ++l) {
          const double r = rho * std::pow(R / rho, double(l) / mr);
          grid[c][l] = pool.insert(Vec2(fan.apex + r * dir));
        }
      }
      for (int c = 0; c + 1 < nc; ++c) {
        for (int l = 0; l < mr; ++l) {
          detail::push_ccw(mesh, grid[c][l], grid[c + 1][l], grid[c + 1][l + 1]);
          detail::push_ccw(mesh, grid[c][l], grid[c + 1][l + 1], grid[c][l + 1]);
        }
      }
    }
  }

  // Classify boundary edges: an edge on exactly one triangle is either a hole
  // arc (its midpoint sits at a well radius) or a straight outer facet.
  std::map<std::pair<int, int>, int> use;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) ++use[{t[e], t[(e + 1) % 3]}];
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = t[e];
      const int b = t[(e + 1) % 3];
      if (use.count({b, a})) continue;
      const Vec2 mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b]);
      const double arc_tol = 0.2 * rho;
      int tag = tag_slip;
      if ((mid - center).norm() < rho + arc_tol) {
        tag = tag_prod;
      } else {
        for (int w = 0; w < 6; ++w) {
          if ((mid - corner[w]).norm() < rho + arc_tol) {
            tag = tag_well[w];
            break;
          }
        }
      }
      mesh.boundary.push_back({a, b, tag});
    }
  }
  return mesh;
}

}  // namespace sdrom
